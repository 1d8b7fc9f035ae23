"""Leakage scoring: feature/waveform MSE, STOI intelligibility, cosine similarity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.signal

from .dsp import FeatureGrid

STOI_RATE = 10000
STOI_FRAME = 256
STOI_HOP = 128
STOI_FFT = 512
STOI_BANDS = 15
STOI_MIN_FREQ = 150.0
STOI_SEGMENT = 30  # frames per analysis segment (384 ms at 10 kHz)
STOI_CLIP_DB = -15.0
STOI_DYN_RANGE = 40.0

_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class ReconstructionReport:
    """Scores of one reconstructed sample, one pathway."""

    sample_id: str
    word: str
    feature_kind: str
    pathway: str
    f_mse: float
    w_mse: float
    stoi_score: float
    final_loss: float | None
    label_ok: bool | None
    seconds: float
    error: str = ""


def mse_feature(a: FeatureGrid, b: FeatureGrid) -> float:
    """Mean squared error over all grid cells."""
    if a.kind is not b.kind:
        raise ValueError("feature kinds differ")
    if a.values.shape != b.values.shape:
        raise ValueError("feature shapes differ")
    return float(np.mean((a.values - b.values) ** 2))


def mse_waveform(reference: np.ndarray, degraded: np.ndarray) -> float:
    """Mean squared sample difference; no gain normalization or alignment."""
    ref = np.asarray(reference, dtype=np.float64)
    deg = np.asarray(degraded, dtype=np.float64)
    if ref.shape != deg.shape or ref.ndim != 1:
        raise ValueError("waveform lengths differ")
    return float(np.mean((ref - deg) ** 2))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """dot(a, b) / (||a|| ||b||)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or a.size != b.size:
        raise ValueError("embeddings must be equal nonzero length")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero-norm embedding")
    return float(a @ b / (na * nb))


def load_embedding_rows(path: str) -> list[np.ndarray]:
    """Parse plain-text embeddings, one whitespace-separated vector per line."""
    rows: list[np.ndarray] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(np.array([float(tok) for tok in line.split()]))
    return rows


def resample_to_10k(wave: np.ndarray, sample_rate: int = 16000) -> np.ndarray:
    """Polyphase windowed-sinc resampler to 10 kHz (kaiser beta 6, 161 taps)."""
    wave = np.asarray(wave, dtype=np.float64)
    if sample_rate == STOI_RATE:
        return wave.copy()
    if sample_rate != 16000:
        raise ValueError("only 16 kHz input supported")
    up, down = 5, 8
    taps = scipy.signal.firwin(161, 1.0 / down, window=("kaiser", 6.0)) * up
    resampled = scipy.signal.upfirdn(taps, wave, up=up, down=down)
    delay = (len(taps) // 2) // down
    out_len = int(np.ceil(wave.size * up / down))
    return resampled[delay : delay + out_len]


def _third_octave_bands(
    rate: int, n_fft: int, n_bands: int, min_freq: float
) -> np.ndarray:
    freqs = np.linspace(0.0, rate / 2.0, n_fft // 2 + 1)
    k = np.arange(n_bands, dtype=np.float64)
    low = min_freq * 2.0 ** ((2.0 * k - 1.0) / 6.0)
    high = min_freq * 2.0 ** ((2.0 * k + 1.0) / 6.0)
    obm = np.zeros((n_bands, freqs.size))
    for j in range(n_bands):
        lo_bin = int(np.argmin(np.abs(freqs - low[j])))
        hi_bin = int(np.argmin(np.abs(freqs - high[j])))
        obm[j, lo_bin:hi_bin] = 1.0
    return obm


def _frame_starts(n: int, frame: int, hop: int) -> range:
    return range(0, n - frame + 1, hop)


def _remove_silent_frames(
    x: np.ndarray, y: np.ndarray, dyn_range: float, frame: int, hop: int
) -> tuple[np.ndarray, np.ndarray]:
    window = np.hanning(frame + 2)[1:-1]
    starts = list(_frame_starts(x.size, frame, hop))
    if not starts:
        raise ValueError("signal shorter than one analysis frame")
    energies = np.array(
        [20.0 * np.log10(np.linalg.norm(window * x[s : s + frame]) + _EPS) for s in starts]
    )
    keep = energies > energies.max() - dyn_range
    if not np.any(keep):
        raise ValueError("no frames above the silence threshold")
    kept = np.flatnonzero(keep)
    out_len = frame + hop * (kept.size - 1)
    x_out = np.zeros(out_len)
    y_out = np.zeros(out_len)
    for pos, idx in enumerate(kept):
        s_in, s_out = starts[idx], pos * hop
        x_out[s_out : s_out + frame] += window * x[s_in : s_in + frame]
        y_out[s_out : s_out + frame] += window * y[s_in : s_in + frame]
    return x_out, y_out


def _band_envelopes(x: np.ndarray, obm: np.ndarray, frame: int, hop: int, n_fft: int) -> np.ndarray:
    window = np.hanning(frame + 2)[1:-1]
    starts = list(_frame_starts(x.size, frame, hop))
    spec = np.empty((n_fft // 2 + 1, len(starts)), dtype=np.complex128)
    for t, s in enumerate(starts):
        spec[:, t] = np.fft.rfft(window * x[s : s + frame], n=n_fft)
    return np.sqrt(obm @ (spec.real**2 + spec.imag**2))


def stoi(reference: np.ndarray, degraded: np.ndarray, sample_rate: int = 16000) -> float:
    """Short-time objective intelligibility of degraded speech vs reference.

    Resamples to 10 kHz, drops frames 40 dB below the loudest reference frame,
    correlates one-third-octave band envelopes over 384 ms segments with
    per-segment normalization and -15 dB SDR clipping, and averages."""
    ref = np.asarray(reference, dtype=np.float64)
    deg = np.asarray(degraded, dtype=np.float64)
    if ref.shape != deg.shape or ref.ndim != 1:
        raise ValueError("signals must be 1-D and equal length")
    if not np.any(ref):
        raise ValueError("reference has no non-silent frames")
    ref = resample_to_10k(ref, sample_rate)
    deg = resample_to_10k(deg, sample_rate)
    ref, deg = _remove_silent_frames(ref, deg, STOI_DYN_RANGE, STOI_FRAME, STOI_HOP)
    obm = _third_octave_bands(STOI_RATE, STOI_FFT, STOI_BANDS, STOI_MIN_FREQ)
    x = _band_envelopes(ref, obm, STOI_FRAME, STOI_HOP, STOI_FFT)
    y = _band_envelopes(deg, obm, STOI_FRAME, STOI_HOP, STOI_FFT)
    if x.shape[1] < STOI_SEGMENT:
        raise ValueError("too few non-silent frames for one analysis segment")
    clip_gain = 10.0 ** (-STOI_CLIP_DB / 20.0)
    correlations = []
    for m in range(STOI_SEGMENT, x.shape[1] + 1):
        x_seg = x[:, m - STOI_SEGMENT : m]
        y_seg = y[:, m - STOI_SEGMENT : m]
        alpha = np.sqrt(
            (x_seg**2).sum(axis=1, keepdims=True)
            / ((y_seg**2).sum(axis=1, keepdims=True) + _EPS)
        )
        y_norm = np.minimum(y_seg * alpha, x_seg * (1.0 + clip_gain))
        xc = x_seg - x_seg.mean(axis=1, keepdims=True)
        yc = y_norm - y_norm.mean(axis=1, keepdims=True)
        num = (xc * yc).sum(axis=1)
        den = np.linalg.norm(xc, axis=1) * np.linalg.norm(yc, axis=1) + _EPS
        correlations.append(num / den)
    return float(np.mean(correlations))
