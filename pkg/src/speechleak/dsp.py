"""Acoustic front end: pre-emphasis, STFT, mel filterbanks, MFCC, and CMVN."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.fft
import scipy.signal

SAMPLE_RATE = 16000
NUM_SAMPLES = 16000
GRID_SIZE = 32

_MEL_F_SP = 200.0 / 3.0
_MEL_MIN_LOG_HZ = 1000.0
_MEL_LOGSTEP = np.log(6.4) / 27.0


class FeatureKind(Enum):
    """Which 32x32 grid the client computes and the attacker recovers."""

    MEL_DB = "mel"
    MFCC_CMVN = "mfcc"


@dataclass(frozen=True)
class FrontendConfig:
    """Front-end parameters; defaults reproduce the reference pipeline."""

    preemph_coeff: float = 0.97
    n_fft: int = 2048
    win_length: int = 2048
    hop_length: int = 512
    n_mels_spec: int = 32
    n_mels_mfcc: int = 128
    n_mfcc: int = 32
    fmin: float = 0.0
    fmax: float = 8000.0
    power_floor: float = 1e-10
    cmvn_std_floor: float = 1e-8
    log_mel: bool = True  # False feeds the model raw power-mel values

    def __post_init__(self) -> None:
        if self.n_fft < 2 or self.win_length < 2 or self.hop_length < 1:
            raise ValueError("degenerate frame geometry")
        if self.win_length > self.n_fft:
            raise ValueError("win_length must not exceed n_fft")
        if self.hop_length > self.win_length:
            raise ValueError("hop_length must not exceed win_length")
        if min(self.n_mels_spec, self.n_mels_mfcc, self.n_mfcc) < 1:
            raise ValueError("band and coefficient counts must be positive")
        if self.n_mfcc > self.n_mels_mfcc:
            raise ValueError("n_mfcc must not exceed n_mels_mfcc")
        if not 0.0 <= self.preemph_coeff < 1.0:
            raise ValueError("preemph_coeff must lie in [0, 1)")
        if not 0.0 <= self.fmin < self.fmax:
            raise ValueError("need 0 <= fmin < fmax")
        if self.fmax > SAMPLE_RATE / 2:
            raise ValueError("fmax above Nyquist")
        if self.power_floor <= 0.0 or self.cmvn_std_floor <= 0.0:
            raise ValueError("floors must be positive")


@dataclass(frozen=True)
class CmvnStats:
    """Per-coefficient normalization statistics of one utterance."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ValueError("mean and std must be equal-length vectors")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(std))):
            raise ValueError("non-finite CMVN statistics")
        if np.any(std <= 0.0):
            raise ValueError("std entries must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


@dataclass(frozen=True)
class FeatureGrid:
    """A 32x32 time-frequency grid, the model input and the attack target."""

    values: np.ndarray
    kind: FeatureKind

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (GRID_SIZE, GRID_SIZE):
            raise ValueError(f"feature grid must be {GRID_SIZE}x{GRID_SIZE}, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite feature values")
        object.__setattr__(self, "values", values)


def preemphasize(wave: np.ndarray, coeff: float = 0.97) -> np.ndarray:
    """First-order high-pass y[n] = x[n] - coeff * x[n-1], y[0] = x[0]."""
    wave = np.asarray(wave, dtype=np.float64)
    out = np.empty_like(wave)
    out[0] = wave[0]
    out[1:] = wave[1:] - coeff * wave[:-1]
    return out


def deemphasize(wave: np.ndarray, coeff: float = 0.97) -> np.ndarray:
    """Exact inverse of preemphasize: y[n] = x[n] + coeff * y[n-1]."""
    wave = np.asarray(wave, dtype=np.float64)
    return scipy.signal.lfilter([1.0], [1.0, -coeff], wave)


def hamming_periodic(length: int) -> np.ndarray:
    """Periodic Hamming window, 0.54 - 0.46 cos(2 pi n / N)."""
    if length < 1:
        raise ValueError("window length must be positive")
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(length) / length)


def _fft_window(cfg: FrontendConfig) -> np.ndarray:
    # win_length-sample window centered inside the n_fft analysis slot
    win = hamming_periodic(cfg.win_length)
    if cfg.win_length == cfg.n_fft:
        return win
    padded = np.zeros(cfg.n_fft)
    start = (cfg.n_fft - cfg.win_length) // 2
    padded[start : start + cfg.win_length] = win
    return padded


def frame_count(num_samples: int, cfg: FrontendConfig) -> int:
    """Number of centered analysis frames for a signal of num_samples."""
    return 1 + (num_samples + 2 * (cfg.n_fft // 2) - cfg.n_fft) // cfg.hop_length


def stft_complex(wave: np.ndarray, cfg: FrontendConfig) -> np.ndarray:
    """Centered windowed STFT, reflect padding; (n_fft//2 + 1, frames) complex."""
    wave = np.asarray(wave, dtype=np.float64)
    if wave.ndim != 1 or wave.size < 2:
        raise ValueError("wave must be a 1-D signal with at least 2 samples")
    pad = cfg.n_fft // 2
    padded = np.pad(wave, pad, mode="reflect")
    n_frames = 1 + (padded.size - cfg.n_fft) // cfg.hop_length
    window = _fft_window(cfg)
    frames = np.empty((cfg.n_fft, n_frames))
    for t in range(n_frames):
        start = t * cfg.hop_length
        frames[:, t] = padded[start : start + cfg.n_fft]
    return np.fft.rfft(frames * window[:, None], axis=0)


def istft(
    spec: np.ndarray, cfg: FrontendConfig, length: int, *, normalization_floor: float = 1e-12
) -> np.ndarray:
    """Overlap-add inverse STFT with window-square normalization."""
    spec = np.asarray(spec, dtype=np.complex128)
    if spec.ndim != 2 or spec.shape[0] != cfg.n_fft // 2 + 1:
        raise ValueError("spectrogram shape incompatible with n_fft")
    n_frames = spec.shape[1]
    window = _fft_window(cfg)
    frames = np.fft.irfft(spec, n=cfg.n_fft, axis=0)
    total = cfg.n_fft + cfg.hop_length * (n_frames - 1)
    signal = np.zeros(total)
    win_sq = np.zeros(total)
    for t in range(n_frames):
        start = t * cfg.hop_length
        signal[start : start + cfg.n_fft] += frames[:, t] * window
        win_sq[start : start + cfg.n_fft] += window**2
    pad = cfg.n_fft // 2
    signal = signal[pad : pad + length]
    win_sq = win_sq[pad : pad + length]
    if signal.size < length:
        raise ValueError("spectrogram too short for requested length")
    if np.any(win_sq < normalization_floor):
        raise ValueError("window-square normalization vanishes inside output range")
    return signal / win_sq


def stft_power(wave: np.ndarray, cfg: FrontendConfig) -> np.ndarray:
    """Power spectrogram |STFT|^2, shape (n_fft//2 + 1, frames)."""
    spec = stft_complex(wave, cfg)
    return (spec.real**2 + spec.imag**2).astype(np.float64)


def hz_to_mel(freq_hz: np.ndarray | float) -> np.ndarray:
    """Hz to mel, linear below 1 kHz and logarithmic above."""
    freq = np.asarray(freq_hz, dtype=np.float64)
    mel = freq / _MEL_F_SP
    min_log_mel = _MEL_MIN_LOG_HZ / _MEL_F_SP
    log_region = freq >= _MEL_MIN_LOG_HZ
    safe = np.maximum(freq, _MEL_MIN_LOG_HZ)
    return np.where(log_region, min_log_mel + np.log(safe / _MEL_MIN_LOG_HZ) / _MEL_LOGSTEP, mel)


def mel_to_hz(mel: np.ndarray | float) -> np.ndarray:
    """Inverse of hz_to_mel."""
    mel = np.asarray(mel, dtype=np.float64)
    freq = _MEL_F_SP * mel
    min_log_mel = _MEL_MIN_LOG_HZ / _MEL_F_SP
    log_region = mel >= min_log_mel
    safe = np.maximum(mel, min_log_mel)
    return np.where(log_region, _MEL_MIN_LOG_HZ * np.exp(_MEL_LOGSTEP * (safe - min_log_mel)), freq)


def build_mel_filterbank(
    n_mels: int,
    n_fft: int,
    fmin: float = 0.0,
    fmax: float = 8000.0,
    sample_rate: int = SAMPLE_RATE,
) -> np.ndarray:
    """Area-normalized triangular mel filterbank, shape (n_mels, n_fft//2 + 1)."""
    if n_mels < 1:
        raise ValueError("n_mels must be positive")
    if not 0.0 <= fmin < fmax:
        raise ValueError("need 0 <= fmin < fmax")
    if fmax > sample_rate / 2:
        raise ValueError("fmax above Nyquist")
    fft_freqs = np.linspace(0.0, sample_rate / 2.0, 1 + n_fft // 2)
    mel_pts = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    fdiff = np.diff(mel_pts)
    ramps = mel_pts[:, None] - fft_freqs[None, :]
    lower = -ramps[:-2] / fdiff[:-1, None]
    upper = ramps[2:] / fdiff[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    # each triangle normalized to unit area in Hz
    weights *= (2.0 / (mel_pts[2:] - mel_pts[:-2]))[:, None]
    if np.any(weights.max(axis=1) <= 0.0):
        raise ValueError("a mel filter has no support; widen fft or lower n_mels")
    return weights


def power_to_db(power: np.ndarray, floor: float = 1e-10) -> np.ndarray:
    """10 * log10(max(power, floor)); no peak-relative clipping."""
    if floor <= 0.0:
        raise ValueError("floor must be positive")
    return 10.0 * np.log10(np.maximum(np.asarray(power, dtype=np.float64), floor))


def _validate_wave_for_grid(wave: np.ndarray) -> np.ndarray:
    wave = np.asarray(wave, dtype=np.float64)
    if wave.shape != (NUM_SAMPLES,):
        raise ValueError(f"expected a {NUM_SAMPLES}-sample mono wave, got shape {wave.shape}")
    return wave


def mel_spectrogram_db(wave: np.ndarray, cfg: FrontendConfig | None = None) -> FeatureGrid:
    """32-band mel grid of a 1 s utterance (dB by default, power if cfg.log_mel=False)."""
    cfg = cfg or FrontendConfig()
    wave = _validate_wave_for_grid(wave)
    power = stft_power(preemphasize(wave, cfg.preemph_coeff), cfg)
    fbank = build_mel_filterbank(cfg.n_mels_spec, cfg.n_fft, cfg.fmin, cfg.fmax)
    mel = fbank @ power
    if cfg.log_mel:
        mel = power_to_db(mel, cfg.power_floor)
    return FeatureGrid(mel, FeatureKind.MEL_DB)


def cmvn(values: np.ndarray, std_floor: float = 1e-8) -> tuple[np.ndarray, CmvnStats]:
    """Per-row mean/variance normalization across frames; returns stats used."""
    values = np.asarray(values, dtype=np.float64)
    mean = values.mean(axis=1)
    std = np.maximum(values.std(axis=1), std_floor)
    return (values - mean[:, None]) / std[:, None], CmvnStats(mean, std)


def cmvn_invert(values: np.ndarray, stats: CmvnStats) -> np.ndarray:
    """Undo cmvn given the statistics it produced."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] != stats.mean.size:
        raise ValueError("stats length does not match coefficient rows")
    return values * stats.std[:, None] + stats.mean[:, None]


def mfcc_cmvn(
    wave: np.ndarray, cfg: FrontendConfig | None = None
) -> tuple[FeatureGrid, CmvnStats]:
    """32-coefficient CMVN MFCC grid from a 128-band log-mel spectrogram."""
    cfg = cfg or FrontendConfig()
    wave = _validate_wave_for_grid(wave)
    power = stft_power(preemphasize(wave, cfg.preemph_coeff), cfg)
    fbank = build_mel_filterbank(cfg.n_mels_mfcc, cfg.n_fft, cfg.fmin, cfg.fmax)
    mel_db = power_to_db(fbank @ power, cfg.power_floor)
    coeffs = scipy.fft.dct(mel_db, type=2, axis=0, norm="ortho")[: cfg.n_mfcc]
    normalized, stats = cmvn(coeffs, cfg.cmvn_std_floor)
    return FeatureGrid(normalized, FeatureKind.MFCC_CMVN), stats


def extract_features(
    wave: np.ndarray, kind: FeatureKind, cfg: FrontendConfig | None = None
) -> tuple[FeatureGrid, CmvnStats | None]:
    """Compute the grid of the requested kind; CMVN stats only for MFCC."""
    if kind is FeatureKind.MEL_DB:
        return mel_spectrogram_db(wave, cfg), None
    if kind is FeatureKind.MFCC_CMVN:
        return mfcc_cmvn(wave, cfg)
    raise ValueError(f"unknown feature kind: {kind!r}")
