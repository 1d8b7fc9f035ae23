"""Waveform reconstruction from feature grids: CMVN/DCT undo for MFCC, NNLS
mel-to-STFT magnitude recovery, Griffin-Lim phase estimation, de-emphasis."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.fft

from .dsp import (
    NUM_SAMPLES,
    CmvnStats,
    FeatureGrid,
    FeatureKind,
    FrontendConfig,
    build_mel_filterbank,
    deemphasize,
    istft,
    stft_complex,
)

NNLS_ITERATIONS = 500


class StatsMode(Enum):
    """How to undo per-utterance CMVN when the true statistics are unknown."""

    ORACLE = "oracle"
    DATASET_AVERAGE = "dataset"
    IDENTITY = "identity"


@dataclass(frozen=True)
class GriffinLimConfig:
    """Phase-estimation settings; frame geometry mirrors the front end."""

    n_iter: int = 32
    random_phase_seed: int | None = None  # None = deterministic zero phase

    def __post_init__(self) -> None:
        if self.n_iter < 1:
            raise ValueError("need at least one iteration")


def db_to_power(values: np.ndarray) -> np.ndarray:
    """Elementwise 10^(x/10); inverse of the dB mapping above its floor."""
    return np.power(10.0, np.asarray(values, dtype=np.float64) / 10.0)


def mfcc_to_mel(
    grid: FeatureGrid,
    stats_mode: StatsMode,
    stats: CmvnStats | None = None,
    *,
    n_mels: int = 128,
) -> np.ndarray:
    """Undo CMVN, zero-pad coefficients, inverse DCT, dB to power (n_mels x 32)."""
    if grid.kind is not FeatureKind.MFCC_CMVN:
        raise ValueError("mfcc_to_mel expects an MFCC grid")
    coeffs = grid.values
    if stats_mode is StatsMode.ORACLE:
        if stats is None:
            raise ValueError("ORACLE stats mode requires the utterance's CMVN stats")
        coeffs = coeffs * stats.std[:, None] + stats.mean[:, None]
    elif stats_mode is StatsMode.DATASET_AVERAGE:
        if stats is None:
            raise ValueError("DATASET_AVERAGE stats mode requires averaged CMVN stats")
        coeffs = coeffs * stats.std[:, None] + stats.mean[:, None]
    elif stats_mode is StatsMode.IDENTITY:
        pass
    else:
        raise ValueError(f"unknown stats mode: {stats_mode!r}")
    if n_mels < coeffs.shape[0]:
        raise ValueError("cannot invert into fewer mel bands than coefficients")
    padded = np.zeros((n_mels, coeffs.shape[1]))
    padded[: coeffs.shape[0]] = coeffs
    mel_db = scipy.fft.dct(padded, type=3, axis=0, norm="ortho")
    return db_to_power(mel_db)


def _spectral_norm_sq(mat: np.ndarray) -> float:
    # largest eigenvalue of mat.T @ mat; exact so the 1/L step stays a descent step
    singular = np.linalg.svd(mat, compute_uv=False)
    return float(singular[0] ** 2) if singular.size else 0.0


def nnls_mel_to_stft(
    mel_power: np.ndarray,
    filterbank: np.ndarray,
    *,
    iterations: int = NNLS_ITERATIONS,
    return_residuals: bool = False,
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Non-negative STFT magnitudes whose filterbank projection approximates
    mel_power; projected gradient descent with a Lipschitz step."""
    m = np.asarray(mel_power, dtype=np.float64)
    fb = np.asarray(filterbank, dtype=np.float64)
    if m.ndim != 2 or fb.ndim != 2 or m.shape[0] != fb.shape[0]:
        raise ValueError("mel band count must match filterbank rows")
    lipschitz = _spectral_norm_sq(fb)
    if lipschitz == 0.0:
        raise ValueError("degenerate filterbank")
    step = 1.0 / lipschitz
    power = np.maximum(fb.T @ m, 0.0)  # non-negative warm start
    residuals = np.empty(iterations + 1)
    diff = fb @ power - m
    residuals[0] = np.linalg.norm(diff)
    for i in range(iterations):
        power = np.maximum(power - step * (fb.T @ diff), 0.0)
        diff = fb @ power - m
        residuals[i + 1] = np.linalg.norm(diff)
    magnitudes = np.sqrt(power)
    if return_residuals:
        return magnitudes, residuals
    return magnitudes


def griffin_lim(
    magnitudes: np.ndarray,
    cfg: FrontendConfig | None = None,
    glc: GriffinLimConfig | None = None,
    *,
    length: int = NUM_SAMPLES,
    return_convergence: bool = False,
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Classic alternating-projection phase recovery from STFT magnitudes."""
    cfg = cfg or FrontendConfig()
    glc = glc or GriffinLimConfig()
    mag = np.asarray(magnitudes, dtype=np.float64)
    if mag.ndim != 2 or mag.shape[0] != cfg.n_fft // 2 + 1:
        raise ValueError("magnitude shape incompatible with frame geometry")
    if np.any(mag < 0.0) or not np.all(np.isfinite(mag)):
        raise ValueError("magnitudes must be finite and non-negative")
    if glc.random_phase_seed is None:
        phase = np.zeros(mag.shape)
    else:
        rng = np.random.default_rng(glc.random_phase_seed)
        phase = rng.uniform(-np.pi, np.pi, size=mag.shape)
    spec = mag * np.exp(1j * phase)
    mag_norm = np.linalg.norm(mag)
    convergence = np.empty(glc.n_iter)
    wave = np.zeros(length)
    for i in range(glc.n_iter):
        wave = istft(spec, cfg, length)
        estimate = stft_complex(wave, cfg)[:, : mag.shape[1]]
        if return_convergence:
            gap = np.linalg.norm(np.abs(estimate) - mag)
            convergence[i] = gap / mag_norm if mag_norm > 0.0 else 0.0
        est_mag = np.abs(estimate)
        unit = np.where(est_mag > 0.0, estimate / np.where(est_mag > 0.0, est_mag, 1.0), 1.0)
        spec = mag * unit
    wave = istft(spec, cfg, length)
    if return_convergence:
        return wave, convergence
    return wave


def _finalize(wave: np.ndarray, cfg: FrontendConfig, length: int) -> np.ndarray:
    out = deemphasize(wave, cfg.preemph_coeff)
    if out.size < length:
        out = np.pad(out, (0, length - out.size))
    return out[:length]


def mel_to_waveform(
    grid: FeatureGrid,
    cfg: FrontendConfig | None = None,
    glc: GriffinLimConfig | None = None,
) -> np.ndarray:
    """dB-mel grid to waveform: dB undo, NNLS, Griffin-Lim, de-emphasis."""
    if grid.kind is not FeatureKind.MEL_DB:
        raise ValueError("mel_to_waveform expects a mel grid")
    cfg = cfg or FrontendConfig()
    fb = build_mel_filterbank(cfg.n_mels_spec, cfg.n_fft, cfg.fmin, cfg.fmax)
    mel_power = db_to_power(grid.values) if cfg.log_mel else np.maximum(grid.values, 0.0)
    magnitudes = nnls_mel_to_stft(mel_power, fb)
    wave = griffin_lim(magnitudes, cfg, glc)
    return _finalize(wave, cfg, NUM_SAMPLES)


def mfcc_to_waveform(
    grid: FeatureGrid,
    stats_mode: StatsMode,
    stats: CmvnStats | None = None,
    cfg: FrontendConfig | None = None,
    glc: GriffinLimConfig | None = None,
) -> np.ndarray:
    """MFCC grid to waveform via the 128-band mel surface."""
    cfg = cfg or FrontendConfig()
    mel_power = mfcc_to_mel(grid, stats_mode, stats, n_mels=cfg.n_mels_mfcc)
    fb = build_mel_filterbank(cfg.n_mels_mfcc, cfg.n_fft, cfg.fmin, cfg.fmax)
    magnitudes = nnls_mel_to_stft(mel_power, fb)
    wave = griffin_lim(magnitudes, cfg, glc)
    return _finalize(wave, cfg, NUM_SAMPLES)
