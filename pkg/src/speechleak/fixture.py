"""Bundled synthetic speech fixture: deterministic formant-synthesized tokens
for the ten command words, so tests and demos run without the real corpus."""

from __future__ import annotations

import numpy as np

from .dsp import NUM_SAMPLES, SAMPLE_RATE
from .model import CLASS_NAMES

FIXTURE_BASE_SEED = 20260503
PEAK_AMPLITUDE = 0.85
# Floor level bounds the deepest mel cell, and with it the distance the
# attack optimizer must cover from its zero-centered start: the step budget
# is iterations x learning rate = 80, and tight feature recovery needs a few
# thousand steps of settling after arrival, so the deepest cell must stay
# above roughly -60 dB. The white-heavy floor mix keeps high mel bands from
# dropping far below the floor's total level.
NOISE_FLOOR_DB = -34.0
_FLOOR_MIX_BROWN = 0.35
_FLOOR_MIX_WHITE = 1.0
_GAIN_DB_RANGE = (-2.0, 0.0)
MAX_HARMONIC_HZ = 5000.0
# Active (non-gap) duration band: at least ~0.55 s so silence removal leaves
# a full 384 ms analysis segment, at most ~0.80 s to fit lead/tail placement.
_MIN_ACTIVE_S = 0.55
_MAX_ACTIVE_S = 0.72


def _flank_envelope(n: int, attack_s: float, release_s: float, decay: float = 0.8) -> np.ndarray:
    # raised-cosine attack/release around a gently decaying body
    a = min(max(int(attack_s * SAMPLE_RATE), 8), n // 3)
    r = min(max(int(release_s * SAMPLE_RATE), 8), n // 2)
    env = np.linspace(1.0, decay, n)
    env[:a] *= 0.5 - 0.5 * np.cos(np.pi * np.arange(a) / a)
    env[n - r :] *= 0.5 + 0.5 * np.cos(np.pi * np.arange(r) / r)
    return env


def _am_track(n: int, depth: float, rng: np.random.Generator) -> np.ndarray:
    """Smooth multi-sine amplitude modulation; every band inherits its envelope."""
    t = np.arange(n) / SAMPLE_RATE
    track = np.zeros(n)
    for _ in range(3):
        track += rng.uniform(0.4, 1.0) * np.sin(
            2.0 * np.pi * rng.uniform(2.5, 7.0) * t + rng.uniform(0.0, 2.0 * np.pi)
        )
    track /= np.abs(track).max() + 1e-12
    return 1.0 + depth * track


def _voiced_nucleus(
    n: int,
    f0_start: float,
    f0_end: float,
    centers_start: np.ndarray,
    centers_end: np.ndarray,
    widths: np.ndarray,
    tilt_hz: float,
    am_depth: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Harmonic bank under a gliding 3-formant envelope, syllable-shaped flanks."""
    f0 = np.linspace(f0_start, f0_end, n)
    phase = 2.0 * np.pi * np.cumsum(f0) / SAMPLE_RATE
    frac = np.linspace(0.0, 1.0, n)
    centers = centers_start[:, None] + (centers_end - centers_start)[:, None] * frac
    out = np.zeros(n)
    for k in range(1, int(MAX_HARMONIC_HZ / max(f0_start, f0_end)) + 1):
        freq_k = k * f0
        gain = np.zeros(n)
        for c_track, w in zip(centers, widths):
            gain += np.exp(-0.5 * ((freq_k - c_track) / w) ** 2)
        gain /= 1.0 + (freq_k / tilt_hz) ** 2  # glottal-source rolloff
        if k <= 2:
            gain = gain + 1.5 / k  # voicing bar: strong fundamental region
        out += gain * np.sin(k * phase)
    # aspiration: formant-shaped broadband noise filling interharmonic valleys
    freqs = np.fft.rfftfreq(n, 1.0 / SAMPLE_RATE)
    mid = 0.5 * (centers_start + centers_end)
    shaped = np.zeros(freqs.size)
    for c, w in zip(mid, widths):
        shaped += np.exp(-0.5 * ((freqs - c) / (1.6 * w)) ** 2)
    shaped /= 1.0 + (freqs / tilt_hz) ** 2
    spectrum = shaped * (rng.standard_normal(freqs.size) + 1j * rng.standard_normal(freqs.size))
    breath = np.fft.irfft(spectrum, n=n)
    out += 0.21 * breath * (np.abs(out).max() / (np.abs(breath).max() + 1e-12))
    return out * _am_track(n, am_depth, rng) * _flank_envelope(n, 0.022, 0.05)


def _burst(n: int, center: float, width: float, rng: np.random.Generator) -> np.ndarray:
    """Consonant-like noise burst: shaped spectrum, sharp attack, fast decay."""
    freqs = np.fft.rfftfreq(n, 1.0 / SAMPLE_RATE)
    shaped = np.exp(-0.5 * ((freqs - center) / width) ** 2)
    spectrum = shaped * (rng.standard_normal(freqs.size) + 1j * rng.standard_normal(freqs.size))
    noise = np.fft.irfft(spectrum, n=n)
    noise /= np.abs(noise).max() + 1e-12
    env = np.exp(-np.arange(n) / (0.3 * n))
    attack = max(int(0.003 * SAMPLE_RATE), 4)
    env[:attack] *= np.linspace(0.0, 1.0, attack)
    return noise * env


def _word_recipe(word_index: int) -> dict:
    """Deterministic per-word articulation plan shared by all variants."""
    rng = np.random.default_rng(FIXTURE_BASE_SEED + word_index)
    f0_base = rng.uniform(150.0, 235.0)
    # word-level register: systematic between-word differences in tilt, depth,
    # and floor make dataset-average CMVN statistics wrong for every word
    register = {
        "tilt_hz": rng.uniform(2200.0, 4500.0),
        "am_depth": rng.uniform(0.5, 0.85),
        "floor_db": NOISE_FLOOR_DB + rng.uniform(-2.0, 2.0),
        "active_s": rng.uniform(_MIN_ACTIVE_S, _MAX_ACTIVE_S),
    }
    syllables = []
    for _ in range(2):  # two syllables: alternating energy keeps envelopes informative
        f1 = rng.uniform(500.0, 850.0)
        f2 = rng.uniform(f1 + 450.0, 2300.0)
        f3 = rng.uniform(2400.0, 3300.0)
        drift = rng.uniform(0.8, 1.3, size=3)
        syllables.append(
            {
                "onset_burst": bool(rng.random() < 0.8),
                "coda_burst": bool(rng.random() < 0.5),
                "nucleus_s": float(rng.uniform(0.15, 0.23)),
                "burst_s": float(rng.uniform(0.05, 0.09)),
                "gap_s": float(rng.uniform(0.04, 0.08)),
                "f0": (f0_base * rng.uniform(0.92, 1.1), f0_base * rng.uniform(0.85, 1.05)),
                "centers": (np.array([f1, f2, f3]), np.array([f1, f2, f3]) * drift),
                "widths": rng.uniform(120.0, 210.0, size=3),
                "burst_band": (rng.uniform(1800.0, 4600.0), rng.uniform(400.0, 900.0)),
                "burst_level": float(rng.uniform(0.3, 0.55)),
            }
        )
    if not any(s["onset_burst"] or s["coda_burst"] for s in syllables):
        syllables[0]["onset_burst"] = True  # every word keeps one consonant landmark
    return {"syllables": syllables, "register": register}


def synth_utterance(word: str, variant: int = 0) -> np.ndarray:
    """One deterministic 16000-sample token of the given command word."""
    if word not in CLASS_NAMES:
        raise ValueError(f"unknown word: {word!r}")
    word_index = CLASS_NAMES.index(word)
    recipe = _word_recipe(word_index)
    rng = np.random.default_rng(FIXTURE_BASE_SEED + 1000 * (variant + 1) + word_index)
    pitch_shift = rng.uniform(0.9, 1.12)
    formant_shift = rng.uniform(0.94, 1.07)
    gain_db = rng.uniform(*_GAIN_DB_RANGE)
    time_scale = rng.uniform(0.94, 1.08)
    # variants only perturb the word register; the big tilt/depth/duration
    # spread lives between words so average statistics miss every one of them
    register = recipe["register"]
    tilt_hz = register["tilt_hz"] * rng.uniform(0.95, 1.05)
    am_depth = float(np.clip(register["am_depth"] * rng.uniform(0.9, 1.1), 0.25, 0.85))
    target_active = float(np.clip(register["active_s"] + rng.uniform(-0.03, 0.03), 0.5, 0.85))
    floor_db = register["floor_db"] + rng.uniform(-1.5, 1.5)

    syllables = recipe["syllables"]
    active = sum(
        syl["nucleus_s"] + syl["burst_s"] * (syl["onset_burst"] + syl["coda_burst"])
        for syl in syllables
    ) * time_scale
    time_scale *= target_active / active

    pieces = []
    for i, syl in enumerate(syllables):
        n_burst = int(syl["burst_s"] * time_scale * SAMPLE_RATE)
        n_nucl = int(syl["nucleus_s"] * time_scale * SAMPLE_RATE)
        center, width = syl["burst_band"]
        if syl["onset_burst"]:
            pieces.append(syl["burst_level"] * _burst(n_burst, center, width, rng))
        pieces.append(
            _voiced_nucleus(
                n_nucl,
                syl["f0"][0] * pitch_shift,
                syl["f0"][1] * pitch_shift,
                syl["centers"][0] * formant_shift,
                syl["centers"][1] * formant_shift,
                syl["widths"],
                tilt_hz,
                am_depth,
                rng,
            )
        )
        if syl["coda_burst"]:
            pieces.append(syl["burst_level"] * _burst(n_burst, center * 1.1, width, rng))
        if i + 1 < len(syllables):
            pieces.append(np.zeros(int(syl["gap_s"] * SAMPLE_RATE)))
    word_wave = np.concatenate(pieces)
    word_wave /= np.abs(word_wave).max() + 1e-12

    peak = PEAK_AMPLITUDE * 10.0 ** (gain_db / 20.0)
    start = int(rng.uniform(0.08, 0.85) * (NUM_SAMPLES - word_wave.size))
    wave = np.zeros(NUM_SAMPLES)
    wave[start : start + word_wave.size] = peak * word_wave
    # continuous floor keeps every mel cell off the hard dB clamp
    floor = peak * 10.0 ** (floor_db / 20.0)
    pink = np.cumsum(rng.standard_normal(NUM_SAMPLES))
    pink -= pink.mean()
    pink /= np.abs(pink).max() + 1e-12
    white = rng.standard_normal(NUM_SAMPLES)
    white /= np.abs(white).max()
    wave += floor * (_FLOOR_MIX_BROWN * pink + _FLOOR_MIX_WHITE * white)
    return wave


def fixture_words(variants: int = 1) -> list[tuple[str, int, np.ndarray]]:
    """All fixture tokens as (word, variant, wave), deterministic order."""
    return [
        (word, v, synth_utterance(word, v)) for word in CLASS_NAMES for v in range(variants)
    ]
