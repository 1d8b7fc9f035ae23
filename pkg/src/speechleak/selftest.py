"""Fast built-in oracle suite: differentiation, DSP, solver, and metric checks
runnable from the CLI without pytest."""

from __future__ import annotations

import numpy as np

from . import dsp, gradients, metrics, reconstruct
from .attack import AdamState, AttackConfig, adam_update
from .dsp import FeatureKind, FrontendConfig
from .fixture import synth_utterance
from .model import (
    CLASS_NAMES,
    PARAM_SHAPES,
    ModelParams,
    activation_signature,
    init_params,
    loss_and_signature,
)

PARAM_FD_EPS = 1e-5
PARAM_FD_RTOL = 1e-4
PARAM_FD_FLOOR = 1e-10  # near-zero components carry only FD rounding noise
INPUT_FD_EPS = 1e-4
INPUT_FD_RTOL = 1e-3
INPUT_FD_FLOOR = 1e-8


def _random_triple(seed: int):
    rng = np.random.default_rng(seed)
    params = init_params(seed)
    grid = rng.standard_normal((dsp.GRID_SIZE, dsp.GRID_SIZE))
    label = int(rng.integers(len(CLASS_NAMES)))
    return params, grid, label


def check_param_gradients(seed: int = 0, components: int = 6) -> int:
    """Spot finite differences on a few components of every parameter tensor,
    resampling any component whose probe crosses a ReLU/pool kink."""
    params, grid, label = _random_triple(seed)
    analytic = gradients.param_gradients(params, grid, label)
    rng = np.random.default_rng(seed + 1)
    checked = 0
    arrays = {name: np.array(getattr(params, name)) for name in PARAM_SHAPES}
    mutable = ModelParams(**arrays)  # shares the arrays; mutate in place for FD
    for name, shape in PARAM_SHAPES.items():
        flat_size = int(np.prod(shape))
        want = min(components, flat_size)
        done = 0
        for idx in rng.permutation(flat_size):
            if done == want:
                break
            multi = np.unravel_index(idx, shape)
            original = arrays[name][multi]
            arrays[name][multi] = original + PARAM_FD_EPS
            hi, sig_hi = loss_and_signature(mutable, grid, label)
            arrays[name][multi] = original - PARAM_FD_EPS
            lo, sig_lo = loss_and_signature(mutable, grid, label)
            arrays[name][multi] = original
            fd = (hi - lo) / (2.0 * PARAM_FD_EPS)
            ref = analytic[name][multi]
            rel = abs(ref - fd) / max(abs(ref), abs(fd), PARAM_FD_FLOOR)
            if rel > PARAM_FD_RTOL:
                if not np.array_equal(sig_hi, sig_lo):
                    continue  # probe straddled a kink; pick another component
                raise AssertionError(f"{name}{multi}: analytic {ref} vs fd {fd} (rel {rel:.2e})")
            done += 1
            checked += 1
    return checked


def check_objective_gradient(seed: int = 0, cells: int = 24) -> int:
    """Finite differences of the attack objective at sampled grid cells."""
    params, grid, label = _random_triple(seed + 10)
    rng = np.random.default_rng(seed + 11)
    target_grid = rng.standard_normal((dsp.GRID_SIZE, dsp.GRID_SIZE))
    target = gradients.param_gradients(params, target_grid, label)
    objective = gradients.InversionObjective(params, target, label, tv_weight=1e-3)
    _, analytic = objective.value_and_grad(grid)
    base = grid.copy()
    checked = 0
    for idx in rng.permutation(grid.size):
        if checked == cells:
            break
        multi = np.unravel_index(idx, grid.shape)
        original = base[multi]
        base[multi] = original + INPUT_FD_EPS
        hi = objective.value(base)
        sig_hi = _input_signature(params, base)
        base[multi] = original - INPUT_FD_EPS
        lo = objective.value(base)
        sig_lo = _input_signature(params, base)
        base[multi] = original
        fd = (hi - lo) / (2.0 * INPUT_FD_EPS)
        ref = analytic[multi]
        rel = abs(ref - fd) / max(abs(ref), abs(fd), INPUT_FD_FLOOR)
        if rel > INPUT_FD_RTOL:
            if not np.array_equal(sig_hi, sig_lo):
                continue  # probe straddled a kink or TV tie
            raise AssertionError(f"cell {multi}: analytic {ref} vs fd {fd} (rel {rel:.2e})")
        checked += 1
    return checked


def _input_signature(params: ModelParams, grid_values: np.ndarray) -> np.ndarray:
    return np.concatenate(
        [activation_signature(params, grid_values), gradients.tv_signature(grid_values)]
    )


def check_label_restoration(n: int = 20) -> int:
    rng = np.random.default_rng(123)
    for i in range(n):
        params = init_params(1000 + i)
        grid = rng.standard_normal((dsp.GRID_SIZE, dsp.GRID_SIZE))
        label = int(rng.integers(len(CLASS_NAMES)))
        restored = gradients.restore_label(gradients.param_gradients(params, grid, label))
        if restored != label:
            raise AssertionError(f"label {label} restored as {restored}")
    return n


def check_adam_reference() -> int:
    cfg = AttackConfig(iterations=10, learning_rate=0.01, tv_weight=0.0, seed=0)
    grid = np.ones((dsp.GRID_SIZE, dsp.GRID_SIZE))
    state = AdamState.zeros()
    m = np.zeros_like(grid)
    v = np.zeros_like(grid)
    ref = grid.copy()
    for t in range(1, 11):
        g = 2.0 * ref
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g**2
        ref = ref - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        state, grid = adam_update(state, grid, 2.0 * grid, cfg)
        if not np.allclose(grid, ref, atol=1e-12, rtol=0.0):
            raise AssertionError(f"Adam trace diverged from reference at step {t}")
    return 10


def check_dsp() -> int:
    wave = synth_utterance("yes", 0)
    grid = dsp.mel_spectrogram_db(wave)
    if grid.values.shape != (32, 32):
        raise AssertionError("mel grid shape")
    doubled = dsp.mel_spectrogram_db(2.0 * wave)
    shift = doubled.values - grid.values
    if not np.allclose(shift, 10.0 * np.log10(4.0), atol=1e-9):
        raise AssertionError("dB scaling under amplitude doubling")
    mfcc_grid, stats = dsp.mfcc_cmvn(wave)
    if not np.allclose(mfcc_grid.values.mean(axis=1), 0.0, atol=1e-9):
        raise AssertionError("CMVN mean not removed")
    return 3


def check_solvers() -> int:
    fb = dsp.build_mel_filterbank(32, 2048)
    rng = np.random.default_rng(7)
    truth = rng.uniform(0.0, 1.0, size=(fb.shape[1], 8))
    target = fb @ truth
    mags, residuals = reconstruct.nnls_mel_to_stft(target, fb, return_residuals=True)
    if np.any(np.diff(residuals) > 1e-10 * residuals[0]):
        raise AssertionError("NNLS residual increased")
    rel = residuals[-1] / np.linalg.norm(target)
    if rel >= 1e-3:
        raise AssertionError(f"NNLS relative residual {rel:.2e} too large")
    wave = synth_utterance("go", 0)
    cfg = FrontendConfig()
    mag = np.sqrt(dsp.stft_power(wave, cfg))
    _, conv = reconstruct.griffin_lim(mag, cfg, return_convergence=True)
    if np.any(np.diff(conv) > 1e-10):
        raise AssertionError("Griffin-Lim spectral convergence increased")
    return 2


def check_metrics() -> int:
    wave = synth_utterance("stop", 0)
    if abs(metrics.stoi(wave, wave) - 1.0) > 1e-6:
        raise AssertionError("stoi(x, x) != 1")
    if metrics.mse_waveform(wave, wave) != 0.0:
        raise AssertionError("mse_waveform identity")
    a = np.array([1.0, 2.0, 3.0])
    if abs(metrics.cosine_similarity(a, 3.0 * a) - 1.0) > 1e-12:
        raise AssertionError("cosine scale invariance")
    return 3


def run(verbose: bool = False) -> int:
    """Run every check; returns a process exit status."""
    checks = [
        ("param_gradients_fd", check_param_gradients),
        ("objective_gradient_fd", check_objective_gradient),
        ("label_restoration", check_label_restoration),
        ("adam_reference", check_adam_reference),
        ("dsp_frontend", check_dsp),
        ("solvers", check_solvers),
        ("metrics", check_metrics),
    ]
    failures = 0
    for name, fn in checks:
        try:
            count = fn()
        except AssertionError as exc:
            failures += 1
            print(f"FAIL {name}: {exc}")
        else:
            if verbose:
                print(f"ok {name} ({count} assertions)")
    if failures:
        print(f"{failures}/{len(checks)} oracle groups failed")
        return 1
    print(f"all {len(checks)} oracle groups passed")
    return 0
