"""Feature recovery from shared gradients: label restoration, Adam optimization
of the gradient-matching objective, best-of-trials selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import GRID_SIZE, FeatureGrid, FeatureKind
from .gradients import GradientSet, InversionObjective, restore_label
from .model import ModelParams


@dataclass(frozen=True)
class AttackConfig:
    """Optimizer and search settings for gradient inversion."""

    iterations: int = 8000
    learning_rate: float = 0.01
    tv_weight: float = 0.001
    trials: int = 2
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    init_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.tv_weight < 0.0:
            raise ValueError("tv_weight must be non-negative")
        if not 0.0 <= self.adam_beta1 < 1.0 or not 0.0 <= self.adam_beta2 < 1.0:
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.adam_epsilon <= 0.0:
            raise ValueError("adam_epsilon must be positive")


@dataclass
class AdamState:
    """First/second moment estimates and step counter for one grid."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, shape: tuple[int, int] = (GRID_SIZE, GRID_SIZE)) -> "AdamState":
        return cls(np.zeros(shape), np.zeros(shape), 0)


def adam_update(
    state: AdamState, grid_values: np.ndarray, gradient: np.ndarray, cfg: AttackConfig
) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam step; returns new state and updated grid."""
    grad = np.asarray(gradient, dtype=np.float64)
    if grad.shape != state.m.shape or grad.shape != np.shape(grid_values):
        raise ValueError("gradient shape does not match grid/state")
    if not np.all(np.isfinite(grad)):
        raise ValueError("non-finite gradient")
    t = state.step + 1
    m = cfg.adam_beta1 * state.m + (1.0 - cfg.adam_beta1) * grad
    v = cfg.adam_beta2 * state.v + (1.0 - cfg.adam_beta2) * grad**2
    m_hat = m / (1.0 - cfg.adam_beta1**t)
    v_hat = v / (1.0 - cfg.adam_beta2**t)
    updated = grid_values - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_epsilon)
    return AdamState(m, v, t), updated


@dataclass(frozen=True)
class AttackResult:
    """Winning reconstruction of one sample's features."""

    grid: FeatureGrid
    label: int
    final_objective: float
    trace: np.ndarray
    trial: int


class AttackFailure(RuntimeError):
    """Every trial diverged; carries per-trial diagnostics."""

    def __init__(self, diagnostics: list[str]) -> None:
        super().__init__("all attack trials diverged: " + "; ".join(diagnostics))
        self.diagnostics = diagnostics


def _run_trial(
    objective: InversionObjective, cfg: AttackConfig, trial: int
) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(cfg.seed + trial)
    grid = cfg.init_scale * rng.standard_normal((GRID_SIZE, GRID_SIZE))
    state = AdamState.zeros()
    trace = np.empty(cfg.iterations)
    _, grad = objective.value_and_grad(grid)
    for i in range(cfg.iterations):
        state, grid = adam_update(state, grid, grad, cfg)
        value, grad = objective.value_and_grad(grid)
        if not np.isfinite(value):
            raise FloatingPointError(f"objective became non-finite at iteration {i + 1}")
        trace[i] = value
    return grid, trace


def invert_features(
    target: GradientSet,
    params: ModelParams,
    kind: FeatureKind,
    cfg: AttackConfig,
) -> AttackResult:
    """Restore the label, then recover the feature grid by best-of-trials
    Adam descent on the gradient-matching objective. Sees only gradients."""
    label = restore_label(target)
    objective = InversionObjective(params, target, label, cfg.tv_weight)
    best: tuple[np.ndarray, np.ndarray] | None = None
    best_final = np.inf
    best_trial = -1
    failures: list[str] = []
    for trial in range(cfg.trials):
        try:
            grid, trace = _run_trial(objective, cfg, trial)
        except (FloatingPointError, ValueError) as exc:
            failures.append(f"trial {trial}: {exc}")
            continue
        final = float(trace[-1]) if cfg.iterations > 0 else objective.value(grid)
        if final < best_final:
            best, best_final, best_trial = (grid, trace), final, trial
    if best is None:
        raise AttackFailure(failures)
    grid, trace = best
    return AttackResult(
        grid=FeatureGrid(grid, kind),
        label=label,
        final_objective=best_final,
        trace=trace,
        trial=best_trial,
    )
