"""Experiment orchestration: dataset manifests, client-step simulation, the
attack/reconstruction/scoring pipeline, and CSV/WAV/grid exports."""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fixture, storage
from .attack import AttackConfig, AttackResult, invert_features
from .dsp import CmvnStats, FeatureGrid, FeatureKind, FrontendConfig, extract_features
from .gradients import GradientSet, param_gradients
from .metrics import ReconstructionReport, mse_feature, mse_waveform, stoi
from .model import CLASS_NAMES, ModelParams, init_params
from .reconstruct import GriffinLimConfig, StatsMode, mel_to_waveform, mfcc_to_waveform

DATASET_ENV_VAR = "SPEECHLEAK_DATASET"
FIXTURE_DATASET = "fixture"

CSV_COLUMNS = (
    "sample_id",
    "word",
    "feature_kind",
    "pathway",
    "f_mse",
    "w_mse",
    "stoi",
    "final_loss",
    "label_ok",
    "seconds",
    "error",
)
TIMING_COLUMNS = ("seconds",)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    word: str
    tag: str = "dataset"

    def __post_init__(self) -> None:
        if self.word not in CLASS_NAMES:
            raise ValueError(f"label {self.word!r} outside the 10-word vocabulary")


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    vocabulary: tuple[str, ...] = CLASS_NAMES

    def __post_init__(self) -> None:
        paths = [e.path for e in self.entries]
        if len(set(paths)) != len(paths):
            raise ValueError("duplicate paths in manifest")


@dataclass(frozen=True)
class ExperimentConfig:
    feature_kind: FeatureKind = FeatureKind.MEL_DB
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    griffin_lim: GriffinLimConfig = field(default_factory=GriffinLimConfig)
    model_seed: int = 0
    sample_count: int = 10
    out_dir: str = "out"
    stats_mode: StatsMode = StatsMode.DATASET_AVERAGE
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.sample_count < 1:
            raise ValueError("sample count must be at least 1")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")


def build_manifest(dataset_root: str | Path, seed: int, n: int) -> DatasetManifest:
    """Seeded balanced selection of n files from a <root>/<word>/*.wav layout."""
    root = Path(dataset_root)
    missing = [w for w in CLASS_NAMES if not (root / w).is_dir()]
    if missing:
        raise FileNotFoundError(f"dataset at {root} lacks word directories: {missing}")
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    per_word = {w: sorted(p.name for p in (root / w).glob("*.wav")) for w in CLASS_NAMES}
    for w, files in per_word.items():
        if not files:
            raise FileNotFoundError(f"no WAV files under {root / w}")
    entries: list[ManifestEntry] = []
    base, extra = divmod(n, len(CLASS_NAMES))
    for i, word in enumerate(CLASS_NAMES):
        want = base + (1 if i < extra else 0)
        files = per_word[word]
        take = min(want, len(files))
        picks = rng.choice(len(files), size=take, replace=False)
        entries.extend(
            ManifestEntry(str(root / word / files[j]), word) for j in sorted(picks)
        )
    return DatasetManifest(tuple(entries))


def write_fixture_dataset(target_dir: str | Path, variants: int = 2) -> Path:
    """Materialize the synthetic fixture as a dataset directory; idempotent."""
    target = Path(target_dir)
    for word, variant, wave in fixture.fixture_words(variants):
        path = target / word / f"fixture_{variant}.wav"
        if not path.exists():
            storage.save_wav(path, wave)
    return target


def resolve_dataset_root(requested: str | None, scratch_dir: str | Path) -> Path:
    """Pick the dataset: explicit path, env override, or generated fixture."""
    chosen = requested or os.environ.get(DATASET_ENV_VAR) or FIXTURE_DATASET
    if chosen == FIXTURE_DATASET:
        return write_fixture_dataset(Path(scratch_dir) / "fixture_wavs")
    return Path(chosen)


def simulate_client(
    params: ModelParams,
    wave: np.ndarray,
    label: int,
    kind: FeatureKind,
    cfg: FrontendConfig | None = None,
) -> GradientSet:
    """One client step: features from the private wave, loss gradients out.

    Only the gradient set leaves this function; the features it computes
    internally are never returned, mirroring the deployment boundary."""
    grid, _ = extract_features(wave, kind, cfg)
    return param_gradients(params, grid.values, label)


def dataset_average_stats(
    manifest: DatasetManifest, cfg: FrontendConfig | None = None
) -> CmvnStats:
    """CMVN statistics averaged over a manifest; the attacker-side stand-in
    for per-utterance statistics it cannot observe."""
    cfg = cfg or FrontendConfig()
    means, stds = [], []
    for entry in manifest.entries:
        wave = storage.load_wav(entry.path)
        _, stats = extract_features(wave, FeatureKind.MFCC_CMVN, cfg)
        means.append(stats.mean)
        stds.append(stats.std)
    return CmvnStats(np.mean(means, axis=0), np.mean(stds, axis=0))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def _report_row(report: ReconstructionReport) -> dict[str, str]:
    return {
        "sample_id": report.sample_id,
        "word": report.word,
        "feature_kind": report.feature_kind,
        "pathway": report.pathway,
        "f_mse": _fmt(report.f_mse),
        "w_mse": _fmt(report.w_mse),
        "stoi": _fmt(report.stoi_score),
        "final_loss": _fmt(report.final_loss),
        "label_ok": _fmt(report.label_ok),
        "seconds": _fmt(report.seconds),
        "error": report.error,
    }


def reconstruct_waveform(
    grid: FeatureGrid,
    cfg: ExperimentConfig,
    oracle_stats: CmvnStats | None,
    average_stats: CmvnStats | None,
    pathway: str,
) -> np.ndarray:
    if cfg.feature_kind is FeatureKind.MEL_DB:
        return mel_to_waveform(grid, cfg.frontend, cfg.griffin_lim)
    if pathway == "features":
        # feature-inversion baseline: the owner knows its own statistics
        return mfcc_to_waveform(grid, StatsMode.ORACLE, oracle_stats, cfg.frontend, cfg.griffin_lim)
    stats = {
        StatsMode.ORACLE: oracle_stats,
        StatsMode.DATASET_AVERAGE: average_stats,
        StatsMode.IDENTITY: None,
    }[cfg.stats_mode]
    return mfcc_to_waveform(grid, cfg.stats_mode, stats, cfg.frontend, cfg.griffin_lim)


def _process_sample(
    index: int,
    entry: ManifestEntry,
    cfg: ExperimentConfig,
    params: ModelParams,
    average_stats: CmvnStats | None,
    export: bool,
) -> tuple[list[ReconstructionReport], dict]:
    sample_id = f"s{index:04d}_{entry.word}"
    kind = cfg.feature_kind
    out = Path(cfg.out_dir)
    started = time.perf_counter()
    reports: list[ReconstructionReport] = []
    artifacts: dict = {"sample_id": sample_id}
    wave = storage.load_wav(entry.path)
    label = CLASS_NAMES.index(entry.word)
    true_grid, oracle_stats = extract_features(wave, kind, cfg.frontend)

    baseline_wave = reconstruct_waveform(true_grid, cfg, oracle_stats, average_stats, "features")
    baseline_seconds = time.perf_counter() - started
    baseline_stoi = stoi(wave, baseline_wave)
    reports.append(
        ReconstructionReport(
            sample_id=sample_id,
            word=entry.word,
            feature_kind=kind.value,
            pathway="features",
            f_mse=0.0,
            w_mse=mse_waveform(wave, baseline_wave),
            stoi_score=baseline_stoi,
            final_loss=None,
            label_ok=None,
            seconds=baseline_seconds,
        )
    )

    attack_started = time.perf_counter()
    grads = simulate_client(params, wave, label, kind, cfg.frontend)
    result: AttackResult = invert_features(grads, params, kind, cfg.attack)
    recon_wave = reconstruct_waveform(result.grid, cfg, oracle_stats, average_stats, "gradients")
    attack_seconds = time.perf_counter() - attack_started
    reports.append(
        ReconstructionReport(
            sample_id=sample_id,
            word=entry.word,
            feature_kind=kind.value,
            pathway="gradients",
            f_mse=mse_feature(true_grid, result.grid),
            w_mse=mse_waveform(wave, recon_wave),
            stoi_score=stoi(wave, recon_wave),
            final_loss=result.final_objective,
            label_ok=result.label == label,
            seconds=attack_seconds,
        )
    )

    if export:
        storage.save_wav(out / "wav" / f"{sample_id}_original.wav", wave)
        storage.save_wav(out / "wav" / f"{sample_id}_{kind.value}_features.wav", baseline_wave)
        storage.save_wav(out / "wav" / f"{sample_id}_{kind.value}_gradients.wav", recon_wave)
        storage.save_grid(out / "grids" / f"{sample_id}_{kind.value}_true.fgrid", true_grid)
        storage.save_grid(out / "grids" / f"{sample_id}_{kind.value}_recovered.fgrid", result.grid)
        artifacts["trace"] = result.trace
    return reports, artifacts


def _process_sample_guarded(args) -> list[ReconstructionReport]:
    index, entry, cfg, params, average_stats, export = args
    try:
        reports, _ = _process_sample(index, entry, cfg, params, average_stats, export)
        return reports
    except Exception as exc:  # per-sample failures must not sink the batch
        return [
            ReconstructionReport(
                sample_id=f"s{index:04d}_{entry.word}",
                word=entry.word,
                feature_kind=cfg.feature_kind.value,
                pathway="gradients",
                f_mse=float("nan"),
                w_mse=float("nan"),
                stoi_score=float("nan"),
                final_loss=None,
                label_ok=None,
                seconds=0.0,
                error=f"{type(exc).__name__}: {exc}",
            )
        ]


def _write_csv(path: Path, rows: list[dict[str, str]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def summarize(rows: list[dict[str, str]]) -> list[dict[str, str]]:
    """Mean/std summary per (feature_kind, pathway) over clean rows."""
    groups: dict[tuple[str, str], dict[str, list[float]]] = {}
    for row in rows:
        if row.get("error"):
            continue
        key = (row["feature_kind"], row["pathway"])
        bucket = groups.setdefault(key, {"f_mse": [], "w_mse": [], "stoi": []})
        for metric in ("f_mse", "w_mse", "stoi"):
            if row[metric] != "":
                bucket[metric].append(float(row[metric]))
    out = []
    for (kind, pathway), bucket in sorted(groups.items()):
        for metric, values in bucket.items():
            if not values:
                continue
            arr = np.array(values)
            out.append(
                {
                    "feature_kind": kind,
                    "pathway": pathway,
                    "metric": metric,
                    "mean": format(float(arr.mean()), ".10g"),
                    "std": format(float(arr.std()), ".10g"),
                    "n": str(arr.size),
                }
            )
    return out


def _write_summary(path: Path, summary_rows: list[dict[str, str]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=("feature_kind", "pathway", "metric", "mean", "std", "n"),
            lineterminator="\n",
        )
        writer.writeheader()
        writer.writerows(summary_rows)


def _config_echo(manifest: DatasetManifest, cfg: ExperimentConfig) -> dict:
    return {
        "feature_kind": cfg.feature_kind.value,
        "frontend": {k: getattr(cfg.frontend, k) for k in FrontendConfig.__dataclass_fields__},
        "attack": {k: getattr(cfg.attack, k) for k in AttackConfig.__dataclass_fields__},
        "griffin_lim": {
            "n_iter": cfg.griffin_lim.n_iter,
            "random_phase_seed": cfg.griffin_lim.random_phase_seed,
        },
        "model_seed": cfg.model_seed,
        "sample_count": cfg.sample_count,
        "stats_mode": cfg.stats_mode.value,
        "jobs": cfg.jobs,
        "samples": [{"path": e.path, "word": e.word, "tag": e.tag} for e in manifest.entries],
    }


def run_experiment(
    manifest: DatasetManifest, cfg: ExperimentConfig, *, export: bool = True
) -> list[ReconstructionReport]:
    """Attack every manifest sample and score both pathways; write reports."""
    entries = manifest.entries[: cfg.sample_count]
    if not entries:
        raise ValueError("manifest has no entries")
    params = init_params(cfg.model_seed)
    average_stats = None
    if cfg.feature_kind is FeatureKind.MFCC_CMVN:
        average_stats = dataset_average_stats(manifest, cfg.frontend)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config_echo.json").write_text(
        json.dumps(_config_echo(manifest, cfg), indent=1, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    tasks = [
        (i, entry, cfg, params, average_stats, export) for i, entry in enumerate(entries)
    ]
    if cfg.jobs == 1:
        results = [_process_sample_guarded(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_process_sample_guarded, tasks))
    reports = [report for sample_reports in results for report in sample_reports]
    rows = [_report_row(r) for r in reports]
    _write_csv(out / "report.csv", rows)
    _write_summary(out / "summary.csv", summarize(rows))
    return reports
