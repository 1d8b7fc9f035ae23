"""Command-line surface: attack, experiment, invert-features, report, selftest."""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from . import fixture, harness, selftest, storage
from .attack import AttackConfig, invert_features
from .dsp import FeatureKind, FrontendConfig, extract_features
from .metrics import cosine_similarity, load_embedding_rows, mse_feature, mse_waveform, stoi
from .model import CLASS_NAMES, init_params
from .reconstruct import GriffinLimConfig, StatsMode
from .harness import (
    ExperimentConfig,
    build_manifest,
    resolve_dataset_root,
    run_experiment,
)

_FEATURE_KINDS = {"mel": FeatureKind.MEL_DB, "mfcc": FeatureKind.MFCC_CMVN}
_STATS_MODES = {
    "oracle": StatsMode.ORACLE,
    "dataset": StatsMode.DATASET_AVERAGE,
    "identity": StatsMode.IDENTITY,
}

_DEFAULTS = {
    "feature": "mel",
    "stats_mode": "dataset",
    "iterations": 8000,
    "lr": 0.01,
    "tv_lambda": 0.001,
    "trials": 2,
    "seed": 0,
    "model_seed": 0,
    "jobs": 1,
    "n": 10,
    "out": "out",
    "dataset": None,
    "word": "yes",
}


def _load_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _effective(args: argparse.Namespace, key: str, cast=None):
    explicit = getattr(args, key, None)
    if explicit is not None:
        return explicit
    config = getattr(args, "_config_values", {})
    if key in config:
        raw = config[key]
        return cast(raw) if cast else raw
    return _DEFAULTS.get(key)


def _add_common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="key=value file; explicit flags override it")
    sub.add_argument("--feature", choices=sorted(_FEATURE_KINDS), help="feature kind")
    sub.add_argument("--stats-mode", dest="stats_mode", choices=sorted(_STATS_MODES))
    sub.add_argument("--iterations", type=int)
    sub.add_argument("--lr", type=float, help="attack learning rate")
    sub.add_argument("--lambda", dest="tv_lambda", type=float, help="TV penalty weight")
    sub.add_argument("--trials", type=int)
    sub.add_argument("--seed", type=int, help="attack init seed")
    sub.add_argument("--model-seed", dest="model_seed", type=int)
    sub.add_argument("--out")


def _attack_config(args: argparse.Namespace) -> AttackConfig:
    return AttackConfig(
        iterations=_effective(args, "iterations", int),
        learning_rate=_effective(args, "lr", float),
        tv_weight=_effective(args, "tv_lambda", float),
        trials=_effective(args, "trials", int),
        seed=_effective(args, "seed", int),
    )


def _cmd_attack(args: argparse.Namespace) -> int:
    kind = _FEATURE_KINDS[_effective(args, "feature")]
    stats_mode = _STATS_MODES[_effective(args, "stats_mode")]
    out = Path(_effective(args, "out"))
    frontend = FrontendConfig()
    word = _effective(args, "word")
    if word not in CLASS_NAMES:
        raise ValueError(f"unknown word {word!r}; choose from {', '.join(CLASS_NAMES)}")
    if args.wav:
        wave = storage.load_wav(args.wav)
        sample_name = Path(args.wav).stem
    else:
        wave = fixture.synth_utterance(word, 0)
        sample_name = f"fixture_{word}"
    label = CLASS_NAMES.index(word)
    params = init_params(_effective(args, "model_seed", int))
    cfg = _attack_config(args)

    grads = harness.simulate_client(params, wave, label, kind, frontend)
    grads_path = out / f"{sample_name}_gradients.npz"
    storage.save_gradients(grads_path, grads)
    # the attack consumes the serialized upload, never the source sample
    started = time.perf_counter()
    result = invert_features(storage.load_gradients(grads_path), params, kind, cfg)
    seconds = time.perf_counter() - started

    true_grid, oracle_stats = extract_features(wave, kind, frontend)
    average_stats = None
    if kind is FeatureKind.MFCC_CMVN and stats_mode is StatsMode.DATASET_AVERAGE:
        average_stats = _fixture_average_stats(frontend)
    exp_cfg = ExperimentConfig(
        feature_kind=kind,
        frontend=frontend,
        attack=cfg,
        model_seed=_effective(args, "model_seed", int),
        out_dir=str(out),
        stats_mode=stats_mode,
    )
    recon_wave = harness.reconstruct_waveform(result.grid, exp_cfg, oracle_stats, average_stats, "gradients")

    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"{sample_name}_loss_trace.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "objective"])
        for i, value in enumerate(result.trace, 1):
            writer.writerow([i, format(float(value), ".10g")])
    storage.save_grid(out / f"{sample_name}_recovered.fgrid", result.grid)
    storage.save_grid_text(out / f"{sample_name}_recovered.txt", result.grid)
    storage.save_wav(out / f"{sample_name}_original.wav", wave)
    storage.save_wav(out / f"{sample_name}_reconstructed.wav", recon_wave)
    f_mse = mse_feature(true_grid, result.grid)
    print(
        f"sample={sample_name} kind={kind.value} restored_label={CLASS_NAMES[result.label]} "
        f"label_ok={'yes' if result.label == label else 'no'} "
        f"final_objective={result.final_objective:.6g} f_mse={f_mse:.6g} "
        f"w_mse={mse_waveform(wave, recon_wave):.6g} stoi={stoi(wave, recon_wave):.4f} "
        f"trial={result.trial} seconds={seconds:.1f}"
    )
    print(f"outputs under {out}")
    return 0


def _fixture_average_stats(frontend: FrontendConfig):
    from .dsp import CmvnStats

    means, stds = [], []
    for word, variant, wave in fixture.fixture_words(2):
        _, stats = extract_features(wave, FeatureKind.MFCC_CMVN, frontend)
        means.append(stats.mean)
        stds.append(stats.std)
    return CmvnStats(np.mean(means, axis=0), np.mean(stds, axis=0))


def _cmd_experiment(args: argparse.Namespace) -> int:
    out = Path(_effective(args, "out"))
    dataset = _effective(args, "dataset")
    root = resolve_dataset_root(dataset, out)
    n = _effective(args, "n", int)
    manifest = build_manifest(root, _effective(args, "seed", int), n)
    cfg = ExperimentConfig(
        feature_kind=_FEATURE_KINDS[_effective(args, "feature")],
        attack=_attack_config(args),
        model_seed=_effective(args, "model_seed", int),
        sample_count=n,
        out_dir=str(out),
        stats_mode=_STATS_MODES[_effective(args, "stats_mode")],
        jobs=_effective(args, "jobs", int),
    )
    reports = run_experiment(manifest, cfg)
    failures = [r for r in reports if r.error]
    print(f"wrote {out / 'report.csv'} ({len(reports)} rows, {len(failures)} failures)")
    for line in _summary_lines(out / "report.csv"):
        print(line)
    return 0


def _summary_lines(csv_path: Path) -> list[str]:
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    lines = []
    for row in harness.summarize(rows):
        lines.append(
            f"{row['feature_kind']:>4} {row['pathway']:>9} {row['metric']:>6}: "
            f"{float(row['mean']):.6g} +/- {float(row['std']):.6g} (n={row['n']})"
        )
    return lines


def _cmd_invert_features(args: argparse.Namespace) -> int:
    grid = storage.load_grid(args.grid)
    stats_mode = _STATS_MODES[_effective(args, "stats_mode")]
    stats = storage.load_cmvn_stats(args.stats) if args.stats else None
    from .reconstruct import mel_to_waveform, mfcc_to_waveform

    if grid.kind is FeatureKind.MEL_DB:
        wave = mel_to_waveform(grid)
    else:
        wave = mfcc_to_waveform(grid, stats_mode, stats)
    out_wav = args.out_wav or str(Path(args.grid).with_suffix(".wav"))
    storage.save_wav(out_wav, wave)
    print(f"wrote {out_wav}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    for path in args.csv:
        print(f"== {path}")
        for line in _summary_lines(Path(path)):
            print(line)
    if args.embeddings:
        a_rows = load_embedding_rows(args.embeddings[0])
        b_rows = load_embedding_rows(args.embeddings[1])
        if len(a_rows) != len(b_rows):
            raise ValueError("embedding files have different row counts")
        scores = [cosine_similarity(a, b) for a, b in zip(a_rows, b_rows)]
        for i, score in enumerate(scores):
            print(f"embedding_cosine row={i} score={score:.6f}")
        print(
            f"embedding_cosine mean={np.mean(scores):.6f} std={np.std(scores):.6f} "
            f"n={len(scores)}"
        )
    return 0


def _cmd_selftest(args: argparse.Namespace) -> int:
    return selftest.run(verbose=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="speechleak",
        description="Reconstruct a client's speech from the gradients it shares.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_attack = sub.add_parser("attack", help="invert one sample's gradients, verbose trace")
    _add_common_flags(p_attack)
    p_attack.add_argument("--wav", help="victim WAV (PCM16 mono 16 kHz); default: fixture")
    p_attack.add_argument("--word", help="true label; picks the fixture token without --wav")
    p_attack.set_defaults(func=_cmd_attack)

    p_exp = sub.add_parser("experiment", help="batch attack + scoring from a manifest")
    _add_common_flags(p_exp)
    p_exp.add_argument("--dataset", help=f"dataset root, or '{harness.FIXTURE_DATASET}'")
    p_exp.add_argument("--n", type=int, help="sample count")
    p_exp.add_argument("--jobs", type=int, help="parallel workers")
    p_exp.set_defaults(func=_cmd_experiment)

    p_inv = sub.add_parser("invert-features", help="stage 2 only: grid file to WAV")
    _add_common_flags(p_inv)
    p_inv.add_argument("--grid", required=True, help="feature-grid binary")
    p_inv.add_argument("--stats", help="CMVN stats JSON for oracle undo")
    p_inv.add_argument("--out-wav", dest="out_wav", help="output WAV path")
    p_inv.set_defaults(func=_cmd_invert_features)

    p_rep = sub.add_parser("report", help="aggregate report CSVs into summary tables")
    p_rep.add_argument("--csv", nargs="+", required=True)
    p_rep.add_argument(
        "--embeddings", nargs=2, metavar=("REF", "RECON"), help="plain-text embedding files"
    )
    p_rep.set_defaults(func=_cmd_report)

    p_self = sub.add_parser("selftest", help="gradient and DSP oracle suite")
    p_self.set_defaults(func=_cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            args._config_values = _load_config_file(args.config)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    else:
        args._config_values = {}
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main(None))
