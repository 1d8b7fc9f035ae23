"""Acceptance suite: one test per shipped criterion, at the stated tolerances.

Each test maps to one numbered claim; `pytest -v` prints one pass/fail line
per criterion. The gradient-attack criterion runs the full-settings attack
on 5 samples and dominates the suite's runtime (roughly half an hour);
set SPEECHLEAK_ACCEPTANCE=fast to use its reduced 2000-iteration variant
with the correspondingly relaxed feature-error bound.
"""

import csv
import os
import time
from pathlib import Path

import numpy as np
import pytest

from speechleak import dsp, metrics, selftest, storage
from speechleak.attack import AttackConfig
from speechleak.dsp import FeatureKind, FrontendConfig, mel_spectrogram_db, mfcc_cmvn
from speechleak.fixture import synth_utterance
from speechleak.harness import (
    ExperimentConfig,
    build_manifest,
    resolve_dataset_root,
    run_experiment,
)
from speechleak.reconstruct import (
    GriffinLimConfig,
    StatsMode,
    griffin_lim,
    mel_to_waveform,
    mfcc_to_waveform,
    nnls_mel_to_stft,
)


@pytest.fixture(scope="module")
def dataset_root(tmp_path_factory):
    # honors SPEECHLEAK_DATASET; otherwise materializes the bundled fixture
    return resolve_dataset_root(None, tmp_path_factory.mktemp("acceptance_data"))


@pytest.fixture(scope="module")
def full_attack_runs(tmp_path_factory, dataset_root):
    """Both feature pathways attacked at acceptance settings on 5 samples."""
    fast = os.environ.get("SPEECHLEAK_ACCEPTANCE", "").lower() == "fast"
    attack = AttackConfig(iterations=2000 if fast else 8000, trials=2, seed=0)
    manifest = build_manifest(dataset_root, seed=0, n=5)
    runs = {}
    started = time.perf_counter()
    for kind in (FeatureKind.MEL_DB, FeatureKind.MFCC_CMVN):
        out = tmp_path_factory.mktemp(f"accept_{kind.value}")
        cfg = ExperimentConfig(
            feature_kind=kind,
            attack=attack,
            sample_count=5,
            out_dir=str(out),
        )
        runs[kind] = (run_experiment(manifest, cfg), out)
    return {
        "runs": runs,
        "elapsed": time.perf_counter() - started,
        "f_mse_bound": 0.05 if fast else 0.01,
    }


def test_criterion_1_differentiation_oracles():
    """20 triples: param gradients vs central FD at rtol 1e-4 (25 spot
    components per tensor), objective input gradient vs FD at rtol 1e-3
    over all 1024 cells, kink-contaminated probes resampled; under 5 min."""
    started = time.perf_counter()
    input_checked = 0
    for seed in range(20):
        selftest.check_param_gradients(seed=seed, components=25)
        input_checked += selftest.check_objective_gradient(seed=seed, cells=1024)
    elapsed = time.perf_counter() - started
    # a handful of cells per triple sit on ReLU/pool kinks and are skipped
    assert input_checked >= 20 * 950
    assert elapsed < 300.0, f"differentiation oracles took {elapsed:.0f}s"


def test_criterion_2_label_restoration_exact():
    """100/100 labels restored exactly from the shared gradients."""
    assert selftest.check_label_restoration(n=100) == 100


def test_criterion_3_feature_inversion_baselines(dataset_root):
    """20 samples, stage 2 only: mel mean STOI in [0.70, 0.90] with mean
    W-MSE < 0.03; MFCC with oracle stats mean STOI in [0.65, 0.88]; <10 min."""
    started = time.perf_counter()
    manifest = build_manifest(dataset_root, seed=0, n=20)
    mel_stoi, mel_wmse, mfcc_stoi = [], [], []
    for entry in manifest.entries:
        wave = storage.load_wav(entry.path)
        mel_wave = mel_to_waveform(mel_spectrogram_db(wave))
        mel_stoi.append(metrics.stoi(wave, mel_wave))
        mel_wmse.append(metrics.mse_waveform(wave, mel_wave))
        grid, stats = mfcc_cmvn(wave)
        mfcc_wave = mfcc_to_waveform(grid, StatsMode.ORACLE, stats)
        mfcc_stoi.append(metrics.stoi(wave, mfcc_wave))
    elapsed = time.perf_counter() - started
    mel_mean, wmse_mean, mfcc_mean = (
        float(np.mean(mel_stoi)),
        float(np.mean(mel_wmse)),
        float(np.mean(mfcc_stoi)),
    )
    print(
        f"stage-2 baselines: mel stoi {mel_mean:.4f}, w-mse {wmse_mean:.5f}, "
        f"mfcc-oracle stoi {mfcc_mean:.4f}, {elapsed:.0f}s"
    )
    assert 0.70 <= mel_mean <= 0.90, f"mel baseline mean STOI {mel_mean:.4f}"
    assert wmse_mean < 0.03, f"mel baseline mean W-MSE {wmse_mean:.5f}"
    assert 0.65 <= mfcc_mean <= 0.88, f"mfcc oracle mean STOI {mfcc_mean:.4f}"
    assert elapsed < 600.0, f"baselines took {elapsed:.0f}s"


def test_criterion_4_gradient_attack_bands(full_attack_runs):
    """5 samples at acceptance attack settings: every mel attack recovers the
    feature grid within the stated F-MSE bound and lands within 0.1 STOI of
    its own feature-inversion baseline; the MFCC pathway degrades by more
    than 0.2 mean STOI; everything inside the 2 hour budget."""
    mel_reports, _ = full_attack_runs["runs"][FeatureKind.MEL_DB]
    mfcc_reports, _ = full_attack_runs["runs"][FeatureKind.MFCC_CMVN]
    bound = full_attack_runs["f_mse_bound"]

    assert all(r.error == "" for r in mel_reports + mfcc_reports)
    mel_grad = {r.sample_id: r for r in mel_reports if r.pathway == "gradients"}
    mel_base = {r.sample_id: r for r in mel_reports if r.pathway == "features"}
    assert len(mel_grad) == 5 and len(mel_base) == 5
    for sid, report in mel_grad.items():
        assert report.f_mse < bound, f"{sid}: mel F-MSE {report.f_mse:.6f} >= {bound}"
        gap = abs(report.stoi_score - mel_base[sid].stoi_score)
        assert gap <= 0.1, f"{sid}: STOI gap to baseline {gap:.4f} > 0.1"
        assert report.label_ok

    mel_mean = float(np.mean([r.stoi_score for r in mel_grad.values()]))
    mfcc_scores = [r.stoi_score for r in mfcc_reports if r.pathway == "gradients"]
    mfcc_mean = float(np.mean(mfcc_scores))
    print(
        f"gradient attacks: mel stoi {mel_mean:.4f}, mfcc stoi {mfcc_mean:.4f}, "
        f"max mel f-mse {max(r.f_mse for r in mel_grad.values()):.6f}, "
        f"{full_attack_runs['elapsed']:.0f}s"
    )
    assert mfcc_mean < mel_mean - 0.2, (
        f"MFCC degradation too small: {mfcc_mean:.4f} vs mel {mel_mean:.4f}"
    )
    assert full_attack_runs["elapsed"] <= 7200.0


def test_criterion_5_solver_properties():
    """NNLS residual non-increasing with relative residual < 1e-3 on
    constructed instances; Griffin-Lim spectral convergence non-increasing
    over 32 iterations on speech magnitudes."""
    fb = dsp.build_mel_filterbank(32, 2048)
    for seed in (3, 7, 11):
        rng = np.random.default_rng(seed)
        truth = rng.uniform(0.0, 1.0, size=(fb.shape[1], 8))
        target = fb @ truth
        _, residuals = nnls_mel_to_stft(target, fb, return_residuals=True)
        assert np.all(np.diff(residuals) <= 1e-10 * residuals[0])
        assert residuals[-1] / np.linalg.norm(target) < 1e-3
    cfg = FrontendConfig()
    for word in ("yes", "go"):
        mag = np.sqrt(dsp.stft_power(synth_utterance(word, 0), cfg))
        _, convergence = griffin_lim(
            mag, cfg, GriffinLimConfig(n_iter=32), return_convergence=True
        )
        assert convergence.size == 32
        assert np.all(np.diff(convergence) <= 1e-10)


def test_criterion_6_metric_self_tests():
    """stoi(x,x) = 1 within 1e-6; MSE identities exact; cosine similarity
    scale invariant."""
    for word in ("yes", "stop"):
        wave = synth_utterance(word, 0)
        assert abs(metrics.stoi(wave, wave) - 1.0) <= 1e-6
        assert metrics.mse_waveform(wave, wave) == 0.0
        grid = mel_spectrogram_db(wave)
        assert metrics.mse_feature(grid, grid) == 0.0
    vec = np.array([0.3, -1.7, 2.2, 0.01])
    for gain in (3.0, 0.25):
        assert abs(metrics.cosine_similarity(vec, gain * vec) - 1.0) <= 1e-12


def _rows_without_timing(csv_path: Path) -> list[dict[str, str]]:
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for column in ("seconds",):
            row.pop(column, None)
    return rows


def test_criterion_7_experiment_determinism(dataset_root, tmp_path):
    """Two identically seeded experiment runs produce byte-identical reports
    once timing columns are dropped."""
    manifest = build_manifest(dataset_root, seed=0, n=3)
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        cfg = ExperimentConfig(
            feature_kind=FeatureKind.MEL_DB,
            attack=AttackConfig(iterations=60, trials=1, seed=0),
            sample_count=3,
            out_dir=str(out),
        )
        run_experiment(manifest, cfg)
        outputs.append(out)
    rows_a = _rows_without_timing(outputs[0] / "report.csv")
    rows_b = _rows_without_timing(outputs[1] / "report.csv")
    assert rows_a == rows_b
    # summaries hold no timing values and must match byte for byte
    summary_a = (outputs[0] / "summary.csv").read_bytes()
    summary_b = (outputs[1] / "summary.csv").read_bytes()
    assert summary_a == summary_b


def test_export_manifest_structure(full_attack_runs):
    """Supplementary check: every clean report row has original and
    reconstructed WAV files in the exchange format, plus both feature grids."""
    for kind, (reports, out) in full_attack_runs["runs"].items():
        with open(Path(out) / "report.csv", newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.DictReader(fh) if not r["error"]]
        assert rows, "report.csv has no clean rows"
        for row in rows:
            sid = row["sample_id"]
            # load_wav enforces PCM16 mono 16 kHz, so loading IS the check
            original = storage.load_wav(Path(out) / "wav" / f"{sid}_original.wav")
            assert original.shape == (16000,)
            recon = storage.load_wav(
                Path(out) / "wav" / f"{sid}_{row['feature_kind']}_{row['pathway']}.wav"
            )
            assert recon.shape == (16000,)
        for sid in {row["sample_id"] for row in rows}:
            for suffix in ("true", "recovered"):
                grid = storage.load_grid(
                    Path(out) / "grids" / f"{sid}_{kind.value}_{suffix}.fgrid"
                )
                assert grid.kind is kind
