"""End-to-end tests of the command-line surface."""

import csv
import json

import numpy as np
import pytest

from speechleak import dsp, storage
from speechleak.cli import _load_config_file, main
from speechleak.dsp import FeatureKind


def test_selftest_exits_zero(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "all 7 oracle groups passed" in out


def test_attack_writes_trace_and_artifacts(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(
        [
            "attack",
            "--word",
            "yes",
            "--feature",
            "mel",
            "--iterations",
            "120",
            "--trials",
            "1",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    with open(out / "fixture_yes_loss_trace.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iteration", "objective"]
    assert len(rows) == 1 + 120
    # the trace is the per-iteration objective of the winning trial
    values = [float(r[1]) for r in rows[1:]]
    assert values[-1] < values[0]

    grid = storage.load_grid(out / "fixture_yes_recovered.fgrid")
    assert grid.kind is FeatureKind.MEL_DB
    text = np.loadtxt(out / "fixture_yes_recovered.txt")
    np.testing.assert_allclose(text, grid.values, rtol=0.0, atol=1e-8)
    for name in ("fixture_yes_original.wav", "fixture_yes_reconstructed.wav"):
        assert storage.load_wav(out / name).shape == (16000,)
    grads = storage.load_gradients(out / "fixture_yes_gradients.npz")
    assert grads["fc2_b"].shape == (10,)

    line = capsys.readouterr().out
    assert "label_ok=yes" in line
    assert "f_mse=" in line and "stoi=" in line


def test_attack_accepts_wav_input(tmp_path, speech_wave):
    wav_path = tmp_path / "victim.wav"
    storage.save_wav(wav_path, speech_wave)
    out = tmp_path / "run"
    code = main(
        [
            "attack",
            "--wav",
            str(wav_path),
            "--word",
            "yes",
            "--iterations",
            "0",
            "--trials",
            "1",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    assert (out / "victim_recovered.fgrid").exists()


def test_attack_unknown_word_exits_one(tmp_path, capsys):
    code = main(["attack", "--word", "zzz", "--out", str(tmp_path)])
    assert code == 1
    assert "unknown word" in capsys.readouterr().err


def test_experiment_writes_report_and_summary(tmp_path, capsys):
    out = tmp_path / "exp"
    code = main(
        [
            "experiment",
            "--n",
            "2",
            "--feature",
            "mfcc",
            "--iterations",
            "0",
            "--trials",
            "1",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    with open(out / "report.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    # one gradient-attack row and one feature-baseline row per sample
    assert len(rows) == 4
    assert {r["pathway"] for r in rows} == {"gradients", "features"}
    assert all(r["error"] == "" for r in rows)
    assert (out / "summary.csv").exists()
    assert (out / "config_echo.json").exists()
    echo = json.loads((out / "config_echo.json").read_text(encoding="utf-8"))
    assert echo["attack"]["iterations"] == 0
    stdout = capsys.readouterr().out
    assert "report.csv" in stdout
    assert "stoi" in stdout


def test_invert_features_mel_grid_to_wav(tmp_path, speech_wave):
    grid = dsp.mel_spectrogram_db(speech_wave)
    grid_path = tmp_path / "sample.fgrid"
    storage.save_grid(grid_path, grid)
    assert main(["invert-features", "--grid", str(grid_path)]) == 0
    wave = storage.load_wav(tmp_path / "sample.wav")
    assert wave.shape == (16000,)
    assert float(np.abs(wave).max()) > 0.01


def test_invert_features_mfcc_with_oracle_stats(tmp_path, speech_wave):
    grid, stats = dsp.mfcc_cmvn(speech_wave)
    grid_path = tmp_path / "sample.fgrid"
    stats_path = tmp_path / "stats.json"
    out_wav = tmp_path / "recon.wav"
    storage.save_grid(grid_path, grid)
    storage.save_cmvn_stats(stats_path, stats)
    code = main(
        [
            "invert-features",
            "--grid",
            str(grid_path),
            "--stats",
            str(stats_path),
            "--stats-mode",
            "oracle",
            "--out-wav",
            str(out_wav),
        ]
    )
    assert code == 0
    assert storage.load_wav(out_wav).shape == (16000,)


def test_invert_features_missing_grid_exits_one(tmp_path, capsys):
    code = main(["invert-features", "--grid", str(tmp_path / "missing.fgrid")])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_report_aggregates_csv(tmp_path, capsys):
    out = tmp_path / "exp"
    main(
        [
            "experiment",
            "--n",
            "2",
            "--feature",
            "mel",
            "--iterations",
            "0",
            "--trials",
            "1",
            "--out",
            str(out),
        ]
    )
    capsys.readouterr()
    assert main(["report", "--csv", str(out / "report.csv")]) == 0
    lines = capsys.readouterr().out
    assert "stoi" in lines and "f_mse" in lines


def test_report_embeddings_cosine(tmp_path, capsys):
    ref = tmp_path / "ref.txt"
    rec = tmp_path / "rec.txt"
    ref.write_text("1 0 0\n0 2 0\n1 1 0\n", encoding="utf-8")
    rec.write_text("2 0 0\n0 1 0\n0 0 5\n", encoding="utf-8")
    with pytest.raises(SystemExit):  # --csv requires at least one path
        main(["report", "--csv", "--embeddings", str(ref), str(rec)])
    code = main(
        ["report", "--csv", str(tmp_path / "none.csv"), "--embeddings", str(ref), str(rec)]
    )
    assert code == 1  # missing csv file surfaces as an error exit
    out = tmp_path / "exp"
    main(
        [
            "experiment",
            "--n",
            "1",
            "--feature",
            "mel",
            "--iterations",
            "0",
            "--trials",
            "1",
            "--out",
            str(out),
        ]
    )
    capsys.readouterr()
    code = main(
        ["report", "--csv", str(out / "report.csv"), "--embeddings", str(ref), str(rec)]
    )
    assert code == 0
    text = capsys.readouterr().out
    assert "embedding_cosine row=0 score=1.000000" in text
    assert "embedding_cosine row=1 score=1.000000" in text
    assert "embedding_cosine row=2 score=0.000000" in text
    assert "mean=" in text


def test_report_embedding_row_count_mismatch(tmp_path, capsys):
    ref = tmp_path / "ref.txt"
    rec = tmp_path / "rec.txt"
    ref.write_text("1 0\n0 1\n", encoding="utf-8")
    rec.write_text("1 0\n", encoding="utf-8")
    out = tmp_path / "exp"
    main(
        [
            "experiment",
            "--n",
            "1",
            "--feature",
            "mel",
            "--iterations",
            "0",
            "--trials",
            "1",
            "--out",
            str(out),
        ]
    )
    capsys.readouterr()
    code = main(
        ["report", "--csv", str(out / "report.csv"), "--embeddings", str(ref), str(rec)]
    )
    assert code == 1
    assert "different row counts" in capsys.readouterr().err


def test_config_file_flags_take_precedence(tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text(
        "# comment line\niterations = 7\nword = no\ntrials = 1\n", encoding="utf-8"
    )
    out = tmp_path / "run"
    code = main(
        [
            "attack",
            "--config",
            str(config),
            "--iterations",
            "3",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    # explicit flag beats the file; file beats the default
    with open(out / "fixture_no_loss_trace.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 1 + 3


def test_config_file_parse_error_exits_one(tmp_path, capsys):
    config = tmp_path / "bad.cfg"
    config.write_text("iterations 7\n", encoding="utf-8")
    code = main(["attack", "--config", str(config), "--out", str(tmp_path)])
    assert code == 1
    assert "expected key=value" in capsys.readouterr().err


def test_load_config_file_normalizes_keys(tmp_path):
    config = tmp_path / "k.cfg"
    config.write_text("model-seed = 3\nstats-mode = oracle # tail comment\n", encoding="utf-8")
    values = _load_config_file(str(config))
    assert values == {"model_seed": "3", "stats_mode": "oracle"}
