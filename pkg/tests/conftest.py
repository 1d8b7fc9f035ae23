"""Shared fixtures: model parameters, fixture audio, and a dataset directory."""

import numpy as np
import pytest

from speechleak import storage
from speechleak.fixture import synth_utterance
from speechleak.harness import write_fixture_dataset
from speechleak.model import init_params


@pytest.fixture(scope="session")
def params0():
    return init_params(0)


@pytest.fixture(scope="session")
def speech_wave():
    return synth_utterance("yes", 0)


@pytest.fixture(scope="session")
def fixture_root(tmp_path_factory):
    # fresh directory per run so no stale WAVs survive fixture changes
    return write_fixture_dataset(tmp_path_factory.mktemp("wavs"), variants=2)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def flat_dataset_root(tmp_path_factory):
    """A large dataset tree of tiny placeholder WAVs for manifest tests."""
    from speechleak.model import CLASS_NAMES

    root = tmp_path_factory.mktemp("flat_wavs")
    silence = np.zeros(16, dtype=np.float64)
    for word in CLASS_NAMES:
        for i in range(40):
            storage.save_wav(root / word / f"{word}_{i:03d}.wav", silence)
    return root
