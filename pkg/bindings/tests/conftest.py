from __future__ import annotations

import numpy as np
import pytest

cabinmix = pytest.importorskip("cabinmix")
pytest.importorskip("cabinmix_api")


@pytest.fixture(scope="session")
def dataset_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("dataset")
    cabinmix.generate_fixture(root, seed=77)
    return root


@pytest.fixture(scope="session")
def speech_wav(tmp_path_factory):
    rng = np.random.default_rng(5)
    n = 2 * 48000
    x = rng.standard_normal(n) * 0.05
    x[:12000] *= 0.01
    path = tmp_path_factory.mktemp("speech") / "speech.wav"
    cabinmix.write_wav(path, cabinmix.AudioBuffer(x, 48000), "float32")
    return path
