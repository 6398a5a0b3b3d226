from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from speechgen import make_speech

from cabinmix import generate_fixture, load_dataset

FIXTURE_SEED = 77


@pytest.fixture(scope="session")
def dataset_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("dataset")
    generate_fixture(root, seed=FIXTURE_SEED)
    return root


@pytest.fixture(scope="session")
def index(dataset_root):
    return load_dataset(dataset_root)


@pytest.fixture(scope="session")
def dry_speech():
    return make_speech()
