import json
import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config.run_config import parse_run_config  # noqa: E402

settings.register_profile("deskaia", database=None, max_examples=50, deadline=None)
settings.load_profile("deskaia")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run long training trend checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running training trend check")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def tiny_raw_config(**overrides) -> dict:
    """Small noiseless world and a small serial stack"""
    raw = {
        "world": {
            "n_videos": 4,
            "clips_per_video": 6,
            "persons_per_clip": 3,
            "targets_per_clip": 2,
            "objects_per_clip": 2,
            "d_in": 16,
            "noise_sigma": 0.0,
            "l_true": 2,
        },
        "ia": {"structure": "serial", "order": ["P", "O", "M"], "repeats": 1, "d": 8, "ffn_mult": 2},
        "trainer": {"lr": 0.05, "momentum": 0.9, "iters": 3, "eval_fraction": 0.25, "log_every": 1},
        "bench": {"l_grid": [1, 5], "joint_l_grid": [1, 2], "iterations": 3, "clips_per_video": 10, "n_videos": 2},
        "mode": "amu",
        "window": 2,
        "capacity": 4,
        "seed": 0,
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(raw.get(key), dict):
            raw[key].update(value)
        else:
            raw[key] = value
    return raw


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config(tmp_path):
    return parse_run_config(tiny_raw_config(), output_dir=str(tmp_path / "run"))


@pytest.fixture
def config_file(tmp_path):
    def write(**overrides):
        raw = tiny_raw_config(output_dir=str(tmp_path / "run"), **overrides)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(raw), encoding="utf-8")
        return path
    return write
