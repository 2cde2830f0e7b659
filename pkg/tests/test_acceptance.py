"""
End-to-end trend checks on the noiseless synthetic world

The training runs take minutes; run them with --runslow.
"""
import math

import numpy as np
import pytest

from config.run_config import parse_run_config
from conftest import tiny_raw_config
from src.bench import Trainer, count_resources, evaluate_map, generate_dataset

SEEDS = (0, 1, 2)
ITERS = 2000


def _world_config(seed, **overrides):
    raw = tiny_raw_config(
        world={"n_videos": 16, "clips_per_video": 6, "persons_per_clip": 3, "targets_per_clip": 2,
               "d_in": 20, "noise_sigma": 0.0, "l_true": 2},
        ia={"structure": "serial", "order": ["P", "O", "M"], "repeats": 1, "d": 16},
        trainer={"iters": ITERS, "lr": 0.05, "momentum": 0.9, "eval_fraction": 0.25, "log_every": 500},
        window=3,
        seed=seed,
    )
    raw["world"]["seed"] = seed
    for key, value in overrides.items():
        if isinstance(value, dict):
            raw[key].update(value)
        else:
            raw[key] = value
    return parse_run_config(raw)


def _train_and_eval(config):
    dataset = generate_dataset(config.world)
    trainer = Trainer(config, dataset)
    metrics = trainer.train()
    return metrics, evaluate_map(trainer.model, dataset, trainer.eval_videos)


def test_encoder_cost_flat_over_default_window_grid(tmp_path):
    config = parse_run_config(tiny_raw_config(bench={"clips_per_video": 12}), output_dir=str(tmp_path))
    reports = [count_resources(config, "amu", L) for L in (1, 5, 15, 30)]
    macs = [r.encoder_multiply_adds for r in reports]
    floats = [r.encoder_recorded_floats for r in reports]
    assert max(macs) <= 1.05 * min(macs)
    assert max(floats) <= 1.05 * min(floats)

    joint = {L: count_resources(config, "joint", L).encoder_multiply_adds for L in (1, 4)}
    assert joint[4] >= 2.9 * joint[1]


@pytest.mark.slow
def test_training_loss_drops_below_chance():
    config = _world_config(0, trainer={"iters": 200}, ia={"d": 8})
    metrics, _ = _train_and_eval(config)
    assert metrics["loss"].tail(20).mean() < math.log(2)


@pytest.mark.slow
def test_interaction_ablations():
    for seed in SEEDS:
        _, full = _train_and_eval(_world_config(seed))
        assert all(ap >= 0.95 for ap in full.per_class_ap[1:])

        _, no_memory = _train_and_eval(_world_config(seed, ia={"order": ["P", "O"]}))
        assert no_memory.per_class_ap[3] < 0.6

        _, no_objects = _train_and_eval(_world_config(seed, ia={"order": ["P", "M"]}))
        assert no_objects.per_class_ap[2] < 0.6

        _, baseline = _train_and_eval(_world_config(seed, ia={"structure": "none"}))
        assert baseline.per_class_ap[0] >= 0.95
        assert all(ap < 0.6 for ap in baseline.per_class_ap[1:])


@pytest.mark.slow
def test_serial_beats_parallel_on_most_seeds():
    wins = 0
    for seed in SEEDS:
        _, serial = _train_and_eval(_world_config(seed))
        _, parallel = _train_and_eval(_world_config(seed, ia={"structure": "parallel"}))
        wins += serial.mean_ap >= parallel.mean_ap
    assert wins >= 2


@pytest.mark.slow
def test_amu_matches_joint_training_quality():
    config = _world_config(0, window=2)
    _, amu = _train_and_eval(config)
    _, joint = _train_and_eval(config.model_copy(update={"mode": "joint"}))
    assert amu.mean_ap >= joint.mean_ap - 0.1
    assert np.isfinite(amu.mean_ap)


@pytest.mark.slow
def test_amu_matches_or_beats_frozen_memory():
    amu_maps, frozen_maps = [], []
    for seed in SEEDS:
        config = _world_config(seed)
        _, amu = _train_and_eval(config)
        _, frozen = _train_and_eval(config.model_copy(update={"mode": "frozen"}))
        assert amu.per_class_ap[3] >= 0.95
        amu_maps.append(amu.mean_ap)
        frozen_maps.append(frozen.mean_ap)
    assert np.mean(amu_maps) >= np.mean(frozen_maps) - 0.02
