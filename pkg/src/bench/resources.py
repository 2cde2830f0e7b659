"""
Resource Accounting
Multiply-adds and live tape floats per training iteration, joint vs asynchronous memory
"""
import logging
from dataclasses import asdict, dataclass
from typing import Dict, List

import numpy as np
import pandas as pd

from config.run_config import RunConfig
from src.autograd import ResourceMeter
from .trainer import Trainer, check_resource_guard
from .world import generate_dataset

logger = logging.getLogger(__name__)

ENCODER_SCOPE = "encoder"


@dataclass
class ResourceReport:
    """
    One bench row (medians over the measured iterations)

    peak_live_floats: peak of forward outputs plus gradient buffers alive at once
    over the whole step; grows with the window because memory rows enter the IA blocks.
    encoder_recorded_floats: floats written by encoder-scope ops in the step, the
    cost that amu keeps flat in the window.
    """
    mode: str
    window: int
    multiply_adds: int
    encoder_multiply_adds: int
    peak_live_floats: int
    encoder_recorded_floats: int
    encoder_passes: int

    def to_row(self) -> Dict:
        return asdict(self)


def bench_config(config: RunConfig, mode: str, window: int) -> RunConfig:
    """The run config shrunk to the benchmark world"""
    world = config.world.model_copy(update={
        "n_videos": config.bench.n_videos,
        "clips_per_video": config.bench.clips_per_video,
    })
    trainer = config.trainer.model_copy(update={"eval_fraction": 0.0, "batch": 1})
    return config.model_copy(update={"world": world, "trainer": trainer, "mode": mode, "window": window})


def count_resources(config: RunConfig, mode: str, window: int) -> ResourceReport:
    """
    Median counts over `bench.iterations` training steps on the centre clip of each video

    Only forward multiply-adds are counted; live floats cover forward outputs
    plus gradient buffers during backward.
    """
    check_resource_guard(mode, window)
    config = bench_config(config, mode, window)
    dataset = generate_dataset(config.world)
    trainer = Trainer(config, dataset)
    centre = (config.world.clips_per_video + 1) // 2

    samples: List[Dict] = []
    for i in range(config.bench.iterations):
        video = trainer.train_videos[i % len(trainer.train_videos)]
        with ResourceMeter() as meter:
            result = trainer.step([dataset.clip(video, centre)])
        samples.append({
            "multiply_adds": meter.total_multiply_adds,
            "encoder_multiply_adds": meter.multiply_adds.get(ENCODER_SCOPE, 0),
            "peak_live_floats": result.tape.peak_floats,
            "encoder_recorded_floats": result.tape.floats_by_scope.get(ENCODER_SCOPE, 0),
            "encoder_passes": meter.encoder_passes,
        })

    medians = {k: int(np.median([s[k] for s in samples])) for k in samples[0]}
    report = ResourceReport(mode=mode, window=window, **medians)
    logger.info(f"[BENCH] {mode} L={window}: {medians}")
    return report


def analytic_multiply_adds(config: RunConfig, clip_idx: int) -> int:
    """Hand count of forward multiply-adds for one step on one clip"""
    world, ia = config.world, config.ia
    P, O, K, L, d = world.persons_per_clip, world.objects_per_clip, config.capacity, config.window, ia.d

    passes = 1
    if config.mode == "joint":
        passes += sum(1 for t in range(clip_idx - L, clip_idx + L + 1)
                      if t != clip_idx and 1 <= t <= world.clips_per_video)
    total = passes * (P + O) * world.d_in * d

    if ia.structure != "none":
        kv_rows = {"P": P, "O": O, "M": (2 * L + 1) * K}
        for kind in ia.order:
            nk = kv_rows[kind]
            block = P * d * d + 2 * nk * d * d + 2 * P * nk * d + P * d * d
            if ia.ffn_enabled:
                block += 2 * P * d * ia.hidden
            total += ia.repeats * block

    return total + world.targets_per_clip * d * 4


def run_bench(config: RunConfig) -> pd.DataFrame:
    """amu rows over bench.l_grid, then joint rows over bench.joint_l_grid"""
    rows = [count_resources(config, "amu", L).to_row() for L in config.bench.l_grid]
    rows += [count_resources(config, "joint", L).to_row() for L in config.bench.joint_l_grid]
    return pd.DataFrame(rows, columns=list(ResourceReport.__dataclass_fields__))
