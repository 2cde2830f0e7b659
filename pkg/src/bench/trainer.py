"""
Training Loop
Asynchronous memory update (amu), joint neighbour encoding (joint) and frozen-memory (frozen) training
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from config.run_config import RunConfig
from config.settings import RESOURCE_GUARD
from src.autograd import SGD, Tape, backward, bce_with_logits, mean_of
from src.interaction import FeatureSet
from src.memory import INF, MemoryKey, MemoryPool, fit_rows
from src.utils.errors import EmptySplitError, FileFormatError, ResourceGuardError
from .model import AIAModel, load_checkpoint, save_checkpoint
from .world import ClipSample, Dataset

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "checkpoint.bin"
POOL_FILE = "pool.bin"
METRICS_FILE = "metrics.csv"

# losses are written as tags and must stay strictly positive
MIN_LOSS_TAG = 1e-12


class TrainingMode(Enum):
    AMU = "amu"
    JOINT = "joint"
    FROZEN = "frozen"


@dataclass
class StepResult:
    iteration: int
    loss: float
    err_read: float
    lr: float
    tape: Tape = field(repr=False)


def check_resource_guard(mode: str, window: int):
    limit = RESOURCE_GUARD["JOINT_MAX_WINDOW"]
    if mode == TrainingMode.JOINT.value and window > limit:
        raise ResourceGuardError(
            f"joint training forwards 2L+1 = {2 * window + 1} clips per step; "
            f"window L={window} exceeds the guard of {limit}"
        )


class Trainer:
    """
    Runs the training loop for one RunConfig

    Per step: read the memory window, encode the current clip, run the IA
    stack and head, take an SGD step, update err, write the detached person
    features back (amu only).
    """

    def __init__(self, config: RunConfig, dataset: Dataset, model: Optional[AIAModel] = None,
                 fill_memory: bool = True):
        check_resource_guard(config.mode, config.window)
        self.config = config
        self.dataset = dataset
        self.mode = TrainingMode(config.mode)
        self.window = config.window
        self.capacity = config.capacity

        self.train_videos, self.eval_videos = dataset.split(config.trainer.eval_fraction)
        self.model = model or AIAModel.build(config.ia, dataset.config.d_in, self.capacity,
                                             self.window, config.seed)
        self.optimizer = SGD(self.model.parameters(), config.trainer.lr, config.trainer.momentum)
        self.pool = MemoryPool(self.capacity, self.model.d, self.window, dataset.config.clips_per_video)
        self.rng = np.random.default_rng(config.seed)

        self.iteration = 0
        self.err = INF
        self.history: List[Dict] = []

        if self.window < dataset.config.l_true:
            logger.warning(
                f"[TRAIN] window L={self.window} is shorter than the temporal rule's lag {dataset.config.l_true}"
            )
        if self.mode == TrainingMode.FROZEN and fill_memory:
            self._fill_frozen_pool()

    # Memory

    def _fill_frozen_pool(self):
        """Encode every training clip once with a frozen copy of the initial encoder"""
        frozen = self.model.copy()
        for clip in self.dataset.clips_of(self.train_videos):
            persons, _ = frozen.encoder.encode_clip(clip)
            self.pool.write(MemoryKey(clip.video_id, clip.clip_idx), persons, 1.0, 0)
        logger.info(f"[POOL] Filled frozen memory with {len(self.pool)} clips")

    def _live_window(self, clip: ClipSample) -> List[FeatureSet]:
        window = []
        for offset in list(range(-self.window, 0)) + list(range(1, self.window + 1)):
            t = clip.clip_idx + offset
            if self.dataset.has_clip(clip.video_id, t):
                persons, _ = self.model.encoder.encode_clip(self.dataset.clip(clip.video_id, t))
                window.append(fit_rows(persons, self.capacity))
            else:
                window.append(FeatureSet.empty(self.capacity, self.model.d))
        return window

    def _read_window(self, clip: ClipSample, err: float) -> List[FeatureSet]:
        key = MemoryKey(clip.video_id, clip.clip_idx)
        if self.mode == TrainingMode.JOINT:
            return self._live_window(clip)
        if self.mode == TrainingMode.FROZEN:
            return self.pool.read_window(key, err, reweight=False)
        return self.pool.read_window(key, err, reweight=self.config.trainer.reweight)

    # Loop

    def current_lr(self) -> float:
        decays = sum(1 for s in self.config.trainer.lr_decay_steps if self.iteration >= s)
        return self.config.trainer.lr * self.config.trainer.lr_decay_factor ** decays

    def sample_batch(self) -> List[ClipSample]:
        if not self.train_videos:
            raise EmptySplitError("no training videos in the dataset")
        clips = []
        for _ in range(self.config.trainer.batch):
            video = self.train_videos[int(self.rng.integers(len(self.train_videos)))]
            t = int(self.rng.integers(1, self.dataset.config.clips_per_video + 1))
            clips.append(self.dataset.clip(video, t))
        return clips

    def step(self, clips: Optional[Sequence[ClipSample]] = None) -> StepResult:
        clips = list(clips) if clips is not None else self.sample_batch()
        err_read = self.err
        lr = self.current_lr()

        written = []
        with Tape() as tape:
            losses = []
            for clip in clips:
                logits, persons = self.model.forward(clip, self._read_window(clip, err_read))
                losses.append(bce_with_logits(logits, clip.labels))
                written.append((clip, persons.detach()))
            loss = mean_of(losses)

        backward(loss, tape)
        self.optimizer.lr = lr
        self.optimizer.step()

        self.iteration += 1
        self.err = max(loss.item(), MIN_LOSS_TAG)
        if self.mode == TrainingMode.AMU:
            for clip, persons in written:
                self.pool.write(MemoryKey(clip.video_id, clip.clip_idx), persons, self.err, self.iteration)

        self.history.append({"iteration": self.iteration, "loss": loss.item(), "err": err_read})
        return StepResult(self.iteration, loss.item(), err_read, lr, tape)

    def train(self, iters: Optional[int] = None,
              on_step: Optional[Callable[[StepResult], None]] = None) -> pd.DataFrame:
        """Run until `iters` total iterations (default: config.trainer.iters)"""
        target = self.config.trainer.iters if iters is None else iters
        log_every = self.config.trainer.log_every

        logger.info(f"[TRAIN] mode={self.mode.value} L={self.window} from iteration {self.iteration} to {target}")
        while self.iteration < target:
            result = self.step()
            if on_step is not None:
                on_step(result)
            if result.iteration % log_every == 0:
                logger.info(f"[TRAIN] iter {result.iteration}: loss={result.loss:.4f} lr={result.lr:g}")
            else:
                logger.debug(f"[TRAIN] iter {result.iteration}: loss={result.loss:.6f} err_read={result.err_read}")
        return self.metrics()

    def metrics(self) -> pd.DataFrame:
        return pd.DataFrame(self.history, columns=["iteration", "loss", "err"])

    # Persistence

    def state_meta(self) -> Dict:
        return {
            "iteration": self.iteration,
            "err": self.err,
            "rng": self.rng.bit_generator.state,
            "mode": self.mode.value,
            "train_videos": list(self.train_videos),
            "eval_videos": list(self.eval_videos),
            "clips_per_video": self.dataset.config.clips_per_video,
            "world_seed": self.dataset.config.seed,
        }

    def save(self, output_dir) -> Path:
        """Checkpoint, memory pool and metrics CSV into output_dir"""
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(output_dir / CHECKPOINT_FILE, self.model, self.optimizer.state_dict(), self.state_meta())
        self.pool.save(output_dir / POOL_FILE)
        self.metrics().to_csv(output_dir / METRICS_FILE, index=False)
        return output_dir

    @classmethod
    def resume(cls, config: RunConfig, dataset: Dataset, output_dir) -> "Trainer":
        """Rebuild a trainer from a saved checkpoint + pool so training continues identically"""
        output_dir = Path(output_dir)
        model, velocities, meta = load_checkpoint(output_dir / CHECKPOINT_FILE)
        if meta.get("mode") != config.mode:
            raise FileFormatError(f"checkpoint was trained in mode '{meta.get('mode')}', config asks for '{config.mode}'")

        trainer = cls(config, dataset, model=model, fill_memory=False)
        trainer.train_videos = [int(v) for v in meta["train_videos"]]
        trainer.eval_videos = [int(v) for v in meta["eval_videos"]]
        trainer.optimizer.load_state_dict(velocities)
        trainer.pool = MemoryPool.load(output_dir / POOL_FILE)
        trainer.rng.bit_generator.state = meta["rng"]
        trainer.iteration = int(meta["iteration"])
        trainer.err = float(meta["err"])

        metrics_path = output_dir / METRICS_FILE
        trainer.history = []
        if metrics_path.exists() and metrics_path.stat().st_size > 0:
            frame = pd.read_csv(metrics_path, float_precision="round_trip")
            trainer.history = [
                {"iteration": int(r.iteration), "loss": float(r.loss), "err": float(r.err)}
                for r in frame.itertuples(index=False)
            ]

        logger.info(f"[TRAIN] Resumed at iteration {trainer.iteration} (err={trainer.err})")
        return trainer


def train_amu(config: RunConfig, dataset: Dataset) -> Trainer:
    trainer = Trainer(config.model_copy(update={"mode": TrainingMode.AMU.value}), dataset)
    trainer.train()
    return trainer


def train_joint(config: RunConfig, dataset: Dataset) -> Trainer:
    trainer = Trainer(config.model_copy(update={"mode": TrainingMode.JOINT.value}), dataset)
    trainer.train()
    return trainer
