"""
Run Configuration
Pydantic models describing a complete, reproducible run
"""
import json
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config.settings import (
    BENCH_DEFAULTS, IA_DEFAULTS, MEMORY_DEFAULTS, OUTPUT_DIR, TRAINER_DEFAULTS, WORLD_DEFAULTS,
)
from src.utils.errors import ConfigError, InvalidOrderError

BLOCK_KINDS = ("P", "O", "M")


def check_order(order: List[str]) -> List[str]:
    """Order must be non-empty, use only P/O/M and name each kind at most once"""
    if not order:
        raise InvalidOrderError("interaction order is empty")
    unknown = [k for k in order if k not in BLOCK_KINDS]
    if unknown:
        raise InvalidOrderError(f"unknown block kind(s) {unknown}; options: {list(BLOCK_KINDS)}")
    if len(set(order)) != len(order):
        raise InvalidOrderError(f"interaction order {order} repeats a kind")
    return list(order)


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class WorldConfig(StrictModel):
    """Synthetic action-detection world"""
    n_videos: int = Field(WORLD_DEFAULTS["N_VIDEOS"], ge=0)
    clips_per_video: int = Field(WORLD_DEFAULTS["CLIPS_PER_VIDEO"], ge=1)
    persons_per_clip: int = Field(WORLD_DEFAULTS["PERSONS_PER_CLIP"], ge=1)
    targets_per_clip: int = Field(WORLD_DEFAULTS["TARGETS_PER_CLIP"], ge=1)
    objects_per_clip: int = Field(WORLD_DEFAULTS["OBJECTS_PER_CLIP"], ge=1)
    d_in: int = Field(WORLD_DEFAULTS["D_IN"], ge=2)
    noise_sigma: float = Field(WORLD_DEFAULTS["NOISE_SIGMA"], ge=0.0)
    l_true: int = Field(WORLD_DEFAULTS["L_TRUE"], ge=1)
    n_person_states: int = Field(WORLD_DEFAULTS["N_PERSON_STATES"], ge=4)
    n_object_states: int = Field(WORLD_DEFAULTS["N_OBJECT_STATES"], ge=2)
    speaker_prob: float = Field(WORLD_DEFAULTS["SPEAKER_PROB"], ge=0.0, le=1.0)
    open_prob: float = Field(WORLD_DEFAULTS["OPEN_PROB"], ge=0.0, le=1.0)
    cup_prob: float = Field(WORLD_DEFAULTS["CUP_PROB"], ge=0.0, le=1.0)
    n_classes: Literal[4] = 4
    workers: int = Field(WORLD_DEFAULTS["WORKERS"], ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_layout(self):
        if self.targets_per_clip > self.persons_per_clip:
            raise ValueError("targets_per_clip cannot exceed persons_per_clip")
        if self.d_in <= self.persons_per_clip + self.clips_per_video:
            raise ValueError(
                f"d_in={self.d_in} leaves no prototype dims after "
                f"{self.persons_per_clip} slot + {self.clips_per_video} clip code dims"
            )
        if self.speaker_prob + self.open_prob > 1.0:
            raise ValueError("speaker_prob + open_prob must not exceed 1")
        return self

    @property
    def proto_dim(self) -> int:
        return self.d_in - self.persons_per_clip - self.clips_per_video


class IAConfig(StrictModel):
    """Interaction Aggregation structure"""
    structure: Literal["parallel", "serial", "dense_serial", "none"] = IA_DEFAULTS["STRUCTURE"]
    order: List[str] = Field(default_factory=lambda: list(IA_DEFAULTS["ORDER"]))
    repeats: int = Field(IA_DEFAULTS["REPEATS"], ge=1)
    d: int = Field(IA_DEFAULTS["D"], ge=1)
    ffn_enabled: bool = IA_DEFAULTS["FFN_ENABLED"]
    ffn_mult: int = Field(IA_DEFAULTS["FFN_MULT"], ge=1)
    heads: Literal[1] = IA_DEFAULTS["HEADS"]
    ln_eps: float = Field(IA_DEFAULTS["LN_EPS"], gt=0.0)

    @model_validator(mode="after")
    def _check_order(self):
        if self.structure != "none":
            check_order(self.order)
        return self

    @property
    def hidden(self) -> int:
        return self.ffn_mult * self.d


class TrainerConfig(StrictModel):
    lr: float = Field(TRAINER_DEFAULTS["LR"], gt=0.0)
    momentum: float = Field(TRAINER_DEFAULTS["MOMENTUM"], ge=0.0, lt=1.0)
    iters: int = Field(TRAINER_DEFAULTS["ITERS"], ge=0)
    batch: int = Field(TRAINER_DEFAULTS["BATCH"], ge=1)
    lr_decay_steps: List[int] = Field(default_factory=lambda: list(TRAINER_DEFAULTS["LR_DECAY_STEPS"]))
    lr_decay_factor: float = Field(TRAINER_DEFAULTS["LR_DECAY_FACTOR"], gt=0.0)
    reweight: bool = TRAINER_DEFAULTS["REWEIGHT"]
    eval_fraction: float = Field(TRAINER_DEFAULTS["EVAL_FRACTION"], ge=0.0, lt=1.0)
    log_every: int = Field(TRAINER_DEFAULTS["LOG_EVERY"], ge=1)

    @field_validator("lr_decay_steps")
    @classmethod
    def _sorted_steps(cls, steps):
        return sorted(steps)


class BenchConfig(StrictModel):
    l_grid: List[int] = Field(default_factory=lambda: list(BENCH_DEFAULTS["L_GRID"]))
    joint_l_grid: List[int] = Field(default_factory=lambda: list(BENCH_DEFAULTS["JOINT_L_GRID"]))
    iterations: int = Field(BENCH_DEFAULTS["ITERATIONS"], ge=1)
    clips_per_video: int = Field(BENCH_DEFAULTS["CLIPS_PER_VIDEO"], ge=1)
    n_videos: int = Field(BENCH_DEFAULTS["N_VIDEOS"], ge=1)


class RunConfig(StrictModel):
    """Everything needed to reproduce a run"""
    world: WorldConfig
    ia: IAConfig
    trainer: TrainerConfig
    bench: BenchConfig = Field(default_factory=BenchConfig)
    mode: Literal["amu", "joint", "frozen"] = TRAINER_DEFAULTS["MODE"]
    window: int = Field(MEMORY_DEFAULTS["WINDOW"], ge=0)
    capacity: int = Field(MEMORY_DEFAULTS["CAPACITY"], ge=1)
    output_dir: str = str(OUTPUT_DIR)
    seed: int = TRAINER_DEFAULTS["SEED"]


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        field = ".".join(str(p) for p in item["loc"]) or "<root>"
        if item["type"] == "missing":
            parts.append(f"missing field '{field}'")
        elif item["type"] == "extra_forbidden":
            parts.append(f"unknown field '{field}'")
        else:
            parts.append(f"field '{field}': {item['msg']}")
    return "; ".join(parts)


def parse_run_config(raw: dict, seed: Optional[int] = None, output_dir: Optional[str] = None) -> RunConfig:
    """Validate a config dict, applying CLI overrides of seed and output dir"""
    if not isinstance(raw, dict):
        raise ConfigError("run config must be a JSON object")
    raw = json.loads(json.dumps(raw))
    if seed is not None:
        raw["seed"] = seed
        if isinstance(raw.get("world"), dict):
            raw["world"]["seed"] = seed
    if output_dir is not None:
        raw["output_dir"] = str(output_dir)

    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(_describe(e)) from e


def load_run_config(path, seed: Optional[int] = None, output_dir: Optional[str] = None) -> RunConfig:
    """Read a JSON run config from disk"""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    return parse_run_config(raw, seed=seed, output_dir=output_dir)
