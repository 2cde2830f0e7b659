"""
Synthetic Action World
Videos of clips whose labels need pose, person-person, person-object and temporal reasoning
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from config.run_config import WorldConfig
from src.utils.binary_io import read_manifest_file, write_manifest_file
from src.utils.errors import FileFormatError

logger = logging.getLogger(__name__)

DATASET_FORMAT = "aia-synthetic-dataset"
DATASET_VERSION = 1

# Latent states
SPEAKER = 0
OPEN = 1
POSE_STATES = (0, 2, 4)
CUP = 0

CLASS_NAMES = ("pose", "person_interaction", "object_interaction", "temporal")


@dataclass
class ClipSample:
    """One clip with raw instance inputs, latent states and target labels"""
    video_id: int
    clip_idx: int
    persons: np.ndarray        # [P, d_in]
    objects: np.ndarray        # [O, d_in], absent rows are zero
    object_mask: np.ndarray    # [O]
    person_states: np.ndarray  # [P]
    object_states: np.ndarray  # [O], -1 where absent
    labels: np.ndarray         # [n_targets, 4]

    @property
    def person_mask(self) -> np.ndarray:
        return np.ones(self.persons.shape[0], dtype=bool)

    @property
    def n_targets(self) -> int:
        return self.labels.shape[0]

    @property
    def target_mask(self) -> np.ndarray:
        mask = np.zeros(self.persons.shape[0], dtype=bool)
        mask[:self.n_targets] = True
        return mask


@dataclass
class Prototypes:
    persons: np.ndarray  # [n_person_states, proto_dim]
    objects: np.ndarray  # [n_object_states, proto_dim]


@dataclass
class Dataset:
    config: WorldConfig
    prototypes: Prototypes
    clips: List[ClipSample] = field(default_factory=list)

    def __post_init__(self):
        self._index: Dict[Tuple[int, int], ClipSample] = {
            (c.video_id, c.clip_idx): c for c in self.clips
        }

    def __len__(self):
        return len(self.clips)

    @property
    def video_ids(self) -> List[int]:
        return sorted({c.video_id for c in self.clips})

    def clip(self, video_id: int, clip_idx: int) -> ClipSample:
        try:
            return self._index[(video_id, clip_idx)]
        except KeyError:
            raise KeyError(f"no clip {video_id}:{clip_idx} in dataset") from None

    def has_clip(self, video_id: int, clip_idx: int) -> bool:
        return (video_id, clip_idx) in self._index

    def clips_of(self, videos) -> List[ClipSample]:
        wanted = set(videos)
        return [c for c in self.clips if c.video_id in wanted]

    def split(self, eval_fraction: float) -> Tuple[List[int], List[int]]:
        """(train video ids, eval video ids): the last videos are held out"""
        videos = self.video_ids
        n = len(videos)
        if eval_fraction <= 0 or n < 2:
            return videos, []
        n_eval = min(n - 1, max(1, int(round(n * eval_fraction))))
        return videos[:n - n_eval], videos[n - n_eval:]


def make_prototypes(config: WorldConfig) -> Prototypes:
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0])
    return Prototypes(
        persons=rng.normal(size=(config.n_person_states, config.proto_dim)),
        objects=rng.normal(size=(config.n_object_states, config.proto_dim)),
    )


def _state_probs(n_states: int, fixed: List[float]) -> np.ndarray:
    rest = (1.0 - sum(fixed)) / (n_states - len(fixed))
    return np.array(fixed + [rest] * (n_states - len(fixed)))


def clip_labels(config: WorldConfig, video_person_states: np.ndarray, object_states: np.ndarray,
                clip_idx: int) -> np.ndarray:
    """
    Labels of the target persons of clip `clip_idx` (1-based)

    Args:
        video_person_states: [T, P] person states of every clip of the video
        object_states: [O] object states of this clip, -1 where absent
    """
    states = video_person_states[clip_idx - 1]
    history = video_person_states[max(1, clip_idx - config.l_true) - 1:clip_idx - 1]
    has_cup = bool(np.any(object_states == CUP))

    labels = np.zeros((config.targets_per_clip, 4))
    for i in range(config.targets_per_clip):
        others = np.delete(states, i)
        labels[i, 0] = states[i] in POSE_STATES
        labels[i, 1] = bool(np.any(others == SPEAKER))
        labels[i, 2] = has_cup
        labels[i, 3] = bool(np.any(history[:, i] == OPEN)) if len(history) else False
    return labels


def _generate_video(config: WorldConfig, prototypes: Prototypes, video_id: int,
                    seed: np.random.SeedSequence) -> List[ClipSample]:
    rng = np.random.default_rng(seed)
    T, P, O = config.clips_per_video, config.persons_per_clip, config.objects_per_clip
    person_probs = _state_probs(config.n_person_states, [config.speaker_prob, config.open_prob])
    object_probs = _state_probs(config.n_object_states, [config.cup_prob])

    person_states = rng.choice(config.n_person_states, size=(T, P), p=person_probs)
    n_objects = rng.integers(0, O + 1, size=T)
    object_states = np.full((T, O), -1, dtype=np.int64)
    for t in range(T):
        object_states[t, :n_objects[t]] = rng.choice(config.n_object_states, size=n_objects[t], p=object_probs)

    slot_codes = np.eye(P)
    clip_codes = np.eye(T)
    clips = []
    for t in range(T):
        person_noise = rng.normal(scale=config.noise_sigma, size=(P, config.proto_dim))
        object_noise = rng.normal(scale=config.noise_sigma, size=(O, config.proto_dim))

        persons = np.hstack([
            prototypes.persons[person_states[t]] + person_noise,
            slot_codes,
            np.repeat(clip_codes[t][None, :], P, axis=0),
        ])

        mask = object_states[t] >= 0
        objects = np.zeros((O, config.d_in))
        if mask.any():
            present = object_states[t][mask]
            objects[mask] = np.hstack([
                prototypes.objects[present] + object_noise[mask],
                np.zeros((len(present), P)),
                np.repeat(clip_codes[t][None, :], len(present), axis=0),
            ])

        clips.append(ClipSample(
            video_id=video_id,
            clip_idx=t + 1,
            persons=persons,
            objects=objects,
            object_mask=mask,
            person_states=person_states[t].copy(),
            object_states=object_states[t].copy(),
            labels=clip_labels(config, person_states, object_states[t], t + 1),
        ))
    return clips


def generate_dataset(config: WorldConfig) -> Dataset:
    """
    Deterministic under config.seed; each video draws from its own spawned
    seed stream, so the result does not depend on config.workers.
    """
    prototypes = make_prototypes(config)
    streams = np.random.SeedSequence(config.seed).spawn(config.n_videos + 1)[1:]

    jobs = [(config, prototypes, v, streams[v]) for v in range(config.n_videos)]
    if config.workers > 1 and config.n_videos > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as executor:
            videos = list(executor.map(lambda job: _generate_video(*job), jobs))
    else:
        videos = [_generate_video(*job) for job in jobs]

    clips = [clip for video in videos for clip in video]
    logger.info(f"[WORLD] Generated {config.n_videos} videos, {len(clips)} clips (seed={config.seed})")
    return Dataset(config, prototypes, clips)


def regenerate_labels(dataset: Dataset) -> Dict[Tuple[int, int], np.ndarray]:
    """Labels recomputed from the stored latent states"""
    config = dataset.config
    labels = {}
    for video_id in dataset.video_ids:
        video = sorted(dataset.clips_of([video_id]), key=lambda c: c.clip_idx)
        states = np.stack([c.person_states for c in video])
        for clip in video:
            labels[(video_id, clip.clip_idx)] = clip_labels(config, states, clip.object_states, clip.clip_idx)
    return labels


def decode_states(dataset: Dataset, clip: ClipSample) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest-prototype decoding of the raw inputs; exact when noise_sigma = 0"""
    proto_dim = dataset.config.proto_dim

    def nearest(raw, protos):
        distances = ((raw[:, None, :proto_dim] - protos[None, :, :]) ** 2).sum(axis=2)
        return distances.argmin(axis=1)

    person_states = nearest(clip.persons, dataset.prototypes.persons)
    object_states = np.full(clip.objects.shape[0], -1, dtype=np.int64)
    if clip.object_mask.any():
        object_states[clip.object_mask] = nearest(clip.objects[clip.object_mask], dataset.prototypes.objects)
    return person_states, object_states


def _record_dtype(config: WorldConfig) -> np.dtype:
    P, O = config.persons_per_clip, config.objects_per_clip
    return np.dtype([
        ("video_id", "<i8"),
        ("clip_idx", "<i8"),
        ("person_states", "<i8", (P,)),
        ("object_states", "<i8", (O,)),
        ("object_mask", "u1", (O,)),
        ("persons", "<f8", (P, config.d_in)),
        ("objects", "<f8", (O, config.d_in)),
        ("labels", "u1", (config.targets_per_clip, 4)),
    ])


def save_dataset(dataset: Dataset, path) -> Path:
    """Manifest line (world config, clip count) followed by one binary record per clip"""
    config = dataset.config
    records = np.zeros(len(dataset), dtype=_record_dtype(config))
    for i, clip in enumerate(dataset.clips):
        records[i] = (clip.video_id, clip.clip_idx, clip.person_states, clip.object_states,
                      clip.object_mask.astype(np.uint8), clip.persons, clip.objects,
                      clip.labels.astype(np.uint8))

    manifest = {"world": config.model_dump(), "clips": len(dataset), "seed": config.seed}
    path = write_manifest_file(path, DATASET_FORMAT, DATASET_VERSION, manifest, records.tobytes())
    logger.info(f"[WORLD] Saved {len(dataset)} clips to {path}")
    return path


def load_dataset(path) -> Dataset:
    manifest, payload = read_manifest_file(path, DATASET_FORMAT, DATASET_VERSION)
    try:
        config = WorldConfig.model_validate(manifest["world"])
        count = int(manifest["clips"])
    except (KeyError, TypeError, ValueError) as e:
        raise FileFormatError(f"{path}: unreadable dataset manifest ({e})") from e

    dtype = _record_dtype(config)
    if len(payload) != count * dtype.itemsize:
        raise FileFormatError(f"{path}: expected {count} clip records, payload has {len(payload)} bytes")

    clips = []
    for record in np.frombuffer(payload, dtype=dtype, count=count):
        clips.append(ClipSample(
            video_id=int(record["video_id"]),
            clip_idx=int(record["clip_idx"]),
            persons=np.array(record["persons"], dtype=np.float64),
            objects=np.array(record["objects"], dtype=np.float64),
            object_mask=np.array(record["object_mask"], dtype=bool),
            person_states=np.array(record["person_states"], dtype=np.int64),
            object_states=np.array(record["object_states"], dtype=np.int64),
            labels=np.array(record["labels"], dtype=np.float64),
        ))

    logger.info(f"[WORLD] Loaded {count} clips from {path}")
    return Dataset(config, make_prototypes(config), clips)
