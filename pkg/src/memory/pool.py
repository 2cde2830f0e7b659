"""
Asynchronous Memory Pool
Loss-tagged estimated person features, read with a staleness penalty and overwritten every iteration
"""
import logging
import math
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.autograd import Tensor, concat_rows, take_rows
from src.interaction.block import FeatureSet
from src.utils.binary_io import read_manifest_file, write_manifest_file
from src.utils.errors import FileFormatError, MemoryKeyError, PenaltyDomainError, ShapeMismatchError

logger = logging.getLogger(__name__)

INF = math.inf
POOL_FORMAT = "aia-memory-pool"
POOL_VERSION = 1


def penalty(delta: float, err: float) -> float:
    """
    w = min(err / delta, delta / err)

    delta = 0 (never written) and err = INF (first iteration) both give 0.
    """
    if err is None or math.isnan(err) or err <= 0:
        raise PenaltyDomainError(f"loss value must be positive, got {err}")
    if math.isnan(delta) or delta < 0:
        raise PenaltyDomainError(f"loss tag must be non-negative, got {delta}")
    if delta == 0 or math.isinf(err) or math.isinf(delta):
        return 0.0
    return min(err / delta, delta / err)


@dataclass(frozen=True, order=True)
class MemoryKey:
    video_id: int
    clip_idx: int


@dataclass(frozen=True)
class MemoryEntry:
    """Immutable pool record; replacing an entry swaps the whole record"""
    features: np.ndarray
    mask: np.ndarray
    loss_tag: float
    write_step: int

    @classmethod
    def zero_init(cls, capacity: int, d: int) -> "MemoryEntry":
        features = np.zeros((capacity, d))
        mask = np.zeros(capacity, dtype=bool)
        features.setflags(write=False)
        mask.setflags(write=False)
        return cls(features, mask, 0.0, 0)

    @property
    def is_zero_init(self) -> bool:
        return self.write_step == 0 and self.loss_tag == 0.0 and not self.mask.any()

    def scaled(self, weight: float) -> FeatureSet:
        return FeatureSet(Tensor.constant(self.features * weight), self.mask.copy())

    def same_as(self, other: "MemoryEntry") -> bool:
        return (
            self.loss_tag == other.loss_tag
            and self.write_step == other.write_step
            and np.array_equal(self.mask, other.mask)
            and np.array_equal(self.features, other.features)
        )


def fit_rows(features: FeatureSet, capacity: int) -> FeatureSet:
    """
    Keep the first `capacity` valid rows (insertion order), zero-pad the rest

    Gradients flow through the kept rows.
    """
    kept = features.valid_rows[:capacity]
    parts = [take_rows(features.features, kept)]
    if len(kept) < capacity:
        parts.append(Tensor.constant(np.zeros((capacity - len(kept), features.d))))
    mask = np.zeros(capacity, dtype=bool)
    mask[:len(kept)] = True
    return FeatureSet(concat_rows(parts), mask)


class MemoryPool:
    """
    Memory pool keyed by (video, clip)

    Any in-bounds key resolves; keys never written read as zero-init entries.
    Writes replace an entry in one assignment under a lock, so readers never
    see features and loss tag from different writes.
    """

    def __init__(self, capacity: int, d: int, window: int, clips_per_video: int):
        self.capacity = capacity
        self.d = d
        self.window = window
        self.clips_per_video = clips_per_video
        self._entries: Dict[MemoryKey, MemoryEntry] = {}
        self._lock = threading.Lock()
        self._zero = MemoryEntry.zero_init(capacity, d)

    def in_bounds(self, key: MemoryKey) -> bool:
        return 1 <= key.clip_idx <= self.clips_per_video

    def get(self, key: MemoryKey) -> MemoryEntry:
        if not self.in_bounds(key):
            return self._zero
        with self._lock:
            return self._entries.get(key, self._zero)

    def write(self, key: MemoryKey, features: FeatureSet, err: float, step: int):
        """WRITE: store detached features tagged with the current loss"""
        if not self.in_bounds(key):
            raise MemoryKeyError(f"clip {key.clip_idx} outside [1, {self.clips_per_video}]")
        if not (math.isfinite(err) and err > 0):
            raise PenaltyDomainError(f"loss tag must be finite and positive, got {err}")
        if features.d != self.d:
            raise ShapeMismatchError(f"pool stores dim {self.d}, got features of dim {features.d}")

        kept = features.valid_rows[:self.capacity]
        stored = np.zeros((self.capacity, self.d))
        stored[:len(kept)] = features.features.data[kept]
        mask = np.zeros(self.capacity, dtype=bool)
        mask[:len(kept)] = True
        stored.setflags(write=False)
        mask.setflags(write=False)

        entry = MemoryEntry(stored, mask, float(err), int(step))
        with self._lock:
            self._entries[key] = entry

    def read_window(self, key: MemoryKey, err: float, reweight: bool = True) -> List[FeatureSet]:
        """
        READ the 2L neighbours of key (offsets -L..-1, +1..+L), each scaled by its penalty

        The pool itself is never modified; masks are kept as stored.
        """
        if not self.in_bounds(key):
            raise MemoryKeyError(f"clip {key.clip_idx} outside [1, {self.clips_per_video}]")

        window = []
        for offset in list(range(-self.window, 0)) + list(range(1, self.window + 1)):
            entry = self.get(MemoryKey(key.video_id, key.clip_idx + offset))
            weight = penalty(entry.loss_tag, err) if reweight else 1.0
            window.append(entry.scaled(weight))
        return window

    def entries(self) -> Dict[MemoryKey, MemoryEntry]:
        with self._lock:
            return dict(self._entries)

    def written_count(self) -> int:
        return sum(1 for e in self.entries().values() if not e.is_zero_init)

    def __len__(self):
        return len(self.entries())

    def same_as(self, other: "MemoryPool") -> bool:
        mine, theirs = self.entries(), other.entries()
        return (
            (self.capacity, self.d, self.window, self.clips_per_video)
            == (other.capacity, other.d, other.window, other.clips_per_video)
            and mine.keys() == theirs.keys()
            and all(mine[k].same_as(theirs[k]) for k in mine)
        )

    def _record_dtype(self) -> np.dtype:
        return np.dtype([
            ("video_id", "<i8"),
            ("clip_idx", "<i8"),
            ("loss_tag", "<f8"),
            ("write_step", "<i8"),
            ("mask", "u1", (self.capacity,)),
            ("features", "<f8", (self.capacity, self.d)),
        ])

    def save(self, path) -> Path:
        entries = self.entries()
        records = np.zeros(len(entries), dtype=self._record_dtype())
        for i, key in enumerate(sorted(entries)):
            entry = entries[key]
            records[i] = (key.video_id, key.clip_idx, entry.loss_tag, entry.write_step,
                          entry.mask.astype(np.uint8), entry.features)

        manifest = {
            "capacity": self.capacity,
            "d": self.d,
            "window": self.window,
            "clips_per_video": self.clips_per_video,
            "entries": len(entries),
        }
        path = write_manifest_file(path, POOL_FORMAT, POOL_VERSION, manifest, records.tobytes())
        logger.info(f"[POOL] Saved {len(entries)} entries to {path}")
        return path

    @classmethod
    def load(cls, path) -> "MemoryPool":
        manifest, payload = read_manifest_file(path, POOL_FORMAT, POOL_VERSION)
        try:
            fields = {}
            for name, low in (("capacity", 1), ("d", 1), ("window", 0), ("clips_per_video", 1), ("entries", 0)):
                value = manifest[name]
                if isinstance(value, bool) or not isinstance(value, int) or value < low:
                    raise ValueError(f"{name}={value!r} must be an integer >= {low}")
                fields[name] = value
            pool = cls(fields["capacity"], fields["d"], fields["window"], fields["clips_per_video"])
            count = fields["entries"]
            dtype = pool._record_dtype()
        except (KeyError, TypeError, ValueError) as e:
            raise FileFormatError(f"{path}: invalid pool manifest ({e})") from e

        if len(payload) != count * dtype.itemsize:
            raise FileFormatError(
                f"{path}: expected {count} records of {dtype.itemsize} bytes, got {len(payload)} bytes"
            )

        for record in np.frombuffer(payload, dtype=dtype, count=count):
            features = np.array(record["features"], dtype=np.float64)
            mask = np.array(record["mask"], dtype=bool)
            features.setflags(write=False)
            mask.setflags(write=False)
            key = MemoryKey(int(record["video_id"]), int(record["clip_idx"]))
            pool._entries[key] = MemoryEntry(features, mask, float(record["loss_tag"]),
                                             int(record["write_step"]))

        logger.info(f"[POOL] Loaded {count} entries from {path}")
        return pool


def read_window(pool: MemoryPool, key: MemoryKey, err: float, reweight: bool = True) -> List[FeatureSet]:
    return pool.read_window(key, err, reweight=reweight)


def write(pool: MemoryPool, key: MemoryKey, features: FeatureSet, err: float, step: int):
    pool.write(key, features, err, step)


def assemble_memory(window: Sequence[FeatureSet], current: FeatureSet,
                    window_size: Optional[int] = None) -> FeatureSet:
    """
    M = [P_{t-L}, ..., P_{t-1}, P_t (live), P_{t+1}, ..., P_{t+L}]

    Row r of the result belongs to clip t - L + r // K.
    """
    if window_size is not None and len(window) != 2 * window_size:
        raise ShapeMismatchError(f"memory window has {len(window)} clips, expected {2 * window_size}")
    if len(window) % 2:
        raise ShapeMismatchError(f"memory window must hold 2L clips, got {len(window)}")
    for fs in window:
        if fs.n != current.n or fs.d != current.d:
            raise ShapeMismatchError(
                f"memory window set {fs.features.shape} does not match current {current.features.shape}"
            )

    half = len(window) // 2
    ordered = list(window[:half]) + [current] + list(window[half:])
    if len(ordered) == 1:
        return FeatureSet(current.features, current.mask.copy())
    return FeatureSet(
        concat_rows([fs.features for fs in ordered]),
        np.concatenate([fs.mask for fs in ordered]),
    )


def save_pool(pool: MemoryPool, path) -> Path:
    return pool.save(path)


def load_pool(path) -> MemoryPool:
    return MemoryPool.load(path)
