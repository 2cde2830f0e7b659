"""
Evaluation
Frame-level multi-label average precision on held-out videos
"""
import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.special import expit

from src.memory import MemoryKey, MemoryPool
from src.utils.errors import EmptySplitError, ShapeMismatchError
from .model import AIAModel
from .world import CLASS_NAMES, Dataset

logger = logging.getLogger(__name__)

# Inference reads use err equal to every stored tag, so each written neighbour gets weight 1
INFERENCE_LOSS_TAG = 1.0


def average_precision(scores, labels) -> Optional[float]:
    """
    Area under the precision-recall curve with all-points interpolation

    Ties keep their input order. Returns None when there are no positives.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1).astype(bool)
    if scores.shape != labels.shape:
        raise ShapeMismatchError(f"average_precision: {scores.shape[0]} scores vs {labels.shape[0]} labels")

    n_pos = int(labels.sum())
    if n_pos == 0:
        return None

    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    precision = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    return float(envelope[hits].sum() / n_pos)


@dataclass
class EvalReport:
    per_class_ap: List[Optional[float]]
    mean_ap: Optional[float]
    n_clips: int
    n_targets: int
    videos: List[int]

    def to_dict(self) -> Dict:
        report = asdict(self)
        report["classes"] = list(CLASS_NAMES)
        return report


def fill_inference_pool(model: AIAModel, dataset: Dataset, videos: Sequence[int]) -> MemoryPool:
    """One sweep writing encoder person features of every clip"""
    pool = MemoryPool(model.capacity, model.d, model.window, dataset.config.clips_per_video)
    for clip in dataset.clips_of(videos):
        persons, _ = model.encoder.encode_clip(clip)
        pool.write(MemoryKey(clip.video_id, clip.clip_idx), persons, INFERENCE_LOSS_TAG, 0)
    return pool


def predict(model: AIAModel, dataset: Dataset, videos: Sequence[int]):
    """(sigmoid scores, labels) stacked over every target of every clip"""
    pool = fill_inference_pool(model, dataset, videos)
    scores, labels = [], []
    for clip in dataset.clips_of(videos):
        window = pool.read_window(MemoryKey(clip.video_id, clip.clip_idx), INFERENCE_LOSS_TAG)
        logits, _ = model.forward(clip, window)
        scores.append(expit(logits.data))
        labels.append(clip.labels)
    return np.vstack(scores), np.vstack(labels)


def evaluate_map(model: AIAModel, dataset: Dataset, videos: Sequence[int]) -> EvalReport:
    """
    Per-class AP and mAP over the given videos

    Classes without positives report None and are left out of the mean.
    """
    clips = dataset.clips_of(videos)
    if not clips:
        raise EmptySplitError(f"evaluation split {list(videos)} has no clips")

    scores, labels = predict(model, dataset, videos)
    per_class = [average_precision(scores[:, c], labels[:, c]) for c in range(labels.shape[1])]
    defined = [ap for ap in per_class if ap is not None]
    mean_ap = float(np.mean(defined)) if defined else None

    report = EvalReport(per_class, mean_ap, len(clips), int(labels.shape[0]), sorted(set(videos)))
    logger.info(f"[EVAL] {len(clips)} clips, mAP={mean_ap}")
    return report
