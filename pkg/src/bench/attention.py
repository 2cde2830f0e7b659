"""
Attention Dumps
Per-block attention maps for one clip, restricted to valid queries and keys
"""
import logging
from pathlib import Path
from typing import List

import pandas as pd

from src.interaction import attention_map
from src.memory import MemoryKey
from .evaluation import INFERENCE_LOSS_TAG, fill_inference_pool
from .model import AIAModel
from .world import Dataset

logger = logging.getLogger(__name__)


def parse_clip_selector(selector: str):
    """'VIDEO:CLIP' -> (video_id, clip_idx)"""
    try:
        video, clip = selector.split(":")
        return int(video), int(clip)
    except ValueError:
        raise ValueError(f"clip selector must look like VIDEO:CLIP, got '{selector}'") from None


def attention_tables(model: AIAModel, dataset: Dataset, video_id: int, clip_idx: int) -> List[tuple]:
    """[(file name, DataFrame)] in block execution order"""
    clip = dataset.clip(video_id, clip_idx)
    pool = fill_inference_pool(model, dataset, [video_id])
    window = pool.read_window(MemoryKey(video_id, clip_idx), INFERENCE_LOSS_TAG)

    trace = []
    model.forward(clip, window, trace=trace)

    tables = []
    for entry in trace:
        weights = attention_map(entry.block, entry.query, entry.kv).data
        rows, cols = entry.query.valid_rows, entry.kv.valid_rows
        table = pd.DataFrame(
            weights[rows][:, cols],
            index=pd.Index([f"q{r}" for r in rows], name="query"),
            columns=[f"k{c}" for c in cols],
        )
        tables.append((f"attn_{entry.index:02d}_{entry.kind}.csv", table))
    return tables


def dump_attention(model: AIAModel, dataset: Dataset, video_id: int, clip_idx: int, output_dir) -> List[Path]:
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, table in attention_tables(model, dataset, video_id, clip_idx):
        path = output_dir / name
        table.to_csv(path)
        paths.append(path)
    logger.info(f"[EVAL] Wrote {len(paths)} attention maps for clip {video_id}:{clip_idx}")
    return paths
