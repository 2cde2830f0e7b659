"""
Action Detection Model
Shared instance encoder, interaction aggregation stack and multi-label head
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.run_config import IAConfig
from src.autograd import Tensor, add, matmul, meter_scope, mul
from src.interaction import FeatureSet, IAStack, build, classify, ia_forward
from src.memory import assemble_memory, fit_rows
from src.utils.binary_io import pack_arrays, read_manifest_file, unpack_arrays, write_manifest_file
from src.utils.errors import FileFormatError
from .world import ClipSample

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "aia-checkpoint"
CHECKPOINT_VERSION = 1
N_CLASSES = 4


@dataclass
class Encoder:
    """Affine map shared by persons and objects: [n, d_in] -> [n, d]"""
    W: Tensor
    b: Tensor

    @classmethod
    def initialize(cls, d_in: int, d: int, rng: np.random.Generator) -> "Encoder":
        bound = 1.0 / math.sqrt(d_in)
        return cls(
            W=Tensor(rng.uniform(-bound, bound, size=(d_in, d)), requires_grad=True),
            b=Tensor(np.zeros(d), requires_grad=True),
        )

    def __call__(self, raw: np.ndarray, mask: np.ndarray) -> FeatureSet:
        mask = np.asarray(mask, dtype=bool)
        encoded = add(matmul(Tensor.constant(raw), self.W), self.b)
        keep = np.repeat(mask[:, None].astype(np.float64), self.W.shape[1], axis=1)
        return FeatureSet(mul(encoded, keep), mask)

    def encode_clip(self, clip: ClipSample) -> Tuple[FeatureSet, FeatureSet]:
        """One encoder pass: persons and objects of a clip"""
        with meter_scope("encoder") as meter:
            if meter is not None:
                meter.encoder_passes += 1
            return self(clip.persons, clip.person_mask), self(clip.objects, clip.object_mask)


class AIAModel:
    """Encoder + IA stack + classifier"""

    def __init__(self, encoder: Encoder, stack: IAStack, head_W: Tensor, head_b: Tensor,
                 ia_config: IAConfig, capacity: int, window: int):
        self.encoder = encoder
        self.stack = stack
        self.head_W = head_W
        self.head_b = head_b
        self.ia_config = ia_config
        self.capacity = capacity
        self.window = window

    @classmethod
    def build(cls, ia_config: IAConfig, d_in: int, capacity: int, window: int, seed: int) -> "AIAModel":
        rng = np.random.default_rng([seed, 1])
        encoder = Encoder.initialize(d_in, ia_config.d, rng)
        bound = 1.0 / math.sqrt(ia_config.d)
        head_W = Tensor(rng.uniform(-bound, bound, size=(ia_config.d, N_CLASSES)), requires_grad=True)
        head_b = Tensor(np.zeros(N_CLASSES), requires_grad=True)
        return cls(encoder, build(ia_config, seed), head_W, head_b, ia_config, capacity, window)

    @property
    def d(self) -> int:
        return self.ia_config.d

    @property
    def d_in(self) -> int:
        return self.encoder.W.shape[0]

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        named = []
        for name, tensor in (("encoder.W", self.encoder.W), ("encoder.b", self.encoder.b)):
            tensor.name = name
            named.append((name, tensor))
        named += self.stack.named_parameters()
        for name, tensor in (("head.W", self.head_W), ("head.b", self.head_b)):
            tensor.name = name
            named.append((name, tensor))
        return named

    def parameters(self) -> List[Tensor]:
        return [t for _, t in self.named_parameters()]

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_state_arrays(self, arrays: Dict[str, np.ndarray]):
        for name, tensor in self.named_parameters():
            if name not in arrays:
                raise FileFormatError(f"checkpoint is missing parameter '{name}'")
            if arrays[name].shape != tensor.shape:
                raise FileFormatError(
                    f"checkpoint parameter '{name}' has shape {arrays[name].shape}, expected {tensor.shape}"
                )
            tensor.data = arrays[name].copy()

    def forward(self, clip: ClipSample, window: Sequence[FeatureSet],
                trace: Optional[list] = None) -> Tuple[Tensor, FeatureSet]:
        """
        Logits [n_targets, 4] for the clip's targets, plus the live person features

        Args:
            window: the 2L neighbour feature sets, ordered by clip offset
        """
        persons, objects = self.encoder.encode_clip(clip)
        current = fit_rows(persons, self.capacity)
        memory = assemble_memory(window, current, self.window)
        features = ia_forward(self.stack, persons, objects, memory, targets=clip.target_mask, trace=trace)
        return classify(self.head_W, features, self.head_b), persons

    def copy(self) -> "AIAModel":
        twin = AIAModel.build(self.ia_config, self.d_in, self.capacity, self.window, seed=0)
        twin.load_state_arrays(self.state_arrays())
        return twin


def save_checkpoint(path, model: AIAModel, velocities: Optional[Dict[str, np.ndarray]] = None,
                    meta: Optional[Dict] = None) -> Path:
    """Parameters, optimizer velocities and trainer state in one file"""
    named = sorted(model.state_arrays().items())
    named += sorted((f"velocity/{k}", v) for k, v in (velocities or {}).items())
    entries, payload = pack_arrays(named)

    manifest = {
        "ia": model.ia_config.model_dump(),
        "d_in": model.d_in,
        "capacity": model.capacity,
        "window": model.window,
        "arrays": entries,
        "meta": meta or {},
    }
    path = write_manifest_file(path, CHECKPOINT_FORMAT, CHECKPOINT_VERSION, manifest, payload)
    logger.info(f"[CKPT] Saved checkpoint to {path}")
    return path


def load_checkpoint(path) -> Tuple[AIAModel, Dict[str, np.ndarray], Dict]:
    """Returns (model, velocities keyed by parameter name, trainer meta)"""
    manifest, payload = read_manifest_file(path, CHECKPOINT_FORMAT, CHECKPOINT_VERSION)
    try:
        ia_config = IAConfig.model_validate(manifest["ia"])
        model = AIAModel.build(ia_config, int(manifest["d_in"]), int(manifest["capacity"]),
                               int(manifest["window"]), seed=0)
        arrays = unpack_arrays(manifest["arrays"], payload)
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, FileFormatError):
            raise
        raise FileFormatError(f"{path}: unreadable checkpoint manifest ({e})") from e

    model.load_state_arrays({k: v for k, v in arrays.items() if not k.startswith("velocity/")})
    velocities = {k[len("velocity/"):]: v for k, v in arrays.items() if k.startswith("velocity/")}
    logger.info(f"[CKPT] Loaded checkpoint from {path}")
    return model, velocities, manifest.get("meta", {})
