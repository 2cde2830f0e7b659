"""
Interaction Block Module
Dot-product attention unit that enhances a query feature set with a key/value set
"""
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from src.autograd import (
    Tensor, add, layer_norm_rows, matmul, mul, relu, scale, softmax_rows, transpose,
)
from src.utils.errors import ShapeMismatchError


@dataclass
class FeatureSet:
    """
    [n, d] instance features plus a validity mask

    Rows with mask=False are zero padding and carry all-zero features.
    """
    features: Tensor
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool).reshape(-1)
        if self.features.data.ndim != 2:
            raise ShapeMismatchError(f"FeatureSet needs [n, d] features, got {self.features.shape}")
        if self.mask.shape[0] != self.features.shape[0]:
            raise ShapeMismatchError(
                f"FeatureSet mask has {self.mask.shape[0]} rows, features have {self.features.shape[0]}"
            )

    @classmethod
    def from_arrays(cls, features, mask) -> "FeatureSet":
        """Constant feature set; padded rows are forced to zero"""
        data = np.array(features, dtype=np.float64)
        mask = np.asarray(mask, dtype=bool).reshape(-1)
        data[~mask] = 0.0
        return cls(Tensor.constant(data), mask)

    @classmethod
    def empty(cls, n: int, d: int) -> "FeatureSet":
        """n padding rows"""
        return cls(Tensor.constant(np.zeros((n, d))), np.zeros(n, dtype=bool))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def valid_rows(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def row_mask_matrix(self) -> np.ndarray:
        """Float [n, d] matrix of ones on valid rows"""
        return np.repeat(self.mask[:, None].astype(np.float64), self.d, axis=1)

    def detach(self) -> "FeatureSet":
        return FeatureSet(self.features.detach(), self.mask.copy())


@dataclass
class BlockParams:
    """Parameters of one P-, O- or M-Block"""
    kind: str
    Wq: Tensor
    Wk: Tensor
    Wv: Tensor
    Wo: Tensor
    ln1_gamma: Tensor
    ln1_beta: Tensor
    ffn_enabled: bool = True
    ln2_gamma: Optional[Tensor] = None
    ln2_beta: Optional[Tensor] = None
    ffn_W1: Optional[Tensor] = None
    ffn_W2: Optional[Tensor] = None
    ln_eps: float = 1e-5

    @classmethod
    def initialize(cls, kind: str, d: int, hidden: int, ffn_enabled: bool,
                   rng: np.random.Generator, ln_eps: float = 1e-5) -> "BlockParams":
        """Projections ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); layer norms start at gamma=1, beta=0"""
        def uniform(rows, cols):
            bound = 1.0 / math.sqrt(rows)
            return Tensor(rng.uniform(-bound, bound, size=(rows, cols)), requires_grad=True)

        block = cls(
            kind=kind,
            Wq=uniform(d, d), Wk=uniform(d, d), Wv=uniform(d, d), Wo=uniform(d, d),
            ln1_gamma=Tensor(np.ones(d), requires_grad=True),
            ln1_beta=Tensor(np.zeros(d), requires_grad=True),
            ffn_enabled=ffn_enabled,
            ln_eps=ln_eps,
        )
        if ffn_enabled:
            if hidden < 1:
                raise ValueError("feed-forward width must be at least 1")
            block.ffn_W1 = uniform(d, hidden)
            block.ffn_W2 = uniform(hidden, d)
            block.ln2_gamma = Tensor(np.ones(d), requires_grad=True)
            block.ln2_beta = Tensor(np.zeros(d), requires_grad=True)
        return block

    @property
    def d(self) -> int:
        return self.Wq.shape[0]

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Tensor]]:
        names = ["Wq", "Wk", "Wv", "Wo", "ln1_gamma", "ln1_beta"]
        if self.ffn_enabled:
            names += ["ffn_W1", "ffn_W2", "ln2_gamma", "ln2_beta"]
        named = []
        for name in names:
            tensor = getattr(self, name)
            tensor.name = f"{prefix}{name}"
            named.append((tensor.name, tensor))
        return named


def _check_dims(params: BlockParams, query: FeatureSet, kv: FeatureSet):
    d = params.d
    if query.d != d or kv.d != d:
        raise ShapeMismatchError(
            f"{params.kind}-Block expects feature dim {d}, got query {query.features.shape} "
            f"and key/value {kv.features.shape}"
        )


def _attention(params: BlockParams, query: FeatureSet, kv: FeatureSet) -> Tuple[Tensor, Tensor]:
    """Returns (attention weights [nq, nk], values [nk, d])"""
    q = matmul(query.features, params.Wq)
    k = matmul(kv.features, params.Wk)
    v = matmul(kv.features, params.Wv)

    logits = scale(matmul(q, transpose(k)), 1.0 / math.sqrt(params.d))
    key_mask = np.broadcast_to(kv.mask[None, :], (query.n, kv.n))
    return softmax_rows(logits, key_mask), v


def block_forward(params: BlockParams, query: FeatureSet, kv: FeatureSet) -> FeatureSet:
    """
    Enhance query features with attention over kv

    E1 = LN(query + (softmax(q k^T / sqrt(d)) v) Wo)
    out = LN(E1 + relu(E1 W1) W2) when the feed-forward path is enabled, else E1
    Padded query rows stay zero; the output mask equals the query mask.
    """
    _check_dims(params, query, kv)

    weights, values = _attention(params, query, kv)
    attended = matmul(matmul(weights, values), params.Wo)
    enhanced = layer_norm_rows(add(query.features, attended), params.ln1_gamma, params.ln1_beta,
                               params.ln_eps)

    if params.ffn_enabled:
        hidden = relu(matmul(enhanced, params.ffn_W1))
        enhanced = layer_norm_rows(add(enhanced, matmul(hidden, params.ffn_W2)),
                                   params.ln2_gamma, params.ln2_beta, params.ln_eps)

    return FeatureSet(mul(enhanced, query.row_mask_matrix()), query.mask.copy())


def attention_map(params: BlockParams, query: FeatureSet, kv: FeatureSet) -> Tensor:
    """
    Softmax attention restricted to valid keys, each row renormalized to 1

    Padded-key columns are 0; with no valid key the map is all zeros.
    """
    _check_dims(params, query, kv)
    weights, _ = _attention(params, query, kv)

    kept = weights.data * kv.mask[None, :]
    totals = kept.sum(axis=1, keepdims=True)
    normalized = np.divide(kept, totals, out=np.zeros_like(kept), where=totals > 0)
    return Tensor.constant(normalized)
