"""
Interaction Aggregation Module
Composes P/O/M interaction blocks into parallel, serial or dense serial structures
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config.run_config import IAConfig, check_order
from src.autograd import (
    Tensor, add, index_row, matmul, mul, scale, softmax_rows, stack_rows, take_rows, transpose,
)
from src.utils.errors import ShapeMismatchError
from .block import BlockParams, FeatureSet, block_forward

logger = logging.getLogger(__name__)


@dataclass
class TraceEntry:
    """One executed block: what it attended from and to"""
    index: int
    kind: str
    block: BlockParams
    query: FeatureSet
    kv: FeatureSet


@dataclass
class IAStack:
    """
    Ordered interaction blocks

    serial / dense_serial: blocks run in list order.
    parallel: blocks are grouped per kind into branches of `repeats` blocks.
    dense_logits[i][j] is the [d] logit vector for predecessor j of block i
    (j=0 is the raw person input); present only for dense_serial.
    """
    structure: str
    order: List[str]
    repeats: int
    d: int
    blocks: List[BlockParams] = field(default_factory=list)
    dense_logits: Optional[List[List[Tensor]]] = None

    @classmethod
    def empty(cls, d: int) -> "IAStack":
        """No interaction at all: features pass straight to the classifier"""
        return cls(structure="none", order=[], repeats=0, d=d)

    @property
    def branches(self) -> List[List[BlockParams]]:
        if self.structure != "parallel":
            return [self.blocks]
        return [self.blocks[i:i + self.repeats] for i in range(0, len(self.blocks), self.repeats)]

    def predecessors(self, index: int) -> int:
        """|C(i)|: the input stage plus every earlier block"""
        return index + 1

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        named = []
        for i, block in enumerate(self.blocks):
            named += block.named_parameters(prefix=f"ia.blocks.{i}.{block.kind}.")
        if self.dense_logits is not None:
            for i, logits in enumerate(self.dense_logits):
                for j, tensor in enumerate(logits):
                    tensor.name = f"ia.dense.{i}.{j}"
                    named.append((tensor.name, tensor))
        return named


def build(config: IAConfig, seed: int) -> IAStack:
    """Initialize a stack from its configuration"""
    if config.structure == "none":
        return IAStack.empty(config.d)

    order = check_order(config.order)
    rng = np.random.default_rng(seed)
    if config.structure == "parallel":
        kinds = [kind for kind in order for _ in range(config.repeats)]
    else:
        kinds = [kind for _ in range(config.repeats) for kind in order]

    blocks = [
        BlockParams.initialize(kind, config.d, config.hidden, config.ffn_enabled, rng, config.ln_eps)
        for kind in kinds
    ]

    dense_logits = None
    if config.structure == "dense_serial":
        # zero logits: every block starts from a uniform average of its predecessors
        dense_logits = [
            [Tensor(np.zeros(config.d), requires_grad=True) for _ in range(i + 1)]
            for i in range(len(blocks))
        ]

    stack = IAStack(config.structure, order, config.repeats, config.d, blocks, dense_logits)
    logger.debug(f"[IA] Built {config.structure} stack: {'-'.join(kinds)}")
    return stack


def dense_weights(logits: Sequence[Tensor]) -> Tensor:
    """Per-dimension softmax across predecessors: [J, d], each column sums to 1"""
    stacked = stack_rows(list(logits))
    return transpose(softmax_rows(transpose(stacked)))


def dense_query(prev_outputs: Sequence[Tensor], logits: Sequence[Tensor]) -> Tensor:
    """Q_i = sum_j softmax_j(W)[j] * E_j"""
    if not prev_outputs:
        raise ShapeMismatchError("dense_query needs at least one predecessor")
    if len(prev_outputs) != len(logits):
        raise ShapeMismatchError(
            f"dense_query: {len(prev_outputs)} predecessors but {len(logits)} logit vectors"
        )

    weights = dense_weights(logits)
    query = None
    for j, output in enumerate(prev_outputs):
        term = mul(output, index_row(weights, j))
        query = term if query is None else add(query, term)
    return query


def _run_block(stack_index: int, block: BlockParams, query: FeatureSet,
               objects: FeatureSet, memory: FeatureSet, trace: Optional[list]) -> FeatureSet:
    if block.kind == "P":
        kv = query
    elif block.kind == "O":
        kv = objects
    else:
        kv = memory

    if trace is not None:
        trace.append(TraceEntry(stack_index, block.kind, block, query.detach(), kv.detach()))
    return block_forward(block, query, kv)


def ia_forward(stack: IAStack, persons: FeatureSet, objects: FeatureSet, memory: FeatureSet,
               targets: Optional[np.ndarray] = None, trace: Optional[list] = None) -> Tensor:
    """
    Action features A_t for the target persons

    Args:
        targets: boolean row mask selecting target persons (defaults to the person mask)
        trace: optional list that receives one TraceEntry per executed block
    """
    for name, fs in (("persons", persons), ("objects", objects), ("memory", memory)):
        if fs.d != stack.d:
            raise ShapeMismatchError(f"ia_forward: {name} have dim {fs.d}, stack expects {stack.d}")

    if stack.structure == "none" or not stack.blocks:
        current = persons

    elif stack.structure == "serial":
        current = persons
        for i, block in enumerate(stack.blocks):
            current = _run_block(i, block, current, objects, memory, trace)

    elif stack.structure == "dense_serial":
        outputs = [persons.features]
        current = persons
        for i, block in enumerate(stack.blocks):
            query = FeatureSet(dense_query(outputs, stack.dense_logits[i]), persons.mask)
            current = _run_block(i, block, query, objects, memory, trace)
            outputs.append(current.features)

    elif stack.structure == "parallel":
        merged = None
        index = 0
        branches = stack.branches
        for branch in branches:
            branch_out = persons
            for block in branch:
                branch_out = _run_block(index, block, branch_out, objects, memory, trace)
                index += 1
            merged = branch_out.features if merged is None else add(merged, branch_out.features)
        current = FeatureSet(scale(merged, 1.0 / len(branches)), persons.mask)

    else:
        raise ValueError(f"Unknown IA structure '{stack.structure}'")

    selected = persons.mask if targets is None else np.asarray(targets, dtype=bool) & persons.mask
    return take_rows(current.features, np.flatnonzero(selected))


def classify(head_weights: Tensor, features: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Per-person multi-label logits"""
    if features.data.ndim != 2 or features.shape[1] != head_weights.shape[0]:
        raise ShapeMismatchError(
            f"classify: features {features.shape} do not match head {head_weights.shape}"
        )
    logits = matmul(features, head_weights)
    return logits if bias is None else add(logits, bias)
