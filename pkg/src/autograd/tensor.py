"""
Tensor and Tape
Define-by-run reverse-mode differentiation over dense float64 arrays
"""
import threading
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from src.utils.errors import NonScalarLossError

_state = threading.local()


def _stack(name: str) -> list:
    stack = getattr(_state, name, None)
    if stack is None:
        stack = []
        setattr(_state, name, stack)
    return stack


class Tensor:
    """
    Dense float64 array with an optional gradient

    Leaves are created by the user; tensors produced by ops while a Tape is
    active carry a reference to the node that produced them.
    """

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._node: Optional["Node"] = None

    @classmethod
    def constant(cls, data) -> "Tensor":
        return cls(data, requires_grad=False)

    @classmethod
    def zeros(cls, *shape, requires_grad: bool = False) -> "Tensor":
        return cls(np.zeros(shape), requires_grad=requires_grad)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Copy of the values with no gradient linkage"""
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" '{self.name}'" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class Node:
    """One recorded operation"""
    op: str
    output: Tensor
    parents: tuple
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
    scope: str = "main"


class Tape:
    """
    Ordered record of operations for one forward pass

    Usage:
        with Tape() as tape:
            loss = ...
        backward(loss, tape)
    """

    def __init__(self):
        self.nodes: List[Node] = []
        self.live_floats = 0
        self.peak_floats = 0
        self.floats_by_scope: Dict[str, int] = defaultdict(int)

    def __enter__(self) -> "Tape":
        _stack("tapes").append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _stack("tapes").pop()
        return False

    def record(self, op: str, output: Tensor, parents: tuple, backward_fn) -> Node:
        meter = current_meter()
        scope = meter.current_scope if meter is not None else "main"
        node = Node(op=op, output=output, parents=parents, backward_fn=backward_fn, scope=scope)
        output._node = node
        self.nodes.append(node)

        self.live_floats += output.size
        self.floats_by_scope[scope] += output.size
        self.peak_floats = max(self.peak_floats, self.live_floats)
        return node

    def __len__(self):
        return len(self.nodes)


def current_tape() -> Optional[Tape]:
    tapes = _stack("tapes")
    return tapes[-1] if tapes else None


class ResourceMeter:
    """
    Counts forward multiply-adds per scope and encoder passes

    Only matrix products contribute multiply-adds (m*k*n each).
    """

    def __init__(self):
        self.multiply_adds: Dict[str, int] = defaultdict(int)
        self.encoder_passes = 0
        self._scopes = ["main"]

    def __enter__(self) -> "ResourceMeter":
        _stack("meters").append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _stack("meters").pop()
        return False

    @property
    def current_scope(self) -> str:
        return self._scopes[-1]

    @contextmanager
    def scope(self, name: str):
        self._scopes.append(name)
        try:
            yield self
        finally:
            self._scopes.pop()

    def add_multiply_adds(self, count: int):
        self.multiply_adds[self.current_scope] += int(count)

    @property
    def total_multiply_adds(self) -> int:
        return int(sum(self.multiply_adds.values()))


def current_meter() -> Optional[ResourceMeter]:
    meters = _stack("meters")
    return meters[-1] if meters else None


@contextmanager
def meter_scope(name: str):
    """Attribute work to a named scope when a meter is active, no-op otherwise"""
    meter = current_meter()
    if meter is None:
        yield None
    else:
        with meter.scope(name):
            yield meter


def backward(loss: Tensor, tape: Tape) -> None:
    """
    Populate .grad of every requires_grad leaf reached from loss

    Gradients accumulate into existing .grad arrays; they are cleared by the optimizer.
    """
    if loss.size != 1:
        raise NonScalarLossError(f"backward() needs a scalar loss, got shape {loss.shape}")

    seed = np.ones_like(loss.data)
    if loss.is_leaf:
        if loss.requires_grad:
            loss.grad = seed if loss.grad is None else loss.grad + seed
        return

    grads: Dict[int, np.ndarray] = {id(loss): seed}
    live = tape.live_floats + seed.size
    peak = max(tape.peak_floats, live)

    for node in reversed(tape.nodes):
        upstream = grads.pop(id(node.output), None)
        if upstream is None:
            live -= node.output.size
            continue

        parent_grads = node.backward_fn(upstream)
        for parent, grad in zip(node.parents, parent_grads):
            if grad is None or not parent.requires_grad:
                continue
            if parent.is_leaf:
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                    live += parent.size
                parent.grad = parent.grad + grad
            elif id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + grad
            else:
                grads[id(parent)] = grad
                live += parent.size
            peak = max(peak, live)

        live -= node.output.size + upstream.size

    # leaves on the tape that received no signal still get a (zero) gradient
    for node in tape.nodes:
        for parent in node.parents:
            if parent.is_leaf and parent.requires_grad and parent.grad is None:
                parent.grad = np.zeros_like(parent.data)

    tape.peak_floats = peak
