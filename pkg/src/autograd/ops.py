"""
Differentiable Operations
Every op computes its forward value with numpy and registers a backward rule on the active tape
"""
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.special import expit

from src.utils.errors import ShapeMismatchError, TargetValueError
from .tensor import Tensor, current_meter, current_tape


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor.constant(x)


def _emit(op: str, data: np.ndarray, parents: Sequence[Tensor],
          backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> Tensor:
    """Wrap a forward result and record it when any parent needs a gradient"""
    out = Tensor(data)
    tape = current_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.record(op, out, tuple(parents), backward_fn)
    return out


def _check_binary(op: str, a: Tensor, b: Tensor) -> bool:
    """Returns True when b is a [n] row broadcast over a [m, n]"""
    if a.shape == b.shape:
        return False
    if a.data.ndim == 2 and b.data.ndim == 1 and b.shape[0] == a.shape[1]:
        return True
    raise ShapeMismatchError(f"{op}: shapes {a.shape} and {b.shape} do not match")


# Linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """[m, k] @ [k, n] -> [m, n]"""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    meter = current_meter()
    if meter is not None:
        meter.add_multiply_adds(a.shape[0] * a.shape[1] * b.shape[1])

    a_data, b_data = a.data, b.data

    def backward_fn(g):
        return g @ b_data.T, a_data.T @ g

    return _emit("matmul", a_data @ b_data, (a, b), backward_fn)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeMismatchError(f"transpose: expected a matrix, got {a.shape}")
    return _emit("transpose", a.data.T.copy(), (a,), lambda g: (g.T,))


# Elementwise

def add(a: Tensor, b: Tensor) -> Tensor:
    b = _as_tensor(b)
    broadcast = _check_binary("add", a, b)

    def backward_fn(g):
        return g, (g.sum(axis=0) if broadcast else g)

    return _emit("add", a.data + b.data, (a, b), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    b = _as_tensor(b)
    broadcast = _check_binary("mul", a, b)
    a_data, b_data = a.data, b.data

    def backward_fn(g):
        grad_b = g * a_data
        return g * b_data, (grad_b.sum(axis=0) if broadcast else grad_b)

    return _emit("mul", a_data * b_data, (a, b), backward_fn)


def relu(a: Tensor) -> Tensor:
    gate = a.data > 0
    return _emit("relu", np.where(gate, a.data, 0.0), (a,), lambda g: (g * gate,))


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return _emit("scale", a.data * factor, (a,), lambda g: (g * factor,))


_ELEMENTWISE = {
    "add": add,
    "mul": mul,
    "relu": relu,
    "scale": scale,
}


def elementwise(kind: str, *args) -> Tensor:
    """Dispatch one of add / mul / relu / scale by name"""
    if kind not in _ELEMENTWISE:
        raise ValueError(f"Unknown elementwise op '{kind}'. Options: {sorted(_ELEMENTWISE)}")
    return _ELEMENTWISE[kind](*args)


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _emit("sum", np.array(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),))


# Row structure

def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack [n_i, d] matrices vertically"""
    if not tensors:
        raise ShapeMismatchError("concat_rows: nothing to concatenate")
    width = tensors[0].shape[1:]
    for t in tensors:
        if t.data.ndim != 2 or t.shape[1:] != width:
            raise ShapeMismatchError(
                f"concat_rows: shapes {[x.shape for x in tensors]} do not share a width"
            )
    bounds = np.cumsum([0] + [t.shape[0] for t in tensors])

    def backward_fn(g):
        return [g[bounds[i]:bounds[i + 1]] for i in range(len(tensors))]

    return _emit("concat_rows", np.concatenate([t.data for t in tensors], axis=0), tensors, backward_fn)


def take_rows(a: Tensor, index) -> Tensor:
    """Gather rows of a matrix"""
    index = np.asarray(index, dtype=np.int64).reshape(-1)
    shape = a.shape

    def backward_fn(g):
        grad = np.zeros(shape)
        np.add.at(grad, index, g)
        return (grad,)

    return _emit("take_rows", a.data[index].copy(), (a,), backward_fn)


def index_row(a: Tensor, row: int) -> Tensor:
    """Row `row` of a matrix as a [n] vector"""
    shape = a.shape

    def backward_fn(g):
        grad = np.zeros(shape)
        grad[row] = g
        return (grad,)

    return _emit("index_row", a.data[row].copy(), (a,), backward_fn)


def stack_rows(vectors: Sequence[Tensor]) -> Tensor:
    """Stack [n] vectors into a [len, n] matrix"""
    if not vectors:
        raise ShapeMismatchError("stack_rows: nothing to stack")
    width = vectors[0].shape
    if any(v.shape != width or v.data.ndim != 1 for v in vectors):
        raise ShapeMismatchError(f"stack_rows: shapes {[v.shape for v in vectors]} differ")
    return _emit("stack_rows", np.stack([v.data for v in vectors]), vectors,
                 lambda g: [g[i] for i in range(len(vectors))])


# Normalization and losses

def softmax_rows(x: Tensor, mask=None) -> Tensor:
    """
    Row-wise softmax over valid entries

    Masked entries come out exactly 0; a row with no valid entry is all zeros.
    """
    data = x.data
    valid = np.ones(data.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if valid.shape != data.shape:
        raise ShapeMismatchError(f"softmax_rows: mask {valid.shape} vs input {data.shape}")

    row_max = np.max(np.where(valid, data, -np.inf), axis=1, keepdims=True, initial=-np.inf)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    exp = np.where(valid, np.exp(np.where(valid, data - row_max, 0.0)), 0.0)
    denom = exp.sum(axis=1, keepdims=True)
    probs = np.divide(exp, denom, out=np.zeros_like(exp), where=denom > 0)

    def backward_fn(g):
        return (probs * (g - (g * probs).sum(axis=1, keepdims=True)),)

    return _emit("softmax_rows", probs, (x,), backward_fn)


def layer_norm_rows(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row to zero mean / unit variance, then apply gamma and beta"""
    data = x.data
    if data.ndim != 2 or data.shape[1] < 1:
        raise ShapeMismatchError(f"layer_norm_rows: expected [m, n>=1], got {data.shape}")
    n = data.shape[1]
    if gamma.shape != (n,) or beta.shape != (n,):
        raise ShapeMismatchError(
            f"layer_norm_rows: gamma {gamma.shape} / beta {beta.shape} vs width {n}"
        )

    centered = data - data.mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=1, keepdims=True) + eps)
    normed = centered * inv_std
    gamma_data = gamma.data

    def backward_fn(g):
        grad_normed = g * gamma_data
        grad_x = (inv_std / n) * (
            n * grad_normed
            - grad_normed.sum(axis=1, keepdims=True)
            - normed * (grad_normed * normed).sum(axis=1, keepdims=True)
        )
        return grad_x, (g * normed).sum(axis=0), g.sum(axis=0)

    return _emit("layer_norm_rows", normed * gamma_data + beta.data, (x, gamma, beta), backward_fn)


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean sigmoid cross-entropy over all entries (numerically stable)"""
    target_data = targets.data if isinstance(targets, Tensor) else np.asarray(targets, dtype=np.float64)
    if target_data.shape != logits.shape:
        raise ShapeMismatchError(f"bce_with_logits: logits {logits.shape} vs targets {target_data.shape}")
    if not np.isin(target_data, (0.0, 1.0)).all():
        raise TargetValueError("bce_with_logits: targets must be 0 or 1")

    count = logits.size
    if count == 0:
        return _emit("bce", np.array(0.0), (logits,), lambda g: (np.zeros(logits.shape),))

    x = logits.data
    loss = (np.logaddexp(0.0, x) - x * target_data).mean()

    def backward_fn(g):
        return (float(g) * (expit(x) - target_data) / count,)

    return _emit("bce", np.array(loss), (logits,), backward_fn)


def mean_of(scalars: List[Tensor]) -> Tensor:
    """Average a list of scalar tensors"""
    total = scalars[0]
    for s in scalars[1:]:
        total = add(total, s)
    return scale(total, 1.0 / len(scalars))
