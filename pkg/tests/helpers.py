"""
Finite-difference gradient checking
"""
import math
from typing import Callable, List, Sequence

import numpy as np

from src.autograd import Tape, Tensor, backward, mul, sum_all

H = 1e-3
REL_TOL = 1e-4


def numerical_grads(loss_fn: Callable[[], Tensor], tensors: Sequence[Tensor], h: float = H) -> List[np.ndarray]:
    """Central differences of loss_fn() w.r.t. every entry of every tensor"""
    grads = []
    for tensor in tensors:
        grad = np.zeros_like(tensor.data)
        flat = tensor.data.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = loss_fn().item()
            flat[i] = original - h
            minus = loss_fn().item()
            flat[i] = original
            grad.reshape(-1)[i] = (plus - minus) / (2 * h)
        grads.append(grad)
    return grads


def analytic_grads(loss_fn: Callable[[], Tensor], tensors: Sequence[Tensor]) -> List[np.ndarray]:
    for tensor in tensors:
        tensor.grad = None
    with Tape() as tape:
        loss = loss_fn()
    backward(loss, tape)
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1.0)
    return float(np.linalg.norm(analytic - numeric) / scale)


def assert_gradients_match(loss_fn: Callable[[], Tensor], tensors: Sequence[Tensor], tol: float = REL_TOL,
                           h: float = H):
    analytic = analytic_grads(loss_fn, tensors)
    numeric = numerical_grads(loss_fn, tensors, h=h)
    for tensor, a, n in zip(tensors, analytic, numeric):
        err = relative_error(a, n)
        assert err < tol, f"gradient mismatch for {tensor!r}: relative error {err:.2e}"


def leaf(rng: np.random.Generator, *shape, low: float = -1.0, high: float = 1.0, name: str = None) -> Tensor:
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True, name=name)


def away_from_zero(rng: np.random.Generator, *shape, margin: float = 0.05) -> np.ndarray:
    """Uniform [-1, 1] entries with |x| >= margin (keeps relu away from its kink)"""
    values = rng.uniform(-1.0, 1.0, size=shape)
    while np.any(np.abs(values) < margin):
        small = np.abs(values) < margin
        values[small] = rng.uniform(-1.0, 1.0, size=int(small.sum()))
    return values


def weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    """Generic scalar read-out of a tensor"""
    return sum_all(mul(out, Tensor.constant(weights)))


def assert_directional_derivative_matches(loss_fn: Callable[[], Tensor], tensors: Sequence[Tensor],
                                          rng: np.random.Generator, directions: int = 2,
                                          h: float = 1e-6, tol: float = 1e-6):
    """
    Compare <grad, v> with a central difference along random directions v

    v is unit-norm over all tensors. Two loss evaluations per direction.
    """
    analytic = analytic_grads(loss_fn, tensors)
    for _ in range(directions):
        steps = [rng.uniform(-1.0, 1.0, size=t.data.shape) for t in tensors]
        norm = math.sqrt(sum(float(np.sum(v * v)) for v in steps))
        steps = [v / norm for v in steps]
        expected = sum(float(np.sum(g * v)) for g, v in zip(analytic, steps))

        originals = [t.data.copy() for t in tensors]
        values = []
        for sign in (1.0, -1.0):
            for t, original, v in zip(tensors, originals, steps):
                t.data[...] = original + sign * h * v
            values.append(loss_fn().item())
        for t, original in zip(tensors, originals):
            t.data[...] = original

        numeric = (values[0] - values[1]) / (2 * h)
        scale = max(abs(expected) + abs(numeric), 1.0)
        assert abs(expected - numeric) / scale < tol, (
            f"directional derivative mismatch: analytic {expected:.8e}, numeric {numeric:.8e}"
        )
