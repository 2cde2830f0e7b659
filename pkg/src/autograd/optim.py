"""
SGD with momentum
"""
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.utils.errors import MissingGradientError
from .tensor import Tensor


def sgd_step(params: Sequence[Tensor], lr: float, momentum: float,
             velocities: Optional[List[np.ndarray]] = None) -> List[np.ndarray]:
    """
    One momentum step: v <- momentum * v + grad, p <- p - lr * v

    Clears every grad. Returns the updated velocity buffers (one per param).
    """
    missing = [p.name or repr(p) for p in params if p.grad is None]
    if missing:
        raise MissingGradientError(f"no gradient for parameter(s): {', '.join(missing)}")

    if velocities is None:
        velocities = [np.zeros_like(p.data) for p in params]

    updated = []
    for param, velocity in zip(params, velocities):
        velocity = momentum * velocity + param.grad
        param.data = param.data - lr * velocity
        param.grad = None
        updated.append(velocity)
    return updated


class SGD:
    """Momentum SGD that owns its velocity buffers"""

    def __init__(self, params: Sequence[Tensor], lr: float, momentum: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.velocities = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.velocities = sgd_step(self.params, self.lr, self.momentum, self.velocities)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {p.name: v.copy() for p, v in zip(self.params, self.velocities)}

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        for i, p in enumerate(self.params):
            if p.name in state:
                self.velocities[i] = np.array(state[p.name], dtype=np.float64).reshape(p.shape)
