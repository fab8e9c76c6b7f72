from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from common.exceptions import ShapeMismatchError
from autodiff.tensor import Parameter

DEFAULT_LEARNING_RATE = 0.02
DEFAULT_MOMENTUM = 0.8


@dataclass
class OptimizerState:
    learning_rate: float = DEFAULT_LEARNING_RATE
    momentum: float = DEFAULT_MOMENTUM
    velocity: list[np.ndarray] = field(default_factory=list)


def sgd_momentum_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray | None],
    state: OptimizerState,
) -> list[np.ndarray]:
    """
    Heavy-ball momentum: v <- momentum * v + g, p <- p - lr * v.
    A missing gradient counts as zero.
    """
    if not state.velocity:
        state.velocity = [np.zeros_like(p) for p in params]
    updated, velocity = [], []
    for p, g, v in zip(params, grads, state.velocity, strict=True):
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape or v.shape != p.shape:
            raise ShapeMismatchError("sgd_momentum_step", p.shape, g.shape)
        v = state.momentum * v + g
        velocity.append(v)
        updated.append(p - state.learning_rate * v)
    state.velocity = velocity
    return updated


class SGDMomentum:
    def __init__(self, params: Sequence[Parameter], learning_rate=DEFAULT_LEARNING_RATE, momentum=DEFAULT_MOMENTUM):
        self.params = list(params)
        self.state = OptimizerState(
            learning_rate=learning_rate,
            momentum=momentum,
            velocity=[np.zeros_like(p.data) for p in self.params],
        )

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        updated = sgd_momentum_step(
            [p.data for p in self.params], [p.grad for p in self.params], self.state
        )
        for p, data in zip(self.params, updated):
            p.data = data
