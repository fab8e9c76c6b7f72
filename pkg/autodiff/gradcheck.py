import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from autodiff.tensor import Tensor, no_grad

logger = logging.getLogger(__name__)

# Gradients smaller than this are compared in absolute terms.
RELATIVE_FLOOR = 1e-6


@dataclass(frozen=True)
class GradCheckReport:
    max_relative_error: float
    n_checked: int
    tolerance: float
    worst_param: int
    worst_index: int

    @property
    def passed(self) -> bool:
        return self.max_relative_error <= self.tolerance


def grad_check(
    forward: Callable[[], Tensor],
    params: Sequence[Tensor],
    tolerance: float = 1e-4,
    h: float = 1e-5,
    samples_per_param: int = 20,
    seed: int = 0,
) -> GradCheckReport:
    """Compare backward() against central differences on sampled coordinates."""
    rng = np.random.default_rng(seed)
    for p in params:
        p.zero_grad()
    forward().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = (0.0, 0, 0)
    checked = 0
    with no_grad():
        for k, p in enumerate(params):
            p.data = np.ascontiguousarray(p.data)
            flat = p.data.reshape(-1)
            count = min(samples_per_param, flat.size)
            for i in rng.choice(flat.size, size=count, replace=False):
                original = flat[i]
                flat[i] = original + h
                plus = forward().item()
                flat[i] = original - h
                minus = forward().item()
                flat[i] = original
                numeric = (plus - minus) / (2 * h)
                exact = analytic[k].reshape(-1)[i]
                error = abs(exact - numeric) / max(abs(exact), abs(numeric), RELATIVE_FLOOR)
                checked += 1
                if error > worst[0]:
                    worst = (error, k, int(i))

    report = GradCheckReport(worst[0], checked, tolerance, worst[1], worst[2])
    logger.debug(f"Gradient check over {checked} coordinates: max relative error {report.max_relative_error:.3e}")
    return report
