"""Layout helpers shared by every forward pass. Activations are time-major (n_con, batch, features)."""
import numpy as np

from autodiff import tensor as T
from autodiff.tensor import Tensor
from common.exceptions import ShapeMismatchError


def batch_inputs(batch) -> np.ndarray:
    """Accept an EncodedBatch or a bare (batch, n_con, d) array."""
    return np.asarray(getattr(batch, "inputs", batch), dtype=np.float64)


def time_major(batch, n_con: int, d: int) -> Tensor:
    inputs = batch_inputs(batch)
    if inputs.ndim != 3 or inputs.shape[1:] != (n_con, d):
        raise ShapeMismatchError("model input", inputs.shape, ("batch", n_con, d))
    return T.transpose(T.as_tensor(inputs), (1, 0, 2))


def batch_major(x: Tensor) -> Tensor:
    return T.transpose(x, (1, 0, 2))


def project(x: Tensor, weight: Tensor) -> Tensor:
    """
    (n_con, batch, i) @ W -> (n_con, batch, o).

    A shared (i, o) weight is expanded to one copy per position, so shared and
    per-position weights run through the same batched product.
    """
    if weight.ndim == 2:
        weight = T.broadcast_to(weight, (x.shape[0],) + weight.shape)
    return T.matmul(x, weight)


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    if bias.ndim == 1:
        bias = T.broadcast_to(bias, (x.shape[0],) + bias.shape)
    return T.add(x, T.reshape(bias, (bias.shape[0], 1, bias.shape[1])))
