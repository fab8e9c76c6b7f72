"""Causal MLP and stacked LSTM baselines."""
from typing import NamedTuple

import numpy as np

from autodiff import tensor as T
from autodiff.tensor import Tensor
from common.exceptions import ShapeMismatchError
from networks.functional import batch_inputs, batch_major, project, time_major
from networks.params import CausalMlpParams, LstmLayer, LstmParams


def mlp_forward(params: CausalMlpParams, batch) -> Tensor:
    """
    Fully connected relu stack over the flattened window. The block-causal
    masks keep position t blind to inputs after t; each position then has its
    own readout.
    """
    inputs = batch_inputs(batch)
    n_con, d = params.n_con, params.d
    if inputs.ndim != 3 or inputs.shape[1:] != (n_con, d):
        raise ShapeMismatchError("mlp input", inputs.shape, ("batch", n_con, d))
    batch_size = inputs.shape[0]
    x = T.as_tensor(inputs.reshape(batch_size, n_con * d))
    for weight in params.layers:
        x = T.relu(T.matmul(x, weight.effective()))
    x = T.transpose(T.reshape(x, (batch_size, n_con, d)), (1, 0, 2))
    return batch_major(project(T.rms_norm(x), params.readout))


class LstmGates(NamedTuple):
    input: Tensor
    forget: Tensor
    cell: Tensor
    output: Tensor


def lstm_step(layer: LstmLayer, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor, LstmGates]:
    """One time step of one layer; gates are packed i, f, g, o along the last axis."""
    width = h.shape[-1]
    z = T.add(T.matmul(T.concat([x, h], axis=-1), layer.w), layer.b)
    part = [T.getitem(z, (slice(None), slice(k * width, (k + 1) * width))) for k in range(4)]
    gates = LstmGates(T.sigmoid(part[0]), T.sigmoid(part[1]), T.tanh(part[2]), T.sigmoid(part[3]))
    c = T.add(T.mul(gates.forget, c), T.mul(gates.input, gates.cell))
    h = T.mul(gates.output, T.tanh(c))
    return h, c, gates


def lstm_forward(params: LstmParams, batch) -> Tensor:
    """Left-to-right stacked recurrence from zero states; logits at t come from the top hidden state at t."""
    d = params.layers[0].w.shape[0] - params.hidden
    inputs = batch_inputs(batch)
    if inputs.ndim != 3 or inputs.shape[-1] != d:
        raise ShapeMismatchError("lstm input", inputs.shape, ("batch", "n_con", d))
    sequence = time_major(inputs, inputs.shape[1], d)
    batch_size = inputs.shape[0]
    for layer in params.layers:
        h = c = T.as_tensor(np.zeros((batch_size, params.hidden)))
        outputs = []
        for t in range(sequence.shape[0]):
            h, c, _ = lstm_step(layer, T.getitem(sequence, t), h, c)
            outputs.append(h)
        sequence = T.stack(outputs, axis=0)
    return batch_major(T.matmul(sequence, params.readout))
