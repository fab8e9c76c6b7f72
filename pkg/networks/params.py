"""
Parameter stores for the four architectures.

Weights are drawn uniform in +-1/sqrt(fan_in), except the relu MLP which uses
the He bound sqrt(6/fan_in). Readout matrices use the narrower +-1/fan_in so
that an untrained model predicts close to uniformly.
Biases start at zero.
"""
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from autodiff.tensor import Parameter
from common.exceptions import CheckpointError
from networks.sizing import FFN_EXPANSION
from networks.spec import Arch, ModelSpec


def uniform(rng: np.random.Generator, shape, bound) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=shape) * bound


class ParamStore:
    """Ordered, named collection of the Parameters of one model."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def add(self, name: str, data: np.ndarray, mask=None) -> Parameter:
        param = Parameter(data, name=name, mask=mask)
        self._params[name] = param
        return param

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    @property
    def n_free(self) -> int:
        return sum(p.n_free for p in self)

    def arrays(self) -> list[np.ndarray]:
        """Checkpoint payload: masked parameters contribute only their free entries, flattened."""
        return [p.numpy() if p.mask is None else p.numpy()[p.mask != 0] for p in self]

    def load_arrays(self, arrays: Sequence[np.ndarray]):
        if len(arrays) != len(self):
            raise CheckpointError(f"checkpoint holds {len(arrays)} tensors, model has {len(self)}")
        for param, array in zip(self, arrays):
            if param.mask is None:
                if array.shape != param.shape:
                    raise CheckpointError(f"{param.name}: checkpoint shape {array.shape} != {param.shape}")
                param.data = np.array(array, dtype=np.float64)
                continue
            if array.shape != (param.n_free,):
                raise CheckpointError(
                    f"{param.name}: checkpoint holds {array.shape}, expected ({param.n_free},) free entries"
                )
            data = np.zeros(param.shape)
            data[param.mask != 0] = array
            param.data = data


class AttentionLayer(NamedTuple):
    w_q: Parameter
    w_k: Parameter
    w_v: Parameter
    w_1: Parameter
    b_1: Parameter
    w_2: Parameter


class TransformerParams(ParamStore):
    """Five matrices plus the FFN bias per layer, shared by every position."""

    per_position = False

    def __init__(self, spec: ModelSpec, rng: np.random.Generator):
        super().__init__()
        self.n_layers = spec.layers
        self.n_con = spec.n_con
        d, hidden = spec.d, FFN_EXPANSION * spec.d
        lead = (spec.n_con,) if self.per_position else ()
        for layer in range(spec.layers):
            prefix = f"layer{layer:02d}"
            for name in ("w_q", "w_k", "w_v"):
                self.add(f"{prefix}.{name}", uniform(rng, lead + (d, d), d**-0.5))
            self.add(f"{prefix}.w_1", uniform(rng, lead + (d, hidden), d**-0.5))
            self.add(f"{prefix}.b_1", np.zeros(lead + (hidden,)))
            self.add(f"{prefix}.w_2", uniform(rng, lead + (hidden, d), hidden**-0.5))
        self.add("readout", uniform(rng, lead + (d, spec.n_symbols), 1.0 / d))

    def layer(self, index: int) -> AttentionLayer:
        prefix = f"layer{index:02d}"
        return AttentionLayer(*(self[f"{prefix}.{name}"] for name in AttentionLayer._fields))

    @property
    def readout(self) -> Parameter:
        return self["readout"]


class CisformerParams(TransformerParams):
    """Same layout as the transformer with an independent copy per context position."""

    per_position = True


def block_causal_mask(n_con: int, d: int) -> np.ndarray:
    """(n_con*d, n_con*d) mask in (input, output) layout: input block t' feeds output block t iff t' <= t."""
    return np.kron(np.triu(np.ones((n_con, n_con))), np.ones((d, d)))


class CausalMlpParams(ParamStore):
    def __init__(self, spec: ModelSpec, rng: np.random.Generator):
        super().__init__()
        self.n_layers = spec.layers
        self.n_con = spec.n_con
        self.d = spec.d
        width = spec.n_con * spec.d
        mask = block_causal_mask(spec.n_con, spec.d)
        # relu stack: He-uniform over the (t+1)*d inputs each output block sees
        fan_in = np.repeat(np.arange(1, spec.n_con + 1) * spec.d, spec.d)
        for layer in range(spec.layers):
            self.add(f"layer{layer:02d}.w", uniform(rng, (width, width), np.sqrt(6.0 / fan_in)[None, :]), mask=mask)
        self.add("readout", uniform(rng, (spec.n_con, spec.d, spec.n_symbols), 1.0 / spec.d))

    @property
    def layers(self) -> list[Parameter]:
        return [self[f"layer{i:02d}.w"] for i in range(self.n_layers)]

    @property
    def readout(self) -> Parameter:
        return self["readout"]


@dataclass(frozen=True)
class LstmLayer:
    w: Parameter
    b: Parameter


class LstmParams(ParamStore):
    """Per layer one (input + hidden, 4 hidden) gate matrix in i, f, g, o order and its bias."""

    def __init__(self, spec: ModelSpec, rng: np.random.Generator):
        super().__init__()
        self.n_layers = spec.layers
        self.hidden = h = spec.hidden
        for layer in range(spec.layers):
            fan_in = (spec.d if layer == 0 else h) + h
            self.add(f"layer{layer:02d}.w", uniform(rng, (fan_in, 4 * h), fan_in**-0.5))
            self.add(f"layer{layer:02d}.b", np.zeros(4 * h))
        self.add("readout", uniform(rng, (h, spec.n_symbols), 1.0 / h))

    @property
    def layers(self) -> list[LstmLayer]:
        return [LstmLayer(self[f"layer{i:02d}.w"], self[f"layer{i:02d}.b"]) for i in range(self.n_layers)]

    @property
    def readout(self) -> Parameter:
        return self["readout"]


PARAM_STORES = {
    Arch.TRANSFORMER: TransformerParams,
    Arch.CISFORMER: CisformerParams,
    Arch.MLP: CausalMlpParams,
    Arch.LSTM: LstmParams,
}


def init_params(spec: ModelSpec, seed: int) -> ParamStore:
    return PARAM_STORES[spec.arch](spec, np.random.default_rng(seed))
