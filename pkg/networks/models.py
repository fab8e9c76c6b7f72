import logging
from pathlib import Path

import numpy as np

from autodiff.checkpoint import read_checkpoint, write_checkpoint
from autodiff.tensor import Parameter, Tensor
from networks.attention import AttentionConfig
from networks.baselines import lstm_forward, mlp_forward
from networks.params import ParamStore, init_params
from networks.sizing import param_count
from networks.spec import Arch, ModelSpec
from networks.transformer import cisformer_forward, transformer_forward

logger = logging.getLogger(__name__)


class SequenceModel:
    """A ModelSpec bound to its parameters; forward maps (batch, n_con, d) inputs to (batch, n_con, N) logits."""

    def __init__(self, spec: ModelSpec, params: ParamStore):
        self.spec = spec
        self.params = params
        self.attention = None
        if spec.attention is not None:
            self.attention = AttentionConfig(kind=spec.attention, d_model=spec.d, n_heads=spec.heads)

    def __repr__(self):
        return f"SequenceModel({self.spec.label}, layers={self.spec.layers}, params={self.n_params})"

    def forward(self, batch) -> Tensor:
        arch = self.spec.arch
        if arch is Arch.TRANSFORMER:
            return transformer_forward(self.params, batch, self.attention)
        if arch is Arch.CISFORMER:
            return cisformer_forward(self.params, batch, self.attention)
        if arch is Arch.MLP:
            return mlp_forward(self.params, batch)
        return lstm_forward(self.params, batch)

    __call__ = forward

    def parameters(self) -> list[Parameter]:
        return list(self.params)

    @property
    def n_params(self) -> int:
        return self.params.n_free

    def save_checkpoint(self, path) -> Path:
        return write_checkpoint(self.params.arrays(), path)

    def load_checkpoint(self, path):
        self.params.load_arrays(read_checkpoint(path))
        return self

    @classmethod
    def from_files(cls, spec_path, checkpoint_path) -> "SequenceModel":
        spec = ModelSpec.load(spec_path)
        return cls(spec, init_params(spec, 0)).load_checkpoint(checkpoint_path)


def build_model(spec: ModelSpec, seed: int = 0) -> SequenceModel:
    model = SequenceModel(spec, init_params(spec, seed))
    expected = param_count(spec)
    if model.n_params != expected:
        raise AssertionError(f"{spec.label}: built {model.n_params} parameters, closed form gives {expected}")
    logger.debug(f"Built {model!r} from seed {seed}")
    return model


def tie_positions(model: SequenceModel, source: SequenceModel):
    """Copy every shared transformer matrix into each position slot of a cisformer."""
    for target, shared in zip(model.params, source.params, strict=True):
        target.data = np.ascontiguousarray(np.broadcast_to(shared.data, target.shape))
    return model
