"""
Pre-norm transformer and cisformer forward passes.

Each layer: rms_norm -> multi-head attention (heads concatenated, no output
projection) -> residual, then rms_norm -> relu FFN -> residual. A last
rms_norm precedes the readout.
"""
from autodiff import tensor as T
from autodiff.tensor import Tensor
from common.exceptions import ConfigurationError
from networks.attention import AttentionConfig, multi_head_attention
from networks.functional import add_bias, batch_major, project, time_major
from networks.params import AttentionLayer, CisformerParams, TransformerParams


def attention_block(x: Tensor, layer: AttentionLayer, attn: AttentionConfig) -> Tensor:
    h = T.rms_norm(x)
    mixed = multi_head_attention(project(h, layer.w_q), project(h, layer.w_k), project(h, layer.w_v), attn)
    x = T.add(x, mixed)
    h = T.rms_norm(x)
    hidden = T.relu(add_bias(project(h, layer.w_1), layer.b_1))
    return T.add(x, project(hidden, layer.w_2))


def _attention_stack(params: TransformerParams, batch, attn: AttentionConfig) -> Tensor:
    d = params.readout.shape[-2]
    if attn.d_model != d:
        raise ConfigurationError(f"attention configured for d={attn.d_model}, parameters have d={d}")
    x = time_major(batch, params.n_con, d)
    for index in range(params.n_layers):
        x = attention_block(x, params.layer(index), attn)
    return batch_major(project(T.rms_norm(x), params.readout))


def transformer_forward(params: TransformerParams, batch, attn: AttentionConfig) -> Tensor:
    """Logits (batch, n_con, N) with every matrix shared across positions."""
    if params.per_position:
        raise ConfigurationError("transformer_forward expects shared parameters")
    return _attention_stack(params, batch, attn)


def cisformer_forward(params: CisformerParams, batch, attn: AttentionConfig) -> Tensor:
    """Logits (batch, n_con, N) with one weight set per absolute window position."""
    if not params.per_position:
        raise ConfigurationError("cisformer_forward expects per-position parameters")
    return _attention_stack(params, batch, attn)
