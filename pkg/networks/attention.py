import math
from dataclasses import dataclass, field

import numpy as np

from autodiff import tensor as T
from autodiff.tensor import Tensor
from common.exceptions import ConfigurationError, ShapeMismatchError
from networks.spec import AttentionKind

DEFAULT_HEADS = 4
EA_DEGENERATE_SUM = 1e-12


def alibi_slopes(n_heads: int) -> tuple[float, ...]:
    """
    Geometric ALiBi slopes, 2^(-8/n), 2^(-16/n), ... for n a power of two.
    Other head counts interleave slopes of the next power of two.
    """
    n = 2 ** math.floor(math.log2(n_heads))
    slopes = [2.0 ** (-8.0 * k / n) for k in range(1, n + 1)]
    if n < n_heads:
        slopes += [2.0 ** (-4.0 * k / n) for k in range(1, 2 * (n_heads - n), 2)]
    return tuple(sorted(slopes, reverse=True))


@dataclass(frozen=True)
class AttentionConfig:
    kind: AttentionKind
    d_model: int
    n_heads: int = DEFAULT_HEADS
    beta: float | None = None
    alibi: tuple[float, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "kind", AttentionKind(self.kind))
        if self.d_model % self.n_heads:
            raise ConfigurationError(f"{self.n_heads} heads do not divide d={self.d_model}")
        if self.beta is None:
            object.__setattr__(self, "beta", 1.0 / math.sqrt(self.head_dim))
        if not self.alibi:
            object.__setattr__(self, "alibi", alibi_slopes(self.n_heads))
        slopes = np.asarray(self.alibi)
        if len(slopes) != self.n_heads:
            raise ConfigurationError(f"need {self.n_heads} ALiBi slopes, got {len(slopes)}")
        if np.any(slopes <= 0) or np.any(np.diff(slopes) >= 0):
            raise ConfigurationError(f"ALiBi slopes must be positive and strictly decreasing: {self.alibi}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


def causal_mask(n_con: int) -> np.ndarray:
    """True where query i may attend to key j, i.e. j <= i."""
    return np.tril(np.ones((n_con, n_con), dtype=bool))


def alibi_bias(slopes, n_con: int) -> np.ndarray:
    """(heads, n_con, n_con) array slope_h * (j - i)."""
    distance = np.arange(n_con)[None, :] - np.arange(n_con)[:, None]
    return np.asarray(slopes)[:, None, None] * distance[None, :, :]


def scores(q: Tensor, k: Tensor, config: AttentionConfig) -> Tensor:
    """
    z_ij = beta * Q_i.K_j + slope_h * (j - i) for q, k shaped (..., heads, n_con, head_dim).
    Entries above the diagonal are meaningless; dpa/ea never read them.
    """
    q, k = T.as_tensor(q), T.as_tensor(k)
    if q.shape != k.shape or q.ndim < 3 or q.shape[-3] != config.n_heads or q.shape[-1] != config.head_dim:
        raise ShapeMismatchError("scores", q.shape, k.shape)
    n_con = q.shape[-2]
    dots = T.matmul(q, T.transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2)))
    return T.add(T.mul(dots, config.beta), alibi_bias(config.alibi, n_con))


def _mask_for(z: Tensor, mask):
    return causal_mask(z.shape[-1]) if mask is None else mask


def dpa(z: Tensor, mask=None) -> Tensor:
    """Dot-product attention map: causal row softmax of z."""
    return T.row_softmax(z, _mask_for(z, mask))


def ea(z: Tensor, mask=None) -> Tensor:
    """Expressive attention map: z^2 / (1 + z^2), normalised over each causal row."""
    z2 = T.square(z)
    weights = T.mul(z2, T.reciprocal_one_plus(z2))
    return T.row_normalize(weights, _mask_for(z, mask), eps=EA_DEGENERATE_SUM)


ATTENTION_MAPS = {
    AttentionKind.DPA: dpa,
    AttentionKind.EA: ea,
}


def split_heads(x: Tensor, n_heads: int) -> Tensor:
    """(n_con, batch, d) -> (batch, heads, n_con, head_dim)."""
    n_con, batch, d = x.shape
    return T.transpose(T.reshape(x, (n_con, batch, n_heads, d // n_heads)), (1, 2, 0, 3))


def merge_heads(x: Tensor) -> Tensor:
    """(batch, heads, n_con, head_dim) -> (n_con, batch, d); heads are concatenated."""
    batch, heads, n_con, head_dim = x.shape
    return T.reshape(T.transpose(x, (2, 0, 1, 3)), (n_con, batch, heads * head_dim))


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor, config: AttentionConfig) -> Tensor:
    """Causal multi-head attention over time-major (n_con, batch, d) projections."""
    z = scores(split_heads(q, config.n_heads), split_heads(k, config.n_heads), config)
    a = ATTENTION_MAPS[config.kind](z)
    return merge_heads(T.matmul(a, split_heads(v, config.n_heads)))
