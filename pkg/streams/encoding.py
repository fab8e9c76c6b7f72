from dataclasses import dataclass
from pathlib import Path

import numpy as np

from common.exceptions import CheckpointError, StreamTooShortError
from common.files import atomic_write
from streams.config import TaskConfig
from streams.generator import NO_CONTROL, TokenStream

BATCH_HEADER = np.dtype("<u4")
BATCH_PAYLOAD = np.dtype("<f4")


@dataclass(frozen=True)
class EncodedBatch:
    """
    One-hot windows ready for the models.

    inputs  (batch, n_con, d): symbol one-hot followed by the control tape.
    targets (batch, n_con):    the symbol that follows each window position.
    """

    inputs: np.ndarray
    targets: np.ndarray
    config: TaskConfig

    @property
    def batch_size(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_con(self) -> int:
        return self.inputs.shape[1]


def encode_windows(config: TaskConfig, symbols: np.ndarray, tape_codes: np.ndarray) -> np.ndarray:
    """One-hot encode (batch, n_con) symbol and tape-code arrays."""
    batch, n_con = symbols.shape
    inputs = np.zeros((batch, n_con, config.embed_dim), dtype=np.float64)
    b, t = np.indices((batch, n_con))
    inputs[b, t, symbols] = 1.0
    taped = tape_codes != NO_CONTROL
    inputs[b[taped], t[taped], config.n_symbols + tape_codes[taped]] = 1.0
    return inputs


def slice_windows(stream: TokenStream, n_con: int, count: int, rng: np.random.Generator) -> EncodedBatch:
    if stream.length < n_con + 1:
        raise StreamTooShortError(
            f"stream of length {stream.length} cannot hold a window of {n_con} plus its target"
        )
    starts = rng.integers(0, stream.length - n_con, size=count)
    index = starts[:, None] + np.arange(n_con + 1)[None, :]
    symbols = stream.symbol_array[index]
    tape = stream.tape_codes[index[:, :n_con]]
    return EncodedBatch(
        inputs=encode_windows(stream.config, symbols[:, :n_con], tape),
        targets=symbols[:, 1:].copy(),
        config=stream.config,
    )


def decode_batch(batch: EncodedBatch) -> tuple[np.ndarray, np.ndarray]:
    """Recover (symbols, tape codes) of every window position."""
    n = batch.config.n_symbols
    symbols = batch.inputs[..., :n].argmax(axis=-1)
    tape_part = batch.inputs[..., n:]
    tape = np.where(tape_part.any(axis=-1), tape_part.argmax(axis=-1), NO_CONTROL)
    return symbols, tape


def write_batch_binary(batch: EncodedBatch, path) -> Path:
    header = np.asarray(batch.inputs.shape, dtype=BATCH_HEADER)
    payload = np.ascontiguousarray(batch.inputs, dtype=BATCH_PAYLOAD)
    return atomic_write(path, header.tobytes() + payload.tobytes())


def read_batch_binary(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 3 * BATCH_HEADER.itemsize:
        raise CheckpointError(f"{path}: truncated batch header")
    shape = tuple(int(s) for s in np.frombuffer(raw[:12], dtype=BATCH_HEADER))
    payload = np.frombuffer(raw[12:], dtype=BATCH_PAYLOAD)
    if payload.size != np.prod(shape):
        raise CheckpointError(f"{path}: header {shape} does not match {payload.size} values")
    return payload.reshape(shape).astype(np.float64)
