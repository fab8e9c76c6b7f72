from pathlib import Path
from typing import Sequence

import numpy as np

from common.exceptions import CheckpointError
from common.files import atomic_write

WORD = np.dtype("<u4")
VALUE = np.dtype("<f8")


def write_checkpoint(tensors: Sequence[np.ndarray], path) -> Path:
    """count, then per tensor: rank, dims, float64 payload (little-endian)."""
    chunks = [np.array([len(tensors)], dtype=WORD).tobytes()]
    for array in tensors:
        array = np.asarray(array, dtype=VALUE)
        chunks.append(np.array([array.ndim, *array.shape], dtype=WORD).tobytes())
        chunks.append(np.ascontiguousarray(array).tobytes())
    return atomic_write(path, b"".join(chunks))


def read_checkpoint(path) -> list[np.ndarray]:
    raw = Path(path).read_bytes()
    offset = 0

    def take(count, dtype):
        nonlocal offset
        size = count * dtype.itemsize
        if offset + size > len(raw):
            raise CheckpointError(f"{path}: truncated at byte {offset}")
        values = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
        offset += size
        return values

    tensors = []
    (count,) = take(1, WORD)
    for _ in range(int(count)):
        (rank,) = take(1, WORD)
        shape = tuple(int(s) for s in take(int(rank), WORD))
        tensors.append(take(int(np.prod(shape)), VALUE).reshape(shape).copy())
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return tensors
