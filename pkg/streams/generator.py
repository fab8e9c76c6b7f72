import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from common.exceptions import ConfigurationError, OracleError
from streams.config import Control, TaskConfig
from streams.oracle import OracleState, oracle_next, replay

logger = logging.getLogger(__name__)

NO_CONTROL = -1


@dataclass(frozen=True)
class TokenStream:
    """Symbols plus the aligned control tape. Immutable once built."""

    config: TaskConfig
    symbols: tuple[int, ...]
    tape: tuple[Control | None, ...]

    def __post_init__(self):
        if len(self.symbols) != len(self.tape):
            raise ConfigurationError(
                f"symbols ({len(self.symbols)}) and tape ({len(self.tape)}) differ in length"
            )

    @property
    def length(self) -> int:
        return len(self.symbols)

    @property
    def control_positions(self) -> list[int]:
        return [i for i, token in enumerate(self.tape) if token is not None]

    @cached_property
    def symbol_array(self) -> np.ndarray:
        array = np.asarray(self.symbols, dtype=np.int64)
        array.setflags(write=False)
        return array

    @cached_property
    def tape_codes(self) -> np.ndarray:
        """Tape slot offset (0..S-1) per position, NO_CONTROL where nothing is taped."""
        slots = {token: i for i, token in enumerate(self.config.controls)}
        codes = np.array(
            [NO_CONTROL if token is None else slots[token] for token in self.tape],
            dtype=np.int64,
        )
        codes.setflags(write=False)
        return codes


def generate_stream(config: TaskConfig, length: int) -> TokenStream:
    if length < 1:
        raise ConfigurationError(f"stream length must be >= 1, got {length}")
    rng = np.random.default_rng(config.seed)
    controls = config.controls
    opening = config.opening_controls

    tape: list[Control | None] = [None] * length
    tape[0] = opening[rng.integers(len(opening))]
    position = int(rng.integers(config.spacing_min, config.spacing_max + 1))
    while position < length:
        tape[position] = controls[rng.integers(len(controls))]
        position += int(rng.integers(config.spacing_min, config.spacing_max + 1))

    symbols = [int(rng.integers(config.n_symbols))]
    state = OracleState()
    for t in range(length - 1):
        symbol, state = oracle_next(state, symbols, t, tape[t], n_symbols=config.n_symbols)
        symbols.append(symbol)
    return TokenStream(config=config, symbols=tuple(symbols), tape=tuple(tape))


def validate_stream(stream: TokenStream, config: TaskConfig) -> bool:
    """True iff replaying the oracle over the tape reproduces every symbol."""
    if stream.length == 0:
        return False
    if any(not 0 <= s < config.n_symbols for s in stream.symbols):
        return False
    if any(token is not None and token.value not in config.tasks for token in stream.tape):
        return False
    try:
        expected = replay(stream.symbols[0], stream.tape, config.n_symbols)
    except OracleError as exc:
        logger.debug(f"Stream rejected by oracle: {exc}")
        return False
    return tuple(expected) == stream.symbols


@dataclass(frozen=True)
class StreamStatistics:
    control_frequencies: dict[str, float]
    gap_histogram: dict[int, int]
    control_fraction: float
    gap_chi_square: float
    control_chi_square: float


def _chi_square(observed: np.ndarray) -> float:
    expected = observed.sum() / len(observed)
    if expected == 0:
        return 0.0
    return float(((observed - expected) ** 2 / expected).sum())


def stream_statistics(stream: TokenStream) -> StreamStatistics:
    """Control-token frequencies and spacing histogram against the flat law."""
    config = stream.config
    positions = stream.control_positions
    # position 0 is drawn without (C), so it is left out of the frequencies
    drawn = [stream.tape[p] for p in positions if p > 0]
    counts = np.array([sum(1 for token in drawn if token is c) for c in config.controls], dtype=float)
    total = max(len(drawn), 1)
    frequencies = {c.value: float(n / total) for c, n in zip(config.controls, counts)}

    gaps = np.diff(positions)
    spacings = range(config.spacing_min, config.spacing_max + 1)
    histogram = {g: int((gaps == g).sum()) for g in spacings}
    return StreamStatistics(
        control_frequencies=frequencies,
        gap_histogram=histogram,
        control_fraction=len(positions) / stream.length,
        gap_chi_square=_chi_square(np.array(list(histogram.values()), dtype=float)),
        control_chi_square=_chi_square(counts),
    )
