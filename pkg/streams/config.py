from dataclasses import dataclass
from enum import StrEnum
from typing import Iterable

from common.exceptions import ConfigurationError


class Control(StrEnum):
    INCREMENT = "I"
    ADDITION = "A"
    REVERSE = "R"
    CONTEXT = "C"


# Tape slots follow this order, restricted to the active subset.
CONTROL_ORDER = (Control.INCREMENT, Control.ADDITION, Control.REVERSE, Control.CONTEXT)
ABLATION_SUBSETS = ("IARC", "IAR", "IA", "IR")
DEFAULT_EMBED_DIM = 20
MAX_SEED = 2**64


def canonical_tasks(tasks: str | Iterable[str]) -> str:
    letters = [str(t).upper() for t in tasks]
    unknown = sorted(set(letters) - {c.value for c in CONTROL_ORDER})
    if unknown:
        raise ConfigurationError(f"unknown control tokens {unknown}; expected a subset of IARC")
    if len(set(letters)) != len(letters):
        raise ConfigurationError(f"duplicate control tokens in {''.join(letters)!r}")
    canonical = "".join(c.value for c in CONTROL_ORDER if c.value in letters)
    if not canonical.replace(Control.CONTEXT, ""):
        raise ConfigurationError("task subset needs at least one of I, A, R")
    return canonical


@dataclass(frozen=True)
class TaskConfig:
    """Task subset, vocabulary and control-token spacing of an IARC stream."""

    tasks: str = "IARC"
    n_symbols: int = 16
    spacing_min: int = 3
    spacing_max: int = 9
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tasks", canonical_tasks(self.tasks))
        if self.n_symbols < 2:
            raise ConfigurationError(f"n_symbols must be >= 2, got {self.n_symbols}")
        if self.spacing_min < 1:
            raise ConfigurationError(f"spacing_min must be >= 1, got {self.spacing_min}")
        if self.spacing_max < self.spacing_min:
            raise ConfigurationError(
                f"spacing_max ({self.spacing_max}) must be >= spacing_min ({self.spacing_min})"
            )
        if not 0 <= self.seed < MAX_SEED:
            raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @classmethod
    def for_embedding(cls, tasks="IARC", embed_dim=DEFAULT_EMBED_DIM, **kwargs):
        """Pick N so that N + S equals the embedding dimension."""
        tasks = canonical_tasks(tasks)
        return cls(tasks=tasks, n_symbols=embed_dim - len(tasks), **kwargs)

    @property
    def controls(self) -> tuple[Control, ...]:
        return tuple(Control(t) for t in self.tasks)

    @property
    def opening_controls(self) -> tuple[Control, ...]:
        return tuple(c for c in self.controls if c is not Control.CONTEXT)

    @property
    def n_control(self) -> int:
        return len(self.tasks)

    @property
    def embed_dim(self) -> int:
        return self.n_symbols + self.n_control

    def tape_slot(self, token: Control) -> int:
        """Index of the tape activation for token inside an input vector."""
        try:
            return self.n_symbols + self.controls.index(Control(token))
        except ValueError:
            raise ConfigurationError(f"control token {token} not in task subset {self.tasks}") from None

    def describe(self) -> str:
        return (
            f"tasks={self.tasks} n_symbols={self.n_symbols} "
            f"spacing={self.spacing_min}..{self.spacing_max} seed={self.seed}"
        )
