from dataclasses import asdict, dataclass, fields

import numpy as np

from autodiff.optim import DEFAULT_LEARNING_RATE, DEFAULT_MOMENTUM
from common.exceptions import ConfigurationError
from streams.config import MAX_SEED

# seed namespaces keep training and held-out batches disjoint
TRAIN_NAMESPACE = 0
EVAL_NAMESPACE = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 8000
    batch_size: int = 200
    lr: float = DEFAULT_LEARNING_RATE
    momentum: float = DEFAULT_MOMENTUM
    n_con: int = 24
    eval_every: int = 100
    eval_batches: int = 25
    seed: int = 0

    def __post_init__(self):
        for name in ("batch_size", "n_con", "eval_every", "eval_batches"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr < 0:
            raise ConfigurationError(f"lr must be >= 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if not 0 <= self.seed < MAX_SEED:
            raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        kwargs = {}
        for f in fields(cls):
            if f.name in data:
                kwargs[f.name] = float(data[f.name]) if f.type is float else int(data[f.name])
        return cls(**kwargs)


def derive_seed(root: int, *path: int) -> int:
    """Independent 64-bit seed for the data drawn at `path` under `root`."""
    return int(np.random.SeedSequence([root, *path]).generate_state(1, dtype=np.uint64)[0])
