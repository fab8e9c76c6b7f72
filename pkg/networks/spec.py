from dataclasses import asdict, dataclass, replace
from enum import StrEnum
from pathlib import Path

from common.exceptions import ConfigurationError
from common.files import atomic_write
from streams.config import TaskConfig


class Arch(StrEnum):
    TRANSFORMER = "transformer"
    CISFORMER = "cisformer"
    MLP = "mlp"
    LSTM = "lstm"


class AttentionKind(StrEnum):
    DPA = "dpa"
    EA = "ea"


ATTENTION_ARCHS = (Arch.TRANSFORMER, Arch.CISFORMER)

# layer counts giving comparable model sizes at d=20, n_con=24
FULL_SCALE_LAYERS = {
    Arch.TRANSFORMER: 60,
    Arch.CISFORMER: 12,
    Arch.MLP: 16,
    Arch.LSTM: 2,
}
LSTM_HIDDEN = 550
NO_ATTENTION = "none"


@dataclass(frozen=True)
class ModelSpec:
    arch: Arch
    layers: int
    attention: AttentionKind | None = None
    d: int = 20
    n_con: int = 24
    heads: int = 4
    n_symbols: int = 16
    hidden: int = LSTM_HIDDEN

    def __post_init__(self):
        try:
            object.__setattr__(self, "arch", Arch(self.arch))
            if self.attention in (None, "", NO_ATTENTION):
                object.__setattr__(self, "attention", None)
            else:
                object.__setattr__(self, "attention", AttentionKind(self.attention))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None

        if self.arch in ATTENTION_ARCHS:
            if self.attention is None:
                raise ConfigurationError(f"{self.arch} needs an attention kind (dpa or ea)")
            if self.d % self.heads:
                raise ConfigurationError(f"{self.heads} heads do not divide d={self.d}")
        elif self.attention is not None:
            raise ConfigurationError(f"{self.arch} takes no attention kind, got {self.attention}")
        for name in ("layers", "d", "n_con", "heads", "hidden"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if not 2 <= self.n_symbols < self.d:
            raise ConfigurationError(f"n_symbols must lie in [2, d), got {self.n_symbols} for d={self.d}")

    @property
    def label(self) -> str:
        return self.arch.value if self.attention is None else f"{self.arch.value}+{self.attention.value}"

    def for_task(self, task: TaskConfig) -> "ModelSpec":
        """Same architecture, sized for the task's vocabulary and tape."""
        return replace(self, d=task.embed_dim, n_symbols=task.n_symbols)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["arch"] = self.arch.value
        data["attention"] = NO_ATTENTION if self.attention is None else self.attention.value
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        for key in ("layers", "d", "n_con", "heads", "n_symbols", "hidden"):
            if key in known:
                known[key] = int(known[key])
        if "arch" not in known or "layers" not in known:
            raise ConfigurationError("model spec needs at least arch and layers")
        return cls(**known)

    def to_text(self) -> str:
        return "".join(f"{key}={value}\n" for key, value in self.to_dict().items())

    @classmethod
    def from_text(cls, text: str) -> "ModelSpec":
        return cls.from_dict(parse_key_values(text))

    def save(self, path) -> Path:
        return atomic_write(path, self.to_text())

    @classmethod
    def load(cls, path) -> "ModelSpec":
        return cls.from_text(Path(path).read_text())


def parse_key_values(text: str) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigurationError(f"line {lineno}: expected key=value, got {raw!r}")
        values[key.strip()] = value.strip()
    return values


def full_scale_spec(arch, attention=None, task: TaskConfig | None = None, **overrides) -> ModelSpec:
    arch = Arch(arch)
    spec = ModelSpec(arch=arch, layers=FULL_SCALE_LAYERS[arch], attention=attention)
    if task is not None:
        spec = spec.for_task(task)
    return replace(spec, **overrides) if overrides else spec
