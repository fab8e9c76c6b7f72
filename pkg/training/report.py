"""
TrainReport and its CSV form.

    # config model.arch=cisformer model.attention=ea ... train.seed=7
    epoch,loss,accuracy
    0,2.77258872,0.062500
    ...
    # ablation
    IARC=0.950000

Wall-clock time lives in the dict form only, so reruns give byte-identical CSVs.
"""
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from common.exceptions import ConfigurationError
from common.files import atomic_write

CSV_COLUMNS = "epoch,loss,accuracy"
CONFIG_PREFIX = "# config "
ABLATION_MARKER = "# ablation"


@dataclass(frozen=True)
class EvalPoint:
    epoch: int
    loss: float
    accuracy: float


@dataclass(frozen=True)
class Plateau:
    mean: float
    std: float
    n_points: int


@dataclass
class TrainReport:
    label: str
    config: dict[str, str] = field(default_factory=dict)
    points: list[EvalPoint] = field(default_factory=list)
    ablation: dict[str, float] = field(default_factory=dict)
    wall_clock: float = 0.0

    def record(self, epoch: int, loss: float, accuracy: float) -> EvalPoint:
        if self.points and epoch <= self.points[-1].epoch:
            raise ConfigurationError(f"epoch {epoch} recorded after epoch {self.points[-1].epoch}")
        if not 0.0 <= accuracy <= 1.0:
            raise ConfigurationError(f"accuracy {accuracy} outside [0, 1]")
        point = EvalPoint(int(epoch), float(loss), float(accuracy))
        self.points.append(point)
        return point

    @property
    def epochs(self) -> np.ndarray:
        return np.array([p.epoch for p in self.points], dtype=np.int64)

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([p.accuracy for p in self.points])

    @property
    def losses(self) -> np.ndarray:
        return np.array([p.loss for p in self.points])

    @property
    def initial(self) -> EvalPoint:
        return self.points[0]

    @property
    def final(self) -> EvalPoint:
        return self.points[-1]

    def plateau(self, fraction: float = 0.25) -> Plateau:
        """Mean and spread of the accuracy over the trailing `fraction` of evaluation points."""
        if not self.points:
            raise ConfigurationError(f"{self.label}: no evaluation points recorded")
        count = max(1, math.ceil(len(self.points) * fraction))
        tail = self.accuracies[-count:]
        return Plateau(float(tail.mean()), float(tail.std()), count)

    def to_csv(self) -> str:
        lines = [CONFIG_PREFIX + " ".join(f"{k}={v}" for k, v in self.config.items()), CSV_COLUMNS]
        lines += [f"{p.epoch},{p.loss:.8f},{p.accuracy:.6f}" for p in self.points]
        if self.ablation:
            lines.append(ABLATION_MARKER)
            lines += [f"{subset}={accuracy:.6f}" for subset, accuracy in self.ablation.items()]
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> Path:
        return atomic_write(path, self.to_csv())

    @classmethod
    def from_csv(cls, text: str, label: str = "") -> "TrainReport":
        report = cls(label=label)
        in_ablation = False
        for line in text.splitlines():
            if not line.strip() or line == CSV_COLUMNS:
                continue
            if line.startswith(CONFIG_PREFIX):
                report.config = dict(item.split("=", 1) for item in line[len(CONFIG_PREFIX):].split())
            elif line == ABLATION_MARKER:
                in_ablation = True
            elif in_ablation:
                subset, _, value = line.partition("=")
                report.ablation[subset] = float(value)
            else:
                epoch, loss, accuracy = line.split(",")
                report.record(int(epoch), float(loss), float(accuracy))
        return report

    @classmethod
    def read_csv(cls, path, label: str = "") -> "TrainReport":
        path = Path(path)
        return cls.from_csv(path.read_text(), label=label or path.stem)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "config": dict(self.config),
            "points": [[p.epoch, p.loss, p.accuracy] for p in self.points],
            "ablation": dict(self.ablation),
            "wall_clock": self.wall_clock,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainReport":
        report = cls(
            label=data["label"],
            config=dict(data.get("config", {})),
            ablation={k: float(v) for k, v in data.get("ablation", {}).items()},
            wall_clock=float(data.get("wall_clock", 0.0)),
        )
        for epoch, loss, accuracy in data.get("points", []):
            report.record(epoch, loss, accuracy)
        return report
