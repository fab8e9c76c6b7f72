"""
Experiment manifests: one plain-text key=value file per training run.

    id=cisformer-ea-IARC
    model.arch=cisformer
    model.attention=ea
    ...
    task.tasks=IARC
    train.epochs=8000
    model_seed=7
    output_dir=runs/cisformer-ea-IARC
"""
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from common.exceptions import ConfigurationError
from common.files import atomic_write
from networks.spec import Arch, FULL_SCALE_LAYERS, LSTM_HIDDEN, ModelSpec, parse_key_values
from streams.config import TaskConfig
from training.config import TrainConfig
from training.runs import TrainingRun


@dataclass(frozen=True)
class Scale:
    name: str
    layers: dict
    lstm_hidden: int
    train: TrainConfig


FULL = Scale("full", FULL_SCALE_LAYERS, LSTM_HIDDEN, TrainConfig())
QUICK = Scale(
    "quick",
    {Arch.TRANSFORMER: 4, Arch.CISFORMER: 2, Arch.MLP: 2, Arch.LSTM: 1},
    64,
    TrainConfig(epochs=200, batch_size=50, eval_every=50, eval_batches=4),
)
SCALES = {scale.name: scale for scale in (FULL, QUICK)}


def _section(values: dict, prefix: str) -> dict:
    return {key[len(prefix):]: value for key, value in values.items() if key.startswith(prefix)}


@dataclass(frozen=True)
class ExperimentManifest:
    experiment_id: str
    spec: ModelSpec
    task: TaskConfig
    train: TrainConfig
    model_seed: int = 0
    output_dir: str | None = None

    def __post_init__(self):
        if not self.experiment_id or any(c.isspace() for c in self.experiment_id):
            raise ConfigurationError(f"experiment id must be a non-empty word, got {self.experiment_id!r}")
        if self.spec.d != self.task.embed_dim or self.spec.n_symbols != self.task.n_symbols:
            raise ConfigurationError(
                f"{self.experiment_id}: model (d={self.spec.d}, N={self.spec.n_symbols}) does not fit "
                f"task {self.task.tasks} (d={self.task.embed_dim}, N={self.task.n_symbols})"
            )
        if self.spec.n_con != self.train.n_con:
            raise ConfigurationError(f"{self.experiment_id}: model n_con {self.spec.n_con} != train n_con {self.train.n_con}")

    def to_text(self) -> str:
        lines = [f"id={self.experiment_id}"]
        lines += [f"model.{k}={v}" for k, v in self.spec.to_dict().items()]
        lines += [f"task.{k}={v}" for k, v in asdict(self.task).items()]
        lines += [f"train.{k}={v}" for k, v in self.train.to_dict().items()]
        lines.append(f"model_seed={self.model_seed}")
        if self.output_dir:
            lines.append(f"output_dir={self.output_dir}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentManifest":
        values = parse_key_values(text)
        if "id" not in values:
            raise ConfigurationError("manifest needs an id")
        task_values = _section(values, "task.")
        try:
            task = TaskConfig(
                tasks=task_values.get("tasks", "IARC"),
                **{k: int(v) for k, v in task_values.items() if k != "tasks"},
            )
            return cls(
                experiment_id=values["id"],
                spec=ModelSpec.from_dict(_section(values, "model.")),
                task=task,
                train=TrainConfig.from_dict(_section(values, "train.")),
                model_seed=int(values.get("model_seed", 0)),
                output_dir=values.get("output_dir") or None,
            )
        except ConfigurationError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"manifest {values['id']}: {exc}") from None

    def save(self, path) -> Path:
        return atomic_write(path, self.to_text())

    @classmethod
    def load(cls, path) -> "ExperimentManifest":
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"no manifest at {path}")
        return cls.from_text(path.read_text())

    def to_run(self, checkpoints: bool = True) -> TrainingRun:
        return TrainingRun(
            label=self.experiment_id,
            spec=self.spec,
            task=self.task,
            train=self.train,
            model_seed=self.model_seed,
            output_dir=self.output_dir,
            checkpoints=checkpoints,
        )


def experiment_id(arch, attention, tasks) -> str:
    return f"{Arch(arch).value}-{attention}-{tasks}" if attention else f"{Arch(arch).value}-{tasks}"


def preset(
    arch,
    attention=None,
    tasks: str = "IARC",
    scale: Scale = FULL,
    seed: int = 0,
    output_root=None,
    embed_dim: int | None = None,
) -> ExperimentManifest:
    """Manifest for one architecture on one task subset at the given scale."""
    arch = Arch(arch)
    task = TaskConfig.for_embedding(tasks, embed_dim) if embed_dim else TaskConfig.for_embedding(tasks)
    spec = ModelSpec(
        arch=arch,
        layers=scale.layers[arch],
        attention=attention,
        n_con=scale.train.n_con,
        hidden=scale.lstm_hidden,
    ).for_task(task)
    name = experiment_id(arch, spec.attention, task.tasks)
    return ExperimentManifest(
        experiment_id=name,
        spec=spec,
        task=task,
        train=replace(scale.train, seed=seed),
        model_seed=seed,
        output_dir=str(Path(output_root) / name) if output_root else None,
    )
