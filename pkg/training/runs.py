import logging
from dataclasses import asdict, dataclass
from pathlib import Path

from networks.models import SequenceModel, build_model
from networks.spec import ModelSpec
from streams.config import TaskConfig
from training.config import TrainConfig
from training.harness import train
from training.report import TrainReport

logger = logging.getLogger(__name__)

REPORT_NAME = "report.csv"
SPEC_NAME = "model.spec"
FINAL_CHECKPOINT = "final.ckpt"


@dataclass(frozen=True)
class TrainingRun:
    """Everything one training needs, in a JSON-friendly shape."""

    label: str
    spec: ModelSpec
    task: TaskConfig
    train: TrainConfig
    model_seed: int = 0
    output_dir: str | None = None
    checkpoints: bool = True

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "spec": self.spec.to_dict(),
            "task": asdict(self.task),
            "train": self.train.to_dict(),
            "model_seed": self.model_seed,
            "output_dir": self.output_dir,
            "checkpoints": self.checkpoints,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingRun":
        return cls(
            label=data["label"],
            spec=ModelSpec.from_dict(data["spec"]),
            task=TaskConfig(**data["task"]),
            train=TrainConfig.from_dict(data["train"]),
            model_seed=int(data.get("model_seed", 0)),
            output_dir=data.get("output_dir"),
            checkpoints=bool(data.get("checkpoints", True)),
        )


def checkpoint_writer(directory: Path):
    def write(epoch: int, model: SequenceModel):
        if epoch > 0:
            model.save_checkpoint(directory / f"epoch{epoch:05d}.ckpt")

    return write


def execute_run(run: TrainingRun) -> TrainReport:
    """Build, train and, when the run has an output directory, write report, spec and checkpoints."""
    model = build_model(run.spec, seed=run.model_seed)
    directory = Path(run.output_dir) if run.output_dir else None
    hook = checkpoint_writer(directory) if directory and run.checkpoints else None
    report = train(model, run.task, run.train, on_evaluation=hook)
    report.label = run.label
    if directory:
        run.spec.save(directory / SPEC_NAME)
        report.write_csv(directory / REPORT_NAME)
        if run.checkpoints:
            model.save_checkpoint(directory / FINAL_CHECKPOINT)
        logger.info(f"Wrote {run.label} outputs to {directory}")
    return report
