from pathlib import Path

from django.conf import settings

from common.commands import ExperimentCommand
from common.exceptions import ConfigurationError
from networks.models import SequenceModel
from streams.config import TaskConfig
from training.harness import measure
from training.runs import FINAL_CHECKPOINT, SPEC_NAME


class Command(ExperimentCommand):
    help = "Measure held-out next-symbol accuracy of a saved model."

    def add_arguments(self, parser):
        parser.add_argument("--run", help=f"Run directory holding {SPEC_NAME} and {FINAL_CHECKPOINT}.")
        parser.add_argument("--spec", help="Model spec file (key=value).")
        parser.add_argument("--checkpoint", help="Checkpoint file.")
        parser.add_argument("--tasks", default="IARC", help="Task subset to evaluate on (default IARC).")
        parser.add_argument("--batches", type=int, default=25, help="Held-out batches (default 25).")
        parser.add_argument("--batch", type=int, default=200, help="Windows per batch (default 200).")
        parser.add_argument("--seed", type=int, help="Evaluation seed (default IARC_DEFAULT_SEED).")

    def run(self, *args, **options):
        if options["run"]:
            if options["spec"] or options["checkpoint"]:
                raise ConfigurationError("--run cannot be combined with --spec/--checkpoint")
            spec_path = Path(options["run"]) / SPEC_NAME
            checkpoint_path = Path(options["run"]) / FINAL_CHECKPOINT
        elif options["spec"] and options["checkpoint"]:
            spec_path, checkpoint_path = Path(options["spec"]), Path(options["checkpoint"])
        else:
            raise ConfigurationError("give --run DIR or both --spec and --checkpoint")
        for path in (spec_path, checkpoint_path):
            if not path.is_file():
                raise ConfigurationError(f"missing file {path}")

        model = SequenceModel.from_files(spec_path, checkpoint_path)
        task = TaskConfig(options["tasks"], n_symbols=model.spec.n_symbols)
        if task.embed_dim != model.spec.d:
            raise ConfigurationError(
                f"model embeds d={model.spec.d}; tasks {task.tasks} with N={task.n_symbols} need d={task.embed_dim}"
            )
        seed = settings.IARC_DEFAULT_SEED if options["seed"] is None else options["seed"]
        result = measure(model, task, options["batches"], seed, batch_size=options["batch"], n_con=model.spec.n_con)
        self.stdout.write(
            f"{model.spec.label} on {task.tasks}: accuracy {result.accuracy:.4f} "
            f"loss {result.loss:.4f} over {result.n_predictions} predictions"
        )
