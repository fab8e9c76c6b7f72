import logging
from dataclasses import replace
from pathlib import Path

from django.conf import settings

from common.commands import ExperimentCommand
from common.exceptions import ConfigurationError
from experiments.manifest import FULL, QUICK, ExperimentManifest, preset
from networks.spec import Arch, AttentionKind
from training.runs import FINAL_CHECKPOINT, REPORT_NAME, execute_run

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.txt"
MODEL_FLAGS = ("arch", "attn", "tasks", "layers", "hidden", "ncon", "quick")
TRAIN_FLAGS = {
    "epochs": "epochs",
    "batch": "batch_size",
    "lr": "lr",
    "momentum": "momentum",
    "eval_every": "eval_every",
    "eval_batches": "eval_batches",
}


class Command(ExperimentCommand):
    help = "Train one model from a manifest or from flags; writes the report CSV, the manifest and checkpoints."

    def add_arguments(self, parser):
        parser.add_argument("--manifest", help="Manifest file (key=value). Excludes the model flags.")
        parser.add_argument("--arch", choices=[a.value for a in Arch], help="Model architecture.")
        parser.add_argument("--attn", choices=[k.value for k in AttentionKind], help="Attention map (attention archs).")
        parser.add_argument("--tasks", help="Task subset: IARC, IAR, IA or IR (default IARC).")
        parser.add_argument("--layers", type=int, help="Number of layers (default per architecture).")
        parser.add_argument("--hidden", type=int, help="LSTM hidden size.")
        parser.add_argument("--ncon", type=int, help="Context length N_con (default 24).")
        parser.add_argument("--quick", action="store_true", help="Desk-scale preset: fewer layers and epochs.")
        parser.add_argument("--epochs", type=int, help="Training epochs (default 8000).")
        parser.add_argument("--batch", type=int, help="Windows per epoch (default 200).")
        parser.add_argument("--lr", type=float, help="Learning rate (default 0.02).")
        parser.add_argument("--momentum", type=float, help="Momentum (default 0.8).")
        parser.add_argument("--eval-every", type=int, help="Epochs between evaluations and checkpoints.")
        parser.add_argument("--eval-batches", type=int, help="Held-out batches per evaluation.")
        parser.add_argument("--seed", type=int, help="Model and data seed (default IARC_DEFAULT_SEED).")
        parser.add_argument("--out", help="Output directory (default IARC_OUTPUT_DIR/<experiment id>).")

    def build_manifest(self, options) -> ExperimentManifest:
        if options["manifest"]:
            given = [flag for flag in MODEL_FLAGS if options[flag] not in (None, False)]
            if given:
                raise ConfigurationError(f"--manifest cannot be combined with --{', --'.join(given)}")
            manifest = ExperimentManifest.load(options["manifest"])
            if options["seed"] is not None:
                seed = options["seed"]
                manifest = replace(manifest, train=replace(manifest.train, seed=seed), model_seed=seed)
        else:
            if not options["arch"]:
                raise ConfigurationError("either --manifest or --arch is required")
            seed = settings.IARC_DEFAULT_SEED if options["seed"] is None else options["seed"]
            scale = QUICK if options["quick"] else FULL
            manifest = preset(options["arch"], options["attn"], options["tasks"] or "IARC", scale=scale, seed=seed)
            spec_changes = {k: options[k] for k in ("layers", "hidden") if options[k] is not None}
            context = {} if options["ncon"] is None else {"n_con": options["ncon"]}
            manifest = replace(
                manifest,
                spec=replace(manifest.spec, **spec_changes, **context),
                train=replace(manifest.train, **context),
            )

        train_changes = {field: options[flag] for flag, field in TRAIN_FLAGS.items() if options[flag] is not None}
        manifest = replace(manifest, train=replace(manifest.train, **train_changes))
        if options["out"] or not manifest.output_dir:
            out = options["out"] or Path(settings.IARC_OUTPUT_DIR) / manifest.experiment_id
            manifest = replace(manifest, output_dir=str(out))
        return manifest

    def run(self, *args, **options):
        manifest = self.build_manifest(options)
        output_dir = Path(manifest.output_dir)
        manifest.save(output_dir / MANIFEST_NAME)
        logger.info(f"Training {manifest.experiment_id} into {output_dir}")
        report = execute_run(manifest.to_run())
        final = report.final
        self.stdout.write(
            f"{manifest.experiment_id}: epoch {final.epoch} loss {final.loss:.4f} accuracy {final.accuracy:.4f}"
        )
        self.stdout.write(f"report: {output_dir / REPORT_NAME}")
        self.stdout.write(f"checkpoint: {output_dir / FINAL_CHECKPOINT}")
