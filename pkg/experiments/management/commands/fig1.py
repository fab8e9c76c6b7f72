import logging
from dataclasses import replace
from pathlib import Path

from django.conf import settings

from common.commands import ExperimentCommand
from common.files import atomic_write
from experiments.manifest import FULL, QUICK
from experiments.plotting import plot_ablation_bars, plot_accuracy_curves
from experiments.reproductions import HEADLINE_MODEL, QUICK_WATERMARK, run_fig1

logger = logging.getLogger(__name__)


class Command(ExperimentCommand):
    help = (
        "Accuracy curves of LSTM, MLP, cisformer+DPA and cisformer+EA on IARC plus their "
        "final accuracies on IARC, IAR, IA and IR; writes CSVs and PNG plots."
    )

    def add_arguments(self, parser):
        parser.add_argument("--quick", action="store_true", help="Desk-scale preset (watermarked plots).")
        parser.add_argument("--epochs", type=int, help="Override the preset's epoch count.")
        parser.add_argument("--seed", type=int, help="Seed for every run (default IARC_DEFAULT_SEED).")
        parser.add_argument("--out", help="Output directory (default IARC_OUTPUT_DIR/fig1).")

    def run(self, *args, **options):
        scale = QUICK if options["quick"] else FULL
        if options["epochs"] is not None:
            scale = replace(scale, train=replace(scale.train, epochs=options["epochs"]))
        seed = settings.IARC_DEFAULT_SEED if options["seed"] is None else options["seed"]
        out = Path(options["out"] or Path(settings.IARC_OUTPUT_DIR) / "fig1")

        result = run_fig1(scale, seed, output_root=out)
        atomic_write(out / "fig1_left.csv", result.left_csv())
        atomic_write(out / "fig1_right.csv", result.right_csv())
        atomic_write(out / "fig1_plateaus.csv", result.plateau_csv())

        watermark = QUICK_WATERMARK if result.quick else ""
        epochs = next(iter(result.curves.values())).epochs
        plot_accuracy_curves(
            epochs,
            {name: report.accuracies for name, report in result.curves.items()},
            out / "fig1_left.png",
            title="IARC accuracy during training",
            watermark=watermark,
        )
        plot_ablation_bars(
            list(result.subsets), result.ablation, out / "fig1_right.png",
            title="Final accuracy per task subset", watermark=watermark,
        )

        for name, value in result.finals.items():
            plateau = result.plateaus[name]
            self.stdout.write(f"{name:<8} final {value:.4f} plateau {plateau.mean:.4f} +- {plateau.std:.4f}")
        violations = result.ordering_violations()
        if violations:
            message = f"{', '.join(violations)} finished above {HEADLINE_MODEL} on IARC"
            logger.warning(message)
            self.stderr.write(f"warning: {message}")
        for message in result.band_violations():
            logger.warning(message)
            self.stderr.write(f"warning: {message}")
        self.stdout.write(f"wrote {out}")
