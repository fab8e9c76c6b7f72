import logging
from dataclasses import replace
from pathlib import Path

from django.conf import settings

from common.commands import ExperimentCommand
from common.files import atomic_write
from experiments.manifest import FULL, QUICK
from experiments.reproductions import run_table1

logger = logging.getLogger(__name__)


class Command(ExperimentCommand):
    help = (
        "Train the 60-layer standard transformer with DPA and EA on IARC, IAR, IA and IR "
        "and print the accuracy table next to the reference values."
    )

    def add_arguments(self, parser):
        parser.add_argument("--quick", action="store_true", help="Desk-scale preset (watermarked output).")
        parser.add_argument("--epochs", type=int, help="Override the preset's epoch count.")
        parser.add_argument("--seed", type=int, help="Seed for every run (default IARC_DEFAULT_SEED).")
        parser.add_argument("--out", help="Output directory (default IARC_OUTPUT_DIR/table1).")

    def run(self, *args, **options):
        scale = QUICK if options["quick"] else FULL
        if options["epochs"] is not None:
            scale = replace(scale, train=replace(scale.train, epochs=options["epochs"]))
        seed = settings.IARC_DEFAULT_SEED if options["seed"] is None else options["seed"]
        out = Path(options["out"] or Path(settings.IARC_OUTPUT_DIR) / "table1")

        result = run_table1(scale, seed, output_root=out)
        atomic_write(out / "table1.csv", result.to_csv())
        atomic_write(out / "table1.txt", result.render())
        self.stdout.write(result.render(), ending="")

        behind = [subset for subset, gap in result.ea_gap().items() if gap <= 0]
        if behind:
            message = f"EA does not beat DPA on {', '.join(behind)}"
            logger.warning(message)
            self.stderr.write(f"warning: {message}")
        for kind, subset, measured, reference, delta in result.out_of_band():
            message = f"{kind.upper()} {subset} measured {measured:.4f} vs reference {reference:.2f} ({delta:+.4f})"
            logger.warning(message)
            self.stderr.write(f"warning: {message}")
        self.stdout.write(f"wrote {out / 'table1.csv'}")
