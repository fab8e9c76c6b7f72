import logging

from django.conf import settings
from django.core.management.base import CommandError

from common.commands import ExperimentCommand
from streams.config import TaskConfig
from streams.dump import format_stream_dump, read_stream_dump, write_stream_dump
from streams.generator import generate_stream, stream_statistics, validate_stream

logger = logging.getLogger(__name__)


class Command(ExperimentCommand):
    help = "Generate an IARC token stream and write its text dump (index<TAB>symbol<TAB>tape)."

    def add_arguments(self, parser):
        parser.add_argument("--tasks", default="IARC", help="Active control tokens, e.g. IARC, IAR, IA, IR or I.")
        parser.add_argument("--n", type=int, default=16, help="Number of symbols N (default 16).")
        parser.add_argument("--len", dest="length", type=int, default=1000, help="Stream length (default 1000).")
        parser.add_argument("--seed", type=int, help="64-bit stream seed (default IARC_DEFAULT_SEED).")
        parser.add_argument("--spacing-min", type=int, default=3, help="Smallest gap between control tokens.")
        parser.add_argument("--spacing-max", type=int, default=9, help="Largest gap between control tokens.")
        parser.add_argument("--out", help="Dump file; the dump goes to stdout when omitted.")
        parser.add_argument("--validate", action="store_true", help="Replay the oracle over the written dump.")
        parser.add_argument("--stats", action="store_true", help="Print control-token frequencies and gap histogram.")

    def run(self, *args, **options):
        seed = settings.IARC_DEFAULT_SEED if options["seed"] is None else options["seed"]
        config = TaskConfig(
            tasks=options["tasks"],
            n_symbols=options["n"],
            spacing_min=options["spacing_min"],
            spacing_max=options["spacing_max"],
            seed=seed,
        )
        stream = generate_stream(config, options["length"])
        out = options["out"]
        # keep stdout clean for the dump itself
        report = self.stdout if out else self.stderr

        if out:
            path = write_stream_dump(stream, out)
            logger.info(f"Wrote {stream.length} tokens ({config.describe()}) to {path}")
        else:
            self.stdout.write(format_stream_dump(stream), ending="")

        if options["validate"]:
            checked = read_stream_dump(out, config) if out else stream
            if not validate_stream(checked, config):
                raise CommandError(f"validation failed for {config.describe()}")
            report.write(f"validate: ok ({checked.length} tokens)")

        if options["stats"]:
            stats = stream_statistics(stream)
            frequencies = " ".join(f"{token}={value:.4f}" for token, value in stats.control_frequencies.items())
            gaps = " ".join(f"{gap}:{count}" for gap, count in stats.gap_histogram.items())
            report.write(f"control frequencies: {frequencies}")
            report.write(f"gap histogram: {gaps}")
            report.write(f"chi-square: controls {stats.control_chi_square:.3f} gaps {stats.gap_chi_square:.3f}")
