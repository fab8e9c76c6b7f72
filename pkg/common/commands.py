import logging
import sys

from django.core.management.base import BaseCommand, CommandError, CommandParser

from common.exceptions import ConfigurationError, NumericalError

logger = logging.getLogger(__name__)

EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class UsageParser(CommandParser):
    """Argument parser that reports usage errors with exit code 1."""

    def error(self, message):
        if self.called_from_command_line:
            self.print_usage(sys.stderr)
            self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")
        raise CommandError(f"Error: {message}", returncode=EXIT_USAGE)


class ExperimentCommand(BaseCommand):
    """
    Base for the experiment commands.

    Subclasses implement `run(*args, **options)`; configuration problems
    become usage errors and non-finite losses become numerical failures.
    """

    requires_system_checks = []

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.__class__ = UsageParser
        return parser

    def handle(self, *args, **options):
        try:
            return self.run(*args, **options)
        except ConfigurationError as exc:
            raise CommandError(f"{exc}\n\n{self.usage_text()}", returncode=EXIT_USAGE) from exc
        except NumericalError as exc:
            logger.error(f"Numerical failure: {exc}")
            raise CommandError(str(exc), returncode=EXIT_NUMERICAL) from exc

    def run(self, *args, **options):
        raise NotImplementedError

    def usage_text(self):
        return self.create_parser("manage.py", self.name()).format_usage()

    @classmethod
    def name(cls):
        return cls.__module__.rsplit(".", 1)[-1]
