import math
import tempfile
from pathlib import Path

from django.core.management.base import CommandError
from django.test import SimpleTestCase

from common.commands import EXIT_NUMERICAL, EXIT_USAGE, ExperimentCommand
from common.exceptions import ConfigurationError, NumericalError, ShapeMismatchError
from common.files import atomic_write


class RaisingCommand(ExperimentCommand):
    def __init__(self, error):
        super().__init__()
        self.error = error

    def run(self, *args, **options):
        raise self.error


class ExitCodeTests(SimpleTestCase):
    def test_configuration_errors_are_usage_errors(self):
        with self.assertRaises(CommandError) as caught:
            RaisingCommand(ConfigurationError("bad subset")).handle()
        self.assertEqual(caught.exception.returncode, EXIT_USAGE)
        self.assertIn("bad subset", str(caught.exception))
        self.assertIn("usage:", str(caught.exception))

    def test_numerical_failures_have_their_own_code(self):
        with self.assertRaises(CommandError) as caught:
            RaisingCommand(NumericalError(12, math.nan)).handle()
        self.assertEqual(caught.exception.returncode, EXIT_NUMERICAL)
        self.assertIn("epoch 12", str(caught.exception))

    def test_other_errors_pass_through(self):
        with self.assertRaises(KeyError):
            RaisingCommand(KeyError("x")).handle()


class ExceptionTests(SimpleTestCase):
    def test_shape_mismatch_names_both_shapes(self):
        error = ShapeMismatchError("matmul", (2, 3), (4, 5))
        self.assertEqual(str(error), "matmul: incompatible shapes (2, 3) vs (4, 5)")
        self.assertIsInstance(error, ValueError)


class AtomicWriteTests(SimpleTestCase):
    def test_text_and_bytes(self):
        with tempfile.TemporaryDirectory() as tmp:
            text = atomic_write(Path(tmp) / "nested" / "a.txt", "hello\n")
            raw = atomic_write(Path(tmp) / "b.bin", b"\x00\x01")
            self.assertEqual(text.read_text(), "hello\n")
            self.assertEqual(raw.read_bytes(), b"\x00\x01")
            atomic_write(text, "replaced\n")
            self.assertEqual(text.read_text(), "replaced\n")
            self.assertEqual(sorted(p.name for p in Path(tmp).rglob("*") if p.is_file()), ["a.txt", "b.bin"])
