import contextlib
import io
import tempfile
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from common.exceptions import ConfigurationError
from experiments.manifest import FULL, QUICK, ExperimentManifest, preset
from experiments.reference import CISFORMER_EA_FLOOR, TABLE1
from experiments.reproductions import QUICK_WATERMARK, Fig1Result, Table1Result, table1_manifests
from networks.spec import AttentionKind
from streams.config import TaskConfig
from training.report import TrainReport
from training.runs import FINAL_CHECKPOINT, REPORT_NAME, SPEC_NAME

COMMANDS = ("gen", "train", "evaluate", "table1", "fig1")


def run_command(name, *args):
    stdout, stderr = io.StringIO(), io.StringIO()
    call_command(name, *args, stdout=stdout, stderr=stderr)
    return stdout.getvalue(), stderr.getvalue()


def curve(label, accuracies):
    report = TrainReport(label=label)
    for k, accuracy in enumerate(accuracies):
        report.record(100 * k, 2.0, accuracy)
    return report


class ManifestTests(SimpleTestCase):
    def test_presets(self):
        manifest = preset("cisformer", "ea", "IARC", seed=7)
        self.assertEqual(manifest.experiment_id, "cisformer-ea-IARC")
        self.assertEqual((manifest.spec.layers, manifest.spec.d, manifest.spec.n_symbols), (12, 20, 16))
        self.assertEqual((manifest.train.epochs, manifest.train.seed, manifest.model_seed), (8000, 7, 7))

        lstm = preset("lstm", None, "IA", scale=QUICK, output_root="/tmp/runs")
        self.assertEqual(lstm.experiment_id, "lstm-IA")
        self.assertEqual((lstm.spec.layers, lstm.spec.hidden, lstm.task.n_symbols), (1, 64, 18))
        self.assertEqual(lstm.output_dir, "/tmp/runs/lstm-IA")

    def test_text_round_trip(self):
        manifest = preset("mlp", None, "IR", scale=QUICK, seed=3, output_root="runs")
        text = manifest.to_text()
        self.assertIn("model.arch=mlp\n", text)
        self.assertIn("train.epochs=200\n", text)
        self.assertEqual(ExperimentManifest.from_text(text), manifest)

        with tempfile.TemporaryDirectory() as tmp:
            self.assertEqual(ExperimentManifest.load(manifest.save(Path(tmp) / "m.txt")), manifest)

    def test_invalid_manifests(self):
        text = preset("transformer", "dpa").to_text()
        with self.assertRaises(ConfigurationError):
            ExperimentManifest.from_text(text.replace("id=transformer-dpa-IARC\n", ""))
        with self.assertRaises(ConfigurationError):
            ExperimentManifest.from_text(text.replace("task.tasks=IARC", "task.tasks=IA"))
        with self.assertRaises(ConfigurationError):
            ExperimentManifest.from_text(text.replace("train.n_con=24", "train.n_con=12"))
        with self.assertRaises(ConfigurationError):
            ExperimentManifest.from_text(text.replace("train.lr=0.02", "train.lr=fast"))
        with self.assertRaises(ConfigurationError):
            ExperimentManifest.load("/nonexistent/manifest.txt")

    def test_to_run(self):
        run = preset("transformer", "ea", scale=QUICK, seed=2).to_run(checkpoints=False)
        self.assertEqual(run.label, "transformer-ea-IARC")
        self.assertFalse(run.checkpoints)
        self.assertEqual(run.spec.layers, 4)


class Table1Tests(SimpleTestCase):
    def test_eight_standard_transformer_runs(self):
        manifests = table1_manifests(FULL, seed=1)
        self.assertEqual(len(manifests), 8)
        self.assertTrue(all(m.spec.arch == "transformer" and m.spec.layers == 60 for m in manifests))
        self.assertEqual({m.task.embed_dim for m in manifests}, {20})

    def test_rendering(self):
        measured = {kind: dict(values) for kind, values in TABLE1.items()}
        measured[AttentionKind.EA]["IA"] = 0.95
        result = Table1Result(measured, quick=True)
        lines = result.to_csv().splitlines()
        self.assertEqual(lines[0], "attention,subset,measured,reference,delta")
        self.assertEqual(len(lines), 9)
        self.assertIn("ea,IA,0.950000,0.99,-0.040000", lines)
        text = result.render()
        self.assertEqual(text.splitlines()[0].split(), ["IARC", "IAR", "IA", "IR"])
        self.assertTrue(text.splitlines()[1].startswith("DPA"))
        self.assertTrue(text.splitlines()[2].startswith("EA"))
        self.assertIn(QUICK_WATERMARK, text)
        self.assertNotIn(QUICK_WATERMARK, Table1Result(measured).render())
        self.assertAlmostEqual(result.ea_gap()["IARC"], 0.13)

    def test_cells_within_tolerance_pass(self):
        measured = {kind: {s: v - 0.05 for s, v in values.items()} for kind, values in TABLE1.items()}
        self.assertEqual(Table1Result(measured).out_of_band(), [])

    def test_cells_outside_tolerance_are_reported(self):
        measured = {kind: dict(values) for kind, values in TABLE1.items()}
        measured[AttentionKind.DPA]["IR"] = 0.60
        measured[AttentionKind.EA]["IARC"] = 0.75
        flagged = {(kind, subset) for kind, subset, *_ in Table1Result(measured).out_of_band()}
        self.assertEqual(flagged, {("dpa", "IR"), ("ea", "IARC")})


class Fig1ResultTests(SimpleTestCase):
    def make_result(self, cis_ea_final=0.95, lstm_final=0.5, mlp_final=0.45):
        curves = {
            "lstm": curve("lstm", [0.06, 0.4, lstm_final, lstm_final]),
            "mlp": curve("mlp", [0.06, 0.3, mlp_final, mlp_final]),
            "cis_dpa": curve("cis_dpa", [0.06, 0.5, 0.6, 0.6]),
            "cis_ea": curve("cis_ea", [0.06, 0.7, 0.9, cis_ea_final]),
        }
        ablation = {name: {s: 0.5 for s in ("IARC", "IAR", "IA", "IR")} for name in curves}
        return Fig1Result(curves, ablation)

    def test_csv_layouts(self):
        result = self.make_result()
        left = result.left_csv().splitlines()
        self.assertEqual(left[0], "epoch,lstm,mlp,cis_dpa,cis_ea")
        self.assertEqual(left[-1], "300,0.500000,0.450000,0.600000,0.950000")
        right = result.right_csv().splitlines()
        self.assertEqual([row.split(",")[0] for row in right], ["subset", "IARC", "IAR", "IA", "IR"])
        self.assertEqual(result.plateau_csv().splitlines()[0], "model,mean,std,points")

    def test_ordering(self):
        self.assertEqual(self.make_result().ordering_violations(), [])
        self.assertEqual(self.make_result(cis_ea_final=0.55).ordering_violations(), ["cis_dpa"])

    def test_levels_inside_bands(self):
        self.assertEqual(self.make_result().band_violations(), [])

    def test_headline_below_floor(self):
        violations = self.make_result(cis_ea_final=CISFORMER_EA_FLOOR - 0.05).band_violations()
        self.assertEqual(len(violations), 1)
        self.assertTrue(violations[0].startswith("cis_ea final"))

    def test_baseline_plateau_outside_band(self):
        violations = self.make_result(lstm_final=0.8, mlp_final=0.25).band_violations()
        self.assertEqual([v.split()[0] for v in violations], ["lstm", "mlp"])


class HelpTests(SimpleTestCase):
    def test_every_command_documents_its_flags(self):
        expected = {
            "gen": ["--tasks", "--n", "--len", "--seed", "--out", "--validate", "--stats"],
            "train": ["--manifest", "--arch", "--attn", "--layers", "--epochs", "--batch", "--lr", "--momentum",
                      "--ncon", "--seed", "--out", "--quick"],
            "evaluate": ["--run", "--spec", "--checkpoint", "--tasks", "--seed"],
            "table1": ["--quick", "--seed", "--out"],
            "fig1": ["--quick", "--seed", "--out"],
        }
        for name in COMMANDS:
            buffer = io.StringIO()
            with self.subTest(command=name), contextlib.redirect_stdout(buffer):
                with self.assertRaises(SystemExit) as caught:
                    call_command(name, "--help")
                self.assertEqual(caught.exception.code, 0)
            for flag in expected[name]:
                self.assertIn(flag, buffer.getvalue())


class GenCommandTests(SimpleTestCase):
    def test_dump_and_validate(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "stream.tsv"
            stdout, _ = run_command("gen", "--tasks", "IARC", "--n", "16", "--len", "1000", "--seed", "7",
                                    "--out", str(path), "--validate")
            lines = path.read_text().splitlines()
        self.assertEqual(len(lines), 1000)
        self.assertEqual(lines[0].split("\t")[0], "0")
        self.assertIn("validate: ok", stdout)

    def test_increment_only_stream_to_stdout(self):
        stdout, _ = run_command("gen", "--tasks", "I", "--n", "10", "--len", "200", "--seed", "3")
        symbols = np.array([int(line.split("\t")[1]) for line in stdout.splitlines()])
        self.assertEqual(len(symbols), 200)
        self.assertTrue(np.all(np.diff(symbols) % 10 == 1))

    def test_control_frequencies(self):
        with tempfile.TemporaryDirectory() as tmp:
            stdout, _ = run_command("gen", "--len", "100000", "--seed", "5", "--out", str(Path(tmp) / "s.tsv"),
                                    "--stats")
        line = next(l for l in stdout.splitlines() if l.startswith("control frequencies:"))
        frequencies = dict(item.split("=") for item in line.split(":", 1)[1].split())
        self.assertEqual(sorted(frequencies), ["A", "C", "I", "R"])
        for value in frequencies.values():
            self.assertAlmostEqual(float(value), 0.25, delta=0.03)

    def test_same_seed_same_dump(self):
        first, _ = run_command("gen", "--len", "300", "--seed", "9")
        second, _ = run_command("gen", "--len", "300", "--seed", "9")
        self.assertEqual(first, second)

    def test_usage_errors(self):
        for args in (["--tasks", "XYZ"], ["--tasks", "C"], ["--len", "0"], ["--bogus"], ["--n", "ten"]):
            with self.subTest(args=args), self.assertRaises(CommandError) as caught:
                run_command("gen", *args)
            self.assertEqual(caught.exception.returncode, 1)


class TrainCommandTests(SimpleTestCase):
    TINY = ["--quick", "--batch", "8", "--eval-batches", "1", "--eval-every", "1"]

    def test_zero_epochs_reports_initial_evaluation(self):
        with tempfile.TemporaryDirectory() as tmp:
            run_command("train", "--arch", "transformer", "--attn", "ea", *self.TINY, "--epochs", "0", "--out", tmp)
            report = TrainReport.read_csv(Path(tmp) / REPORT_NAME)
            self.assertEqual(report.epochs.tolist(), [0])
            self.assertTrue((Path(tmp) / FINAL_CHECKPOINT).is_file())
            self.assertTrue((Path(tmp) / SPEC_NAME).is_file())

    def test_reruns_are_byte_identical(self):
        args = ["--arch", "cisformer", "--attn", "ea", "--tasks", "IA", *self.TINY, "--epochs", "3", "--seed", "4"]
        with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second, \
                tempfile.TemporaryDirectory() as third:
            stdout, _ = run_command("train", *args, "--out", first)
            run_command("train", *args, "--out", second)
            run_command("train", "--manifest", str(Path(first) / "manifest.txt"), "--out", third)
            csv = (Path(first) / REPORT_NAME).read_bytes()
            self.assertEqual(csv, (Path(second) / REPORT_NAME).read_bytes())
            self.assertEqual(csv, (Path(third) / REPORT_NAME).read_bytes())
            self.assertEqual(sorted(p.name for p in Path(first).glob("epoch*.ckpt")),
                             ["epoch00001.ckpt", "epoch00002.ckpt", "epoch00003.ckpt"])
        self.assertIn("cisformer-ea-IA: epoch 3", stdout)

    def test_usage_errors(self):
        with tempfile.TemporaryDirectory() as tmp:
            manifest = preset("mlp", scale=QUICK).save(Path(tmp) / "m.txt")
            for args in (
                [],
                ["--arch", "transformer"],
                ["--arch", "gru"],
                ["--manifest", str(manifest), "--arch", "lstm"],
                ["--arch", "lstm", "--momentum", "1.5"],
                ["--arch", "mlp", "--ncon", "0"],
            ):
                with self.subTest(args=args), self.assertRaises(CommandError) as caught:
                    run_command("train", *args, "--out", tmp)
                self.assertEqual(caught.exception.returncode, 1)


class EvaluateCommandTests(SimpleTestCase):
    def test_saved_run(self):
        with tempfile.TemporaryDirectory() as tmp:
            run_command("train", "--arch", "lstm", "--quick", "--epochs", "1", "--batch", "8",
                        "--eval-batches", "1", "--out", tmp)
            stdout, _ = run_command("evaluate", "--run", tmp, "--batches", "2", "--batch", "8", "--seed", "1")
            again, _ = run_command("evaluate", "--spec", str(Path(tmp) / SPEC_NAME),
                                   "--checkpoint", str(Path(tmp) / FINAL_CHECKPOINT),
                                   "--batches", "2", "--batch", "8", "--seed", "1")
            self.assertIn("lstm on IARC: accuracy", stdout)
            self.assertEqual(stdout, again)

            with self.assertRaises(CommandError) as caught:
                run_command("evaluate", "--run", tmp, "--tasks", "IA")
            self.assertEqual(caught.exception.returncode, 1)
        with self.assertRaises(CommandError):
            run_command("evaluate", "--run", "/nonexistent")


class ReproductionCommandTests(SimpleTestCase):
    def test_table1_quick(self):
        with tempfile.TemporaryDirectory() as tmp:
            stdout, stderr = run_command("table1", "--quick", "--epochs", "1", "--seed", "2", "--out", tmp)
            rows = (Path(tmp) / "table1.csv").read_text().splitlines()
            self.assertEqual(len(rows), 9)
            self.assertIn(QUICK_WATERMARK, (Path(tmp) / "table1.txt").read_text())
        self.assertIn("DPA", stdout)
        self.assertIn("EA", stdout)
        self.assertIn(QUICK_WATERMARK, stdout)
        # one epoch cannot reach the reference IARC accuracies
        self.assertIn("DPA IARC measured", stderr)

    def test_fig1_quick(self):
        with tempfile.TemporaryDirectory() as tmp:
            stdout, stderr = run_command("fig1", "--quick", "--epochs", "1", "--seed", "2", "--out", tmp)
            out = Path(tmp)
            left = (out / "fig1_left.csv").read_text().splitlines()
            right = (out / "fig1_right.csv").read_text().splitlines()
            self.assertEqual(left[0], "epoch,lstm,mlp,cis_dpa,cis_ea")
            self.assertEqual([row.split(",")[0] for row in left[1:]], ["0", "1"])
            self.assertEqual(right[0], "subset,lstm,mlp,cis_dpa,cis_ea")
            self.assertEqual(len(right), 5)
            for name in ("fig1_left.png", "fig1_right.png"):
                self.assertEqual((out / name).read_bytes()[:4], b"\x89PNG")
            self.assertTrue((out / "fig1_plateaus.csv").is_file())
        self.assertIn("cis_ea", stdout)
        self.assertIn(f"below {CISFORMER_EA_FLOOR:.2f}", stderr)


class TaskSizingTests(SimpleTestCase):
    def test_presets_fill_the_embedding(self):
        for subset in ("IARC", "IAR", "IA", "IR"):
            manifest = preset("cisformer", "dpa", subset)
            self.assertEqual(manifest.task, TaskConfig.for_embedding(subset))
            self.assertEqual(manifest.spec.d, 20)
