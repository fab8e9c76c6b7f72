import math
import tempfile
import unittest
from pathlib import Path

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase, tag

from autodiff.tensor import Tensor
from common.exceptions import ConfigurationError, NumericalError
from networks.models import build_model
from networks.spec import ModelSpec, full_scale_spec
from streams.config import TaskConfig
from training.config import EVAL_NAMESPACE, TRAIN_NAMESPACE, TrainConfig, derive_seed
from training.harness import ablation_suite, evaluate, held_out_batches, make_batch, measure, train
from training.report import TrainReport
from training.runs import FINAL_CHECKPOINT, REPORT_NAME, SPEC_NAME, TrainingRun, execute_run
from training.tasks import dispatch_runs

TINY_TASK = TaskConfig.for_embedding("IARC", 8)
TINY_TRAIN = TrainConfig(epochs=5, batch_size=8, n_con=4, eval_every=2, eval_batches=2, seed=3)


def tiny_model(task=TINY_TASK, seed=0, arch="transformer", attention="ea"):
    spec = ModelSpec(arch, 2, attention, d=task.embed_dim, n_con=4, n_symbols=task.n_symbols, hidden=8)
    return build_model(spec, seed=seed)


class FixedModel:
    """Stand-in whose logits come straight from a function of the batch."""

    def __init__(self, logits):
        self.logits = logits

    def forward(self, batch):
        return Tensor(self.logits(batch))


class TrainConfigTests(SimpleTestCase):
    def test_defaults(self):
        cfg = TrainConfig()
        self.assertEqual(
            (cfg.epochs, cfg.batch_size, cfg.lr, cfg.momentum, cfg.n_con, cfg.eval_batches),
            (8000, 200, 0.02, 0.8, 24, 25),
        )

    def test_invalid(self):
        for kwargs in (dict(batch_size=0), dict(epochs=-1), dict(lr=-0.1), dict(momentum=1.0), dict(eval_every=0)):
            with self.subTest(**kwargs), self.assertRaises(ConfigurationError):
                TrainConfig(**kwargs)

    def test_dict_round_trip_from_strings(self):
        cfg = TrainConfig.from_dict({k: str(v) for k, v in TINY_TRAIN.to_dict().items()})
        self.assertEqual(cfg, TINY_TRAIN)

    def test_derived_seeds(self):
        self.assertEqual(derive_seed(7, TRAIN_NAMESPACE, 1), derive_seed(7, TRAIN_NAMESPACE, 1))
        self.assertNotEqual(derive_seed(7, TRAIN_NAMESPACE, 1), derive_seed(7, EVAL_NAMESPACE, 1))
        self.assertNotEqual(derive_seed(7, TRAIN_NAMESPACE, 1), derive_seed(7, TRAIN_NAMESPACE, 2))


class BatchTests(SimpleTestCase):
    def test_make_batch_is_deterministic(self):
        first = make_batch(TINY_TASK, 11, 8, 4)
        np.testing.assert_array_equal(first.inputs, make_batch(TINY_TASK, 11, 8, 4).inputs)
        self.assertEqual(first.inputs.shape, (8, 4, 8))
        self.assertFalse(np.array_equal(first.inputs, make_batch(TINY_TASK, 12, 8, 4).inputs))


class EvaluateTests(SimpleTestCase):
    def test_oracle_fed_targets_scores_one(self):
        oracle = FixedModel(lambda batch: 10.0 * np.eye(TINY_TASK.n_symbols)[batch.targets])
        self.assertEqual(evaluate(oracle, TINY_TASK, n_batches=3, seed=1, batch_size=16, n_con=4), 1.0)

    def test_constant_output_scores_symbol_frequency(self):
        task = TaskConfig()
        constant = FixedModel(lambda batch: np.tile(np.eye(16)[5], batch.targets.shape + (1,)))
        accuracy = evaluate(constant, task, n_batches=4, seed=2)
        batches = held_out_batches(task, 4, 2, 200, 24)
        hits = sum(int((b.targets == 5).sum()) for b in batches)
        self.assertEqual(accuracy, hits / sum(b.targets.size for b in batches))
        self.assertAlmostEqual(accuracy, 1 / 16, delta=0.01)

    def test_same_seed_same_accuracy(self):
        model = tiny_model()
        self.assertEqual(evaluate(model, TINY_TASK, 2, 5, batch_size=16, n_con=4),
                         evaluate(model, TINY_TASK, 2, 5, batch_size=16, n_con=4))

    def test_window_length_follows_the_model(self):
        model = tiny_model()
        self.assertEqual(model.spec.n_con, 4)
        self.assertEqual(evaluate(model, TINY_TASK, 2, 5, batch_size=16),
                         evaluate(model, TINY_TASK, 2, 5, batch_size=16, n_con=4))
        self.assertEqual(measure(model, TINY_TASK, 1, 0, batch_size=16).n_predictions, 16 * 4)

    def test_symbol_count_mismatch(self):
        wide = FixedModel(lambda batch: np.zeros(batch.targets.shape + (7,)))
        with self.assertRaises(ConfigurationError):
            measure(wide, TINY_TASK, 1, 0, batch_size=4, n_con=4)


class UntrainedBaselineTests(SimpleTestCase):
    def test_every_architecture_starts_near_chance(self):
        task = TaskConfig()
        variants = [("transformer", "dpa"), ("transformer", "ea"), ("cisformer", "dpa"),
                    ("cisformer", "ea"), ("mlp", None), ("lstm", None)]
        for arch, attention in variants:
            with self.subTest(arch=arch, attention=attention):
                results = [
                    measure(build_model(full_scale_spec(arch, attention), seed=seed), task, n_batches=2, seed=seed)
                    for seed in range(3)
                ]
                for result in results:
                    self.assertLess(abs(result.loss - math.log(16)), 0.05 * math.log(16))
                self.assertAlmostEqual(np.mean([r.accuracy for r in results]), 0.0625, delta=0.02)


class TrainTests(SimpleTestCase):
    def test_evaluation_schedule(self):
        report = train(tiny_model(), TINY_TASK, TINY_TRAIN)
        self.assertEqual(report.epochs.tolist(), [0, 2, 4, 5])
        self.assertTrue(np.all((report.accuracies >= 0) & (report.accuracies <= 1)))
        self.assertGreater(report.wall_clock, 0.0)
        self.assertEqual(report.config["model.arch"], "transformer")
        self.assertEqual(report.config["train.epochs"], "5")

    def test_zero_epochs_only_evaluates(self):
        report = train(tiny_model(), TINY_TASK, TrainConfig(epochs=0, batch_size=8, n_con=4, eval_batches=1))
        self.assertEqual(report.epochs.tolist(), [0])

    def test_zero_learning_rate_keeps_parameters(self):
        model = tiny_model(seed=4)
        before = [p.numpy().copy() for p in model.parameters()]
        train(model, TINY_TASK, TrainConfig(epochs=3, batch_size=8, n_con=4, lr=0.0, eval_every=10, eval_batches=1))
        for initial, param in zip(before, model.parameters()):
            np.testing.assert_array_equal(param.numpy(), initial)

    def test_training_changes_parameters(self):
        model = tiny_model(seed=4)
        before = [p.numpy().copy() for p in model.parameters()]
        train(model, TINY_TASK, TINY_TRAIN)
        self.assertFalse(all(np.array_equal(a, p.numpy()) for a, p in zip(before, model.parameters())))

    def test_same_seeds_same_report(self):
        for arch, attention in (("cisformer", "dpa"), ("mlp", None), ("lstm", None)):
            with self.subTest(arch=arch):
                first = train(tiny_model(seed=6, arch=arch, attention=attention), TINY_TASK, TINY_TRAIN)
                second = train(tiny_model(seed=6, arch=arch, attention=attention), TINY_TASK, TINY_TRAIN)
                self.assertEqual(first.to_csv(), second.to_csv())

    def test_dimension_mismatch(self):
        with self.assertRaises(ConfigurationError):
            train(tiny_model(), TaskConfig(), TINY_TRAIN)
        with self.assertRaises(ConfigurationError):
            train(tiny_model(), TINY_TASK, TrainConfig(n_con=6))

    def test_non_finite_loss_aborts(self):
        model = tiny_model()
        model.params["readout"].data[0, 0] = np.nan
        with self.assertRaises(NumericalError) as caught:
            train(model, TINY_TASK, TINY_TRAIN)
        self.assertEqual(caught.exception.epoch, 1)

    def test_evaluation_hook(self):
        seen = []
        train(tiny_model(), TINY_TASK, TINY_TRAIN, on_evaluation=lambda epoch, model: seen.append(epoch))
        self.assertEqual(seen, [0, 2, 4, 5])


class AblationTests(SimpleTestCase):
    def test_one_model_per_subset(self):
        cfg = TrainConfig(epochs=2, batch_size=8, n_con=4, eval_every=1, eval_batches=1)
        built = []

        def factory(task):
            built.append(task)
            return tiny_model(task)

        table = ablation_suite(factory, cfg, subsets=("IA", "IR", "IARC"), embed_dim=8)
        self.assertEqual([t.n_symbols for t in built], [6, 6, 4])
        self.assertEqual(list(table.accuracies), ["IA", "IR", "IARC"])
        self.assertEqual(table.label, "transformer+ea")
        for accuracy in table.accuracies.values():
            self.assertTrue(0.0 <= accuracy <= 1.0)


class TrainReportTests(SimpleTestCase):
    def make_report(self):
        report = TrainReport(label="cisformer+ea", config={"model.arch": "cisformer", "train.seed": "7"})
        for epoch, accuracy in zip(range(0, 800, 100), (0.06, 0.3, 0.5, 0.7, 0.8, 0.9, 0.94, 0.96)):
            report.record(epoch, 2.0 - accuracy, accuracy)
        report.ablation = {"IARC": 0.95, "IA": 0.99}
        report.wall_clock = 12.5
        return report

    def test_csv_layout(self):
        lines = self.make_report().to_csv().splitlines()
        self.assertEqual(lines[0], "# config model.arch=cisformer train.seed=7")
        self.assertEqual(lines[1], "epoch,loss,accuracy")
        self.assertEqual(lines[2], "0,1.94000000,0.060000")
        self.assertEqual(lines[-3:], ["# ablation", "IARC=0.950000", "IA=0.990000"])
        self.assertNotIn("12.5", "\n".join(lines))

    def test_csv_and_dict_round_trips(self):
        report = self.make_report()
        parsed = TrainReport.from_csv(report.to_csv(), label=report.label)
        self.assertEqual(parsed.points, report.points)
        self.assertEqual(parsed.ablation, report.ablation)
        self.assertEqual(parsed.config, report.config)
        self.assertEqual(TrainReport.from_dict(report.to_dict()), report)

    def test_written_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = self.make_report().write_csv(Path(tmp) / "run.csv")
            self.assertEqual(TrainReport.read_csv(path).label, "run")

    def test_plateau(self):
        plateau = self.make_report().plateau()
        self.assertEqual(plateau.n_points, 2)
        self.assertAlmostEqual(plateau.mean, 0.95)
        self.assertAlmostEqual(plateau.std, 0.01)
        self.assertAlmostEqual(self.make_report().final.accuracy, 0.96)

    def test_invalid_points(self):
        report = self.make_report()
        with self.assertRaises(ConfigurationError):
            report.record(700, 1.0, 0.5)
        with self.assertRaises(ConfigurationError):
            report.record(900, 1.0, 1.5)


class RunTests(SimpleTestCase):
    def make_run(self, label, output_dir=None):
        spec = ModelSpec("cisformer", 1, "ea", d=8, n_con=4, n_symbols=4)
        return TrainingRun(label, spec, TINY_TASK, TINY_TRAIN, model_seed=2, output_dir=output_dir)

    def test_dict_round_trip(self):
        run = self.make_run("a", "/tmp/somewhere")
        self.assertEqual(TrainingRun.from_dict(run.to_dict()), run)

    def test_outputs_written(self):
        with tempfile.TemporaryDirectory() as tmp:
            report = execute_run(self.make_run("cis", tmp))
            names = sorted(p.name for p in Path(tmp).iterdir())
            self.assertEqual(
                names, sorted(["epoch00002.ckpt", "epoch00004.ckpt", "epoch00005.ckpt", FINAL_CHECKPOINT, REPORT_NAME, SPEC_NAME])
            )
            self.assertEqual((Path(tmp) / REPORT_NAME).read_text(), report.to_csv())

    def test_dispatch_matches_direct_execution(self):
        runs = [self.make_run("first"), self.make_run("second")]
        reports = dispatch_runs(runs)
        self.assertEqual([r.label for r in reports], ["first", "second"])
        self.assertEqual(reports[0].to_csv(), execute_run(runs[0]).to_csv())
        self.assertEqual(dispatch_runs([]), [])


@tag("slow")
@unittest.skipUnless(settings.IARC_RUN_SLOW_TESTS, "set IARC_RUN_SLOW_TESTS=1 to run")
class LearningSanityTests(SimpleTestCase):
    def test_cisformer_ea_learns_increment_addition(self):
        task = TaskConfig.for_embedding("IA")
        model = build_model(full_scale_spec("cisformer", "ea", task=task), seed=0)
        report = train(model, task, TrainConfig(epochs=2000, eval_every=500, eval_batches=5, seed=1))
        self.assertGreaterEqual(report.final.accuracy - report.initial.accuracy, 0.2)
