import math
import tempfile
import threading
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from autodiff import tensor as T
from autodiff.checkpoint import read_checkpoint, write_checkpoint
from autodiff.gradcheck import grad_check
from autodiff.optim import OptimizerState, SGDMomentum, sgd_momentum_step
from autodiff.tensor import Parameter, Tensor, no_grad
from common.exceptions import CheckpointError, ShapeMismatchError

RNG = np.random.default_rng(1234)


def weighted_sum(out: Tensor, seed: int = 0) -> Tensor:
    weights = np.random.default_rng(seed).normal(size=out.shape)
    return T.tsum(T.mul(out, weights))


class ForwardTests(SimpleTestCase):
    def test_softmax_uniform(self):
        out = T.row_softmax(Tensor([[0.0, 0.0, 0.0]]))
        np.testing.assert_allclose(out.data, [[1 / 3, 1 / 3, 1 / 3]])

    def test_softmax_rows_are_distributions(self):
        out = T.row_softmax(Tensor(RNG.normal(scale=5.0, size=(50, 7))))
        self.assertTrue(np.all(out.data >= 0))
        np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-12)

    def test_cross_entropy_uniform_logits(self):
        loss = T.cross_entropy_logits(Tensor(np.zeros((3, 5, 16))), np.full((3, 5), 7))
        self.assertAlmostEqual(loss.item(), math.log(16), places=12)
        self.assertAlmostEqual(loss.item(), 2.7726, places=4)

    def test_matmul_identity(self):
        x = RNG.normal(size=(4, 6))
        np.testing.assert_array_equal(T.matmul(Tensor(np.eye(4)), Tensor(x)).data, x)

    def test_shape_mismatch_reports_both_shapes(self):
        with self.assertRaises(ShapeMismatchError) as ctx:
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))
        self.assertIn("(2, 3)", str(ctx.exception))
        self.assertIn("(4, 5)", str(ctx.exception))
        with self.assertRaises(ShapeMismatchError):
            T.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))

    def test_reciprocal_one_plus(self):
        np.testing.assert_allclose(T.reciprocal_one_plus(Tensor([0.0, 1.0, 3.0])).data, [1.0, 0.5, 0.25])

    def test_no_grad_records_nothing(self):
        p = Parameter(np.ones(3))
        with no_grad():
            out = T.mul(p, 2.0)
        self.assertFalse(out.requires_grad)

    def test_no_grad_in_one_thread_keeps_graph_in_another(self):
        inside, release = threading.Event(), threading.Event()

        def evaluate():
            with no_grad():
                inside.set()
                release.wait(timeout=10)

        evaluator = threading.Thread(target=evaluate)
        evaluator.start()
        try:
            self.assertTrue(inside.wait(timeout=10))
            p = Parameter(np.array([1.0, -2.0, 3.0]))
            loss = T.tsum(T.square(p))
            loss.backward()
        finally:
            release.set()
            evaluator.join()
        self.assertTrue(loss.requires_grad)
        np.testing.assert_allclose(p.grad, [2.0, -4.0, 6.0])

    def test_no_grad_restores_recording(self):
        p = Parameter(np.ones(2))
        with no_grad():
            pass
        self.assertTrue(T.mul(p, 2.0).requires_grad)

    def test_parameter_mask_zeroes_entries(self):
        p = Parameter(np.ones((2, 2)), mask=np.tril(np.ones((2, 2))))
        self.assertEqual(p.data[0, 1], 0.0)
        self.assertEqual(p.n_free, 3)


class BackwardTests(SimpleTestCase):
    def test_sum_gives_ones(self):
        x = Parameter(RNG.normal(size=(3, 4)))
        loss = T.tsum(x)
        loss.backward()
        np.testing.assert_array_equal(x.grad, np.ones((3, 4)))
        self.assertEqual(loss.grad, 1.0)

    def test_half_sum_of_squares_gives_x(self):
        x = Parameter(RNG.normal(size=5))
        T.mul(T.tsum(T.square(x)), 0.5).backward()
        np.testing.assert_allclose(x.grad, x.data)

    def test_shared_node_accumulates(self):
        x = Parameter(RNG.normal(size=4))
        y = T.tanh(x)
        T.tsum(T.add(T.mul(y, y), y)).backward()
        t = np.tanh(x.data)
        np.testing.assert_allclose(x.grad, (2 * t + 1) * (1 - t * t))

    def test_non_scalar_loss_is_rejected(self):
        with self.assertRaises(ShapeMismatchError):
            Parameter(np.ones(3)).backward()

    def test_every_op_matches_finite_differences(self):
        mask = np.tril(np.ones((5, 5), dtype=bool))
        away_from_zero = lambda shape, seed: np.random.default_rng(seed).choice([-1, 1], size=shape) * \
            np.random.default_rng(seed + 1).uniform(0.2, 2.0, size=shape)
        cases = {
            "add": ((3, 4), lambda x: T.add(x, np.ones(4))),
            "sub": ((3, 4), lambda x: T.sub(2.0, x)),
            "mul": ((3, 4), lambda x: T.mul(x, x)),
            "matmul": ((2, 3, 4), lambda x: T.matmul(x, np.random.default_rng(5).normal(size=(4, 2)))),
            "relu": ((4, 4), T.relu),
            "sigmoid": ((4, 4), T.sigmoid),
            "tanh": ((4, 4), T.tanh),
            "square": ((4, 4), T.square),
            "reciprocal_one_plus": ((4, 4), lambda x: T.reciprocal_one_plus(T.square(x))),
            "row_softmax": ((2, 5, 5), lambda x: T.row_softmax(x, mask)),
            "row_normalize": ((2, 5, 5), lambda x: T.row_normalize(T.square(x), mask)),
            "rms_norm": ((3, 6), T.rms_norm),
            "mean": ((3, 4), lambda x: T.mean(x, axis=1, keepdims=True)),
            "reshape": ((3, 4), lambda x: T.reshape(x, (2, 6))),
            "transpose": ((2, 3, 4), lambda x: T.transpose(x, (2, 0, 1))),
            "broadcast_to": ((1, 4), lambda x: T.broadcast_to(x, (3, 4))),
            "concat": ((3, 4), lambda x: T.concat([x, T.square(x)], axis=0)),
            "stack": ((3, 4), lambda x: T.stack([x, T.tanh(x)], axis=1)),
            "slice": ((5, 4), lambda x: x[1:4, ::2]),
            "cross_entropy": ((6, 5), lambda x: T.cross_entropy_logits(x, np.arange(6) % 5)),
        }
        for name, (shape, op) in cases.items():
            for seed in range(5):
                with self.subTest(op=name, seed=seed):
                    x = Parameter(away_from_zero(shape, 10 * seed))
                    report = grad_check(lambda: weighted_sum(op(x), seed), [x], samples_per_param=100, seed=seed)
                    self.assertTrue(report.passed, f"{name}: {report.max_relative_error:.3e}")

    def test_three_layer_network(self):
        rng = np.random.default_rng(3)
        weights = [Parameter(rng.normal(scale=0.5, size=s)) for s in [(6, 8), (8, 8), (8, 4)]]
        x = rng.normal(size=(10, 6))
        targets = rng.integers(0, 4, size=10)

        def forward():
            h = T.tanh(T.matmul(x, weights[0]))
            h = T.sigmoid(T.matmul(h, weights[1]))
            return T.cross_entropy_logits(T.matmul(h, weights[2]), targets)

        report = grad_check(forward, weights, samples_per_param=64)
        self.assertLess(report.max_relative_error, 1e-4)

    def test_linear_model_is_exact(self):
        rng = np.random.default_rng(4)
        w = Parameter(rng.normal(size=(5, 3)))
        x = rng.normal(size=(7, 5))
        report = grad_check(lambda: weighted_sum(T.matmul(x, w)), [w], samples_per_param=15)
        self.assertLess(report.max_relative_error, 1e-8)


class OptimizerTests(SimpleTestCase):
    def test_momentum_zero_unit_rate(self):
        p0 = np.array(2.5)
        state = OptimizerState(learning_rate=1.0, momentum=0.0)
        (p1,) = sgd_momentum_step([p0], [p0], state)
        self.assertEqual(p1, 0.0)

    def test_two_steps_constant_gradient(self):
        g = np.array([1.0, -2.0])
        state = OptimizerState()
        (p1,) = sgd_momentum_step([np.zeros(2)], [g], state)
        (p2,) = sgd_momentum_step([p1], [g], state)
        np.testing.assert_allclose(p1, -0.02 * g)
        np.testing.assert_allclose(p2 - p1, -0.02 * 1.8 * g)
        self.assertEqual(state.velocity[0].shape, (2,))

    def test_zero_momentum_is_plain_descent(self):
        p, g = RNG.normal(size=(3, 3)), RNG.normal(size=(3, 3))
        (updated,) = sgd_momentum_step([p], [g], OptimizerState(learning_rate=0.02, momentum=0.0))
        np.testing.assert_array_equal(updated, p - 0.02 * g)

    def test_quadratic_convergence(self):
        p = Parameter(np.array([10.0]))
        optimizer = SGDMomentum([p])
        for _ in range(500):
            optimizer.zero_grad()
            T.mul(T.tsum(T.square(T.sub(p, 3.0))), 0.5).backward()
            optimizer.step()
        self.assertAlmostEqual(p.data[0], 3.0, delta=1e-6)

    def test_masked_entries_stay_zero(self):
        p = Parameter(RNG.normal(size=(4, 4)), mask=np.tril(np.ones((4, 4))))
        optimizer = SGDMomentum([p])
        for _ in range(3):
            optimizer.zero_grad()
            T.tsum(T.square(p.effective())).backward()
            optimizer.step()
        np.testing.assert_array_equal(p.data[np.triu_indices(4, 1)], 0.0)
        np.testing.assert_array_equal(p.data * p.mask, p.data)


class CheckpointTests(SimpleTestCase):
    def test_round_trip_and_layout(self):
        arrays = [RNG.normal(size=(2, 3)), RNG.normal(size=4), np.array(1.5)]
        with tempfile.TemporaryDirectory() as tmp:
            path = write_checkpoint(arrays, Path(tmp) / "model.ckpt")
            raw = path.read_bytes()
            self.assertEqual(np.frombuffer(raw[:12], dtype="<u4").tolist(), [3, 2, 2])
            self.assertEqual(len(raw), 4 + (4 + 8 + 48) + (4 + 4 + 32) + (4 + 8))
            restored = read_checkpoint(path)
            for a, b in zip(arrays, restored):
                np.testing.assert_array_equal(a, b)
            path.write_bytes(raw[:-3])
            with self.assertRaises(CheckpointError):
                read_checkpoint(path)
