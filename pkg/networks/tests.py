import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from autodiff import tensor as T
from autodiff.checkpoint import read_checkpoint
from autodiff.gradcheck import grad_check
from autodiff.optim import SGDMomentum
from autodiff.tensor import Tensor, no_grad
from common.exceptions import ConfigurationError, ShapeMismatchError
from networks.attention import AttentionConfig, alibi_slopes, dpa, ea, multi_head_attention, scores
from networks.baselines import lstm_step
from networks.models import build_model, tie_positions
from networks.sizing import attention_layer_count, param_count
from networks.spec import Arch, ModelSpec, full_scale_spec
from streams.config import TaskConfig
from streams.encoding import slice_windows
from streams.generator import generate_stream

TINY_TASK = TaskConfig.for_embedding("IARC", 8, seed=3)


def tiny_spec(arch, attention=None, **overrides) -> ModelSpec:
    fields = dict(arch=arch, attention=attention, layers=2, d=8, n_con=4, n_symbols=4, hidden=8)
    fields.update(overrides)
    return ModelSpec(**fields)


def tiny_batch(n_con=4, count=2, seed=0):
    stream = generate_stream(TINY_TASK, 300)
    return slice_windows(stream, n_con, count, np.random.default_rng(seed))


ALL_VARIANTS = [
    ("transformer", "dpa"),
    ("transformer", "ea"),
    ("cisformer", "dpa"),
    ("cisformer", "ea"),
    ("mlp", None),
    ("lstm", None),
]


class AttentionConfigTests(SimpleTestCase):
    def test_defaults(self):
        config = AttentionConfig("dpa", d_model=20)
        self.assertEqual(config.head_dim, 5)
        self.assertAlmostEqual(config.beta, 1 / math.sqrt(5))
        self.assertEqual(config.alibi, (2**-2, 2**-4, 2**-6, 2**-8))

    def test_slopes_for_other_head_counts_decrease(self):
        for heads in (1, 2, 3, 6, 8):
            slopes = np.array(alibi_slopes(heads))
            self.assertEqual(len(slopes), heads)
            self.assertTrue(np.all(slopes > 0))
            self.assertTrue(np.all(np.diff(slopes) < 0))

    def test_invalid(self):
        with self.assertRaises(ConfigurationError):
            AttentionConfig("ea", d_model=20, n_heads=3)
        with self.assertRaises(ConfigurationError):
            AttentionConfig("ea", d_model=20, alibi=(0.1, 0.2, 0.3, 0.4))
        with self.assertRaises(ConfigurationError):
            AttentionConfig("ea", d_model=20, alibi=(0.5, 0.25))
        with self.assertRaises(ValueError):
            AttentionConfig("cosine", d_model=20)


class ScoreTests(SimpleTestCase):
    config = AttentionConfig("dpa", d_model=20)

    def test_zero_queries_leave_alibi_bias(self):
        q = np.zeros((4, 6, 5))
        z = scores(q, q, self.config).numpy()
        distance = np.arange(6)[None, :] - np.arange(6)[:, None]
        expected = np.array(self.config.alibi)[:, None, None] * distance
        np.testing.assert_array_equal(z, expected)

    def test_aligned_unit_vectors_on_diagonal(self):
        q = np.zeros((4, 3, 5))
        q[..., 0] = 1.0
        z = scores(q, q, self.config).numpy()
        for h in range(4):
            np.testing.assert_allclose(np.diag(z[h]), self.config.beta)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            scores(np.zeros((4, 3, 5)), np.zeros((4, 3, 4)), self.config)
        with self.assertRaises(ShapeMismatchError):
            scores(np.zeros((2, 3, 5)), np.zeros((2, 3, 5)), self.config)


class AttentionMapTests(SimpleTestCase):
    def test_dpa_examples(self):
        z = np.array([[[0.0, 9.0], [0.0, math.log(3)]]])
        np.testing.assert_allclose(dpa(z).numpy()[0], [[1.0, 0.0], [0.25, 0.75]])

        flat = dpa(np.full((1, 4, 4), 2.0)).numpy()[0]
        for i in range(4):
            np.testing.assert_allclose(flat[i, : i + 1], 1 / (i + 1))

    def test_ea_examples(self):
        z = np.array([[[5.0, 0.0], [1.0, 3.0]]])
        np.testing.assert_allclose(ea(z).numpy()[0, 1], [0.5 / 1.4, 0.9 / 1.4])

        np.testing.assert_allclose(ea(np.array([[[0.0, 0.0], [1.0, -1.0]]])).numpy()[0, 1], [0.5, 0.5])

        degenerate = ea(np.zeros((1, 3, 3))).numpy()[0]
        np.testing.assert_allclose(degenerate[2], [1 / 3, 1 / 3, 1 / 3])
        np.testing.assert_allclose(degenerate[1], [0.5, 0.5, 0.0])

    def test_random_rows_are_causal_distributions(self):
        rng = np.random.default_rng(11)
        z = rng.normal(scale=3.0, size=(1000, 6, 6))
        above = ~np.tril(np.ones((6, 6), dtype=bool))
        for name, attention_map in (("dpa", dpa), ("ea", ea)):
            with self.subTest(attention=name):
                a = attention_map(z).numpy()
                self.assertTrue(np.all(a[:, above] == 0.0))
                self.assertTrue(np.all(a >= 0.0))
                np.testing.assert_allclose(a.sum(axis=-1), 1.0, atol=1e-6)

    def test_ea_is_even(self):
        z = np.random.default_rng(12).normal(scale=3.0, size=(1000, 6, 6))
        np.testing.assert_array_equal(ea(z).numpy(), ea(-z).numpy())

    def test_dpa_row_shift_invariance(self):
        rng = np.random.default_rng(13)
        z = rng.normal(scale=3.0, size=(1000, 6, 6))
        shift = rng.normal(scale=5.0, size=(1000, 6, 1))
        np.testing.assert_allclose(dpa(z + shift).numpy(), dpa(z).numpy(), atol=1e-12)

    def test_multi_head_layout(self):
        config = AttentionConfig("ea", d_model=20)
        rng = np.random.default_rng(14)
        q, k, v = (Tensor(rng.normal(size=(6, 2, 20))) for _ in range(3))
        out = multi_head_attention(q, k, v, config)
        self.assertEqual(out.shape, (6, 2, 20))
        # the first position can only attend to itself
        np.testing.assert_allclose(out.numpy()[0], v.numpy()[0])


class ParamCountTests(SimpleTestCase):
    def test_layer_counts(self):
        self.assertEqual(attention_layer_count(20), 4480)
        spec = full_scale_spec("cisformer", "ea")
        self.assertEqual(spec.n_con * attention_layer_count(spec.d), 107_520)

    def test_closed_forms_over_sweep(self):
        for d in (8, 20, 40):
            for layers in (1, 12, 60):
                for n_con in (6, 24):
                    n = d - 4
                    with self.subTest(d=d, layers=layers, n_con=n_con):
                        shared = ModelSpec("transformer", layers, "dpa", d=d, n_con=n_con, n_symbols=n)
                        self.assertEqual(param_count(shared), layers * (11 * d * d + 4 * d) + d * n)
                        per_position = ModelSpec("cisformer", layers, "ea", d=d, n_con=n_con, n_symbols=n)
                        self.assertEqual(
                            param_count(per_position), layers * n_con * (11 * d * d + 4 * d) + n_con * d * n
                        )

    def test_built_stores_match_closed_form(self):
        for arch, attention in ALL_VARIANTS:
            for d in (8, 20):
                spec = tiny_spec(arch, attention, d=d, n_symbols=d - 4, n_con=6, layers=1)
                with self.subTest(arch=arch, d=d):
                    model = build_model(spec, seed=0)
                    self.assertEqual(model.n_params, param_count(spec))
                    self.assertEqual(sum(a.size for a in model.params.arrays()), param_count(spec))

    def test_checkpoint_holds_every_parameter(self):
        spec = tiny_spec("cisformer", "ea")
        model = build_model(spec, seed=1)
        with tempfile.TemporaryDirectory() as tmp:
            arrays = read_checkpoint(model.save_checkpoint(Path(tmp) / "model.ckpt"))
        self.assertEqual(sum(a.size for a in arrays), param_count(spec))

    def test_mlp_checkpoint_stores_only_causal_blocks(self):
        spec = tiny_spec("mlp", None)
        model = build_model(spec, seed=1)
        batch = tiny_batch()
        with tempfile.TemporaryDirectory() as tmp:
            path = model.save_checkpoint(Path(tmp) / "model.ckpt")
            arrays = read_checkpoint(path)
            restored = build_model(spec, seed=2).load_checkpoint(path)
        self.assertEqual(sum(a.size for a in arrays), param_count(spec))
        self.assertEqual(arrays[0].ndim, 1)
        for original, loaded in zip(model.parameters(), restored.parameters()):
            np.testing.assert_array_equal(loaded.numpy(), original.numpy())
        with no_grad():
            np.testing.assert_array_equal(restored.forward(batch).numpy(), model.forward(batch).numpy())

    def test_full_scale_counts(self):
        self.assertEqual(60 * attention_layer_count(20), 268_800)
        self.assertEqual(param_count(full_scale_spec("transformer", "dpa")), 268_800 + 20 * 16)
        self.assertEqual(param_count(full_scale_spec("cisformer", "ea")), 1_297_920)
        self.assertEqual(param_count(full_scale_spec("mlp")), 1_927_680)
        lstm = param_count(full_scale_spec("lstm"))
        self.assertEqual(lstm, 3_687_200)
        self.assertTrue(3_600_000 <= lstm <= 3_800_000)

    def test_full_scale_builds(self):
        for arch, attention in (("cisformer", "ea"), ("mlp", None)):
            with self.subTest(arch=arch):
                spec = full_scale_spec(arch, attention)
                self.assertEqual(build_model(spec).n_params, param_count(spec))


class CausalityTests(SimpleTestCase):
    def test_future_inputs_never_reach_past_logits(self):
        rng = np.random.default_rng(21)
        for arch, attention in ALL_VARIANTS:
            spec = tiny_spec(arch, attention, n_con=6)
            model = build_model(spec, seed=2)
            inputs = rng.normal(size=(3, 6, 8))
            with no_grad():
                base = model.forward(inputs).numpy()
            for t in range(5):
                with self.subTest(arch=arch, attention=attention, t=t):
                    perturbed = inputs.copy()
                    perturbed[:, t + 1 :] += rng.normal(scale=2.0, size=perturbed[:, t + 1 :].shape)
                    with no_grad():
                        logits = model.forward(perturbed).numpy()
                    np.testing.assert_array_equal(logits[:, : t + 1], base[:, : t + 1])
                    self.assertFalse(np.array_equal(logits[:, t + 1 :], base[:, t + 1 :]))

    def test_input_shape_is_checked(self):
        for arch, attention in ALL_VARIANTS:
            with self.subTest(arch=arch):
                model = build_model(tiny_spec(arch, attention), seed=0)
                with self.assertRaises(ShapeMismatchError):
                    model.forward(np.zeros((2, 4, 9)))


class TiedCisformerTests(SimpleTestCase):
    def test_tied_positions_reproduce_transformer(self):
        batch = tiny_batch(count=5)
        for attention in ("dpa", "ea"):
            with self.subTest(attention=attention):
                shared = build_model(tiny_spec("transformer", attention), seed=4)
                tied = tie_positions(build_model(tiny_spec("cisformer", attention), seed=5), shared)
                with no_grad():
                    np.testing.assert_array_equal(tied.forward(batch).numpy(), shared.forward(batch).numpy())


class GradientTests(SimpleTestCase):
    def test_two_layer_variants(self):
        batch = tiny_batch(count=1, seed=6)
        for arch, attention in ALL_VARIANTS:
            overrides = {"n_con": 5} if arch == "lstm" else {}
            spec = tiny_spec(arch, attention, **overrides)
            model = build_model(spec, seed=7)
            data = tiny_batch(n_con=spec.n_con, count=1, seed=6) if arch == "lstm" else batch
            with self.subTest(arch=arch, attention=attention):
                report = grad_check(
                    lambda: T.cross_entropy_logits(model.forward(data), data.targets),
                    model.parameters(),
                    samples_per_param=6,
                )
                self.assertLess(report.max_relative_error, 1e-4)


class MlpTests(SimpleTestCase):
    def test_identity_blocks_with_zero_readout(self):
        model = build_model(ModelSpec("mlp", 1, d=8, n_con=3, n_symbols=4), seed=0)
        model.params["layer00.w"].data = np.eye(24)
        model.params["readout"].data = np.zeros((3, 8, 4))
        with no_grad():
            logits = model.forward(np.random.default_rng(0).normal(size=(2, 3, 8))).numpy()
        np.testing.assert_array_equal(logits, np.zeros((2, 3, 4)))

    def test_free_parameters_per_layer(self):
        model = build_model(full_scale_spec("mlp"), seed=0)
        self.assertEqual(model.params["layer00.w"].n_free, 120_000)

    def test_masked_blocks_stay_zero_after_updates(self):
        model = build_model(tiny_spec("mlp"), seed=8)
        optimizer = SGDMomentum(model.parameters(), learning_rate=0.1, momentum=0.8)
        batch = tiny_batch(count=4, seed=9)
        for _ in range(3):
            optimizer.zero_grad()
            T.cross_entropy_logits(model.forward(batch), batch.targets).backward()
            optimizer.step()
        for weight in model.params.layers:
            np.testing.assert_array_equal(weight.data, weight.data * weight.mask)
            self.assertTrue(np.all(weight.grad[weight.mask == 0] == 0.0))


class LstmTests(SimpleTestCase):
    def test_zero_parameters_give_zero_states(self):
        model = build_model(tiny_spec("lstm"), seed=0)
        for param in model.parameters():
            param.data = np.zeros_like(param.data)
        inputs = np.random.default_rng(0).normal(size=(2, 4, 8))
        with no_grad():
            np.testing.assert_array_equal(model.forward(inputs).numpy(), np.zeros((2, 4, 4)))
            zeros = Tensor(np.zeros((2, 8)))
            h, c, _ = lstm_step(model.params.layers[0], Tensor(inputs[:, 0]), zeros, zeros)
        np.testing.assert_array_equal(h.numpy(), 0.0)
        np.testing.assert_array_equal(c.numpy(), 0.0)

    def test_gate_bounds(self):
        model = build_model(tiny_spec("lstm"), seed=3)
        layer = model.params.layers[0]
        rng = np.random.default_rng(5)
        h = c = Tensor(np.zeros((16, 8)))
        with no_grad():
            for _ in range(6):
                h, c, gates = lstm_step(layer, Tensor(rng.normal(size=(16, 8))), h, c)
                for sigmoid_gate in (gates.input, gates.forget, gates.output):
                    self.assertTrue(np.all((sigmoid_gate.numpy() > 0) & (sigmoid_gate.numpy() < 1)))
                self.assertTrue(np.all(np.abs(gates.cell.numpy()) < 1))


class ModelSpecTests(SimpleTestCase):
    def test_text_round_trip(self):
        spec = full_scale_spec("cisformer", "ea")
        self.assertIn("attention=ea\n", spec.to_text())
        self.assertEqual(ModelSpec.from_text(spec.to_text()), spec)
        lstm = full_scale_spec("lstm")
        self.assertIn("attention=none\n", lstm.to_text())
        self.assertEqual(ModelSpec.from_text(lstm.to_text()), lstm)

    def test_comments_and_partial_text(self):
        spec = ModelSpec.from_text("# quick\narch = transformer\nattention=dpa\nlayers=3\n")
        self.assertEqual((spec.arch, spec.layers, spec.d), (Arch.TRANSFORMER, 3, 20))

    def test_invalid_specs(self):
        for kwargs in (
            dict(arch="transformer", layers=2),
            dict(arch="mlp", layers=2, attention="ea"),
            dict(arch="gru", layers=2),
            dict(arch="cisformer", layers=0, attention="ea"),
            dict(arch="transformer", layers=2, attention="dpa", d=22),
            dict(arch="lstm", layers=2, n_symbols=20),
        ):
            with self.subTest(**kwargs), self.assertRaises(ConfigurationError):
                ModelSpec(**kwargs)
        with self.assertRaises(ConfigurationError):
            ModelSpec.from_text("arch=mlp\nlayers\n")

    def test_full_scale_layers_and_task_sizing(self):
        self.assertEqual(full_scale_spec("transformer", "ea").layers, 60)
        self.assertEqual(full_scale_spec("cisformer", "ea").layers, 12)
        spec = full_scale_spec("mlp", task=TaskConfig.for_embedding("IA"))
        self.assertEqual((spec.layers, spec.d, spec.n_symbols), (16, 20, 18))

    def test_checkpoint_restores_outputs(self):
        spec = tiny_spec("transformer", "ea")
        trained = build_model(spec, seed=1)
        batch = tiny_batch()
        with tempfile.TemporaryDirectory() as tmp:
            spec.save(Path(tmp) / "model.spec")
            trained.save_checkpoint(Path(tmp) / "model.ckpt")
            restored = type(trained).from_files(Path(tmp) / "model.spec", Path(tmp) / "model.ckpt")
        with no_grad():
            np.testing.assert_array_equal(restored.forward(batch).numpy(), trained.forward(batch).numpy())
