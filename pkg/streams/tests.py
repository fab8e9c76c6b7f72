import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from common.exceptions import ConfigurationError, OracleError, StreamTooShortError
from streams.config import Control, TaskConfig
from streams.dump import read_stream_dump, write_stream_dump
from streams.encoding import decode_batch, read_batch_binary, slice_windows, write_batch_binary
from streams.generator import NO_CONTROL, TokenStream, generate_stream, stream_statistics, validate_stream
from streams.oracle import OracleState, oracle_next

I, A, R, C = Control.INCREMENT, Control.ADDITION, Control.REVERSE, Control.CONTEXT
DECIMAL = TaskConfig("IARC", n_symbols=10)


def transcribed(symbols, taped):
    tape = [None] * len(symbols)
    for index, token in taped.items():
        tape[index] = token
    return TokenStream(config=DECIMAL, symbols=tuple(symbols), tape=tuple(tape))


# hand transcriptions of the worked examples, tapes aligned with the symbol they sit on
ADD_THEN_INCREMENT = transcribed([2, 3, 4, 7, 1, 8, 9, 7, 8, 9, 0, 1], {0: I, 2: A, 7: I})
ADD_THEN_REVERSE = transcribed([2, 3, 4, 7, 1, 8, 8, 1, 7, 4, 3, 3, 4, 7], {0: I, 2: A, 5: R, 10: R})
INCREMENT_WITH_CONTEXT = transcribed([1, 2, 3, 4, 6, 8, 0, 2, 4, 7, 0, 3], {0: I, 3: C, 8: C})


def run_oracle(state, history, taped_at, steps, n_symbols=10):
    history = list(history)
    outputs = []
    for _ in range(steps):
        t = len(history) - 1
        symbol, state = oracle_next(state, history, t, taped_at.get(t), n_symbols=n_symbols)
        history.append(symbol)
        outputs.append(symbol)
    return outputs, state


class TaskConfigTests(SimpleTestCase):
    def test_embedding_split(self):
        for tasks, n in [("IARC", 16), ("IAR", 17), ("IA", 18), ("IR", 18)]:
            config = TaskConfig.for_embedding(tasks, 20)
            self.assertEqual(config.n_symbols, n)
            self.assertEqual(config.embed_dim, 20)
            self.assertEqual(config.n_control, len(tasks))

    def test_tasks_are_canonicalised(self):
        self.assertEqual(TaskConfig("cari").tasks, "IARC")

    def test_tape_slots_follow_fixed_order(self):
        config = TaskConfig("IR", n_symbols=18)
        self.assertEqual(config.tape_slot(I), 18)
        self.assertEqual(config.tape_slot(R), 19)
        with self.assertRaises(ConfigurationError):
            config.tape_slot(A)

    def test_invalid_configs(self):
        for kwargs in [
            {"tasks": "IX"},
            {"tasks": "C"},
            {"tasks": "IIA"},
            {"spacing_min": 0},
            {"spacing_min": 5, "spacing_max": 4},
            {"seed": -1},
        ]:
            with self.subTest(**kwargs), self.assertRaises(ConfigurationError):
                TaskConfig(**kwargs)


class OracleTests(SimpleTestCase):
    def test_addition_taped(self):
        symbol, state = oracle_next(OracleState(I), [2, 3, 4], 2, A, n_symbols=10)
        self.assertEqual(symbol, 7)
        self.assertIs(state.current_task, A)

    def test_addition_wraps(self):
        symbol, _ = oracle_next(OracleState(A), [1, 8, 9], 2, n_symbols=10)
        self.assertEqual(symbol, 7)

    def test_reverse_copy_and_restart(self):
        outputs, state = run_oracle(OracleState(A), [2, 3, 4, 7, 1, 8], {5: R}, 5)
        self.assertEqual(outputs, [8, 1, 7, 4, 3])
        outputs, _ = run_oracle(state, [2, 3, 4, 7, 1, 8, 8, 1, 7, 4, 3], {10: R}, 3)
        self.assertEqual(outputs, [3, 4, 7])

    def test_context_raises_increment(self):
        outputs, state = run_oracle(OracleState(), [1], {0: I}, 3)
        self.assertEqual(outputs, [2, 3, 4])
        outputs, state = run_oracle(state, [1, 2, 3, 4], {3: C}, 5)
        self.assertEqual(outputs, [6, 8, 0, 2, 4])
        self.assertEqual(state.increment_k, 2)

    def test_fresh_increment_resets_counter(self):
        state = OracleState(I, increment_k=3)
        symbol, state = oracle_next(state, [5], 0, I, n_symbols=10)
        self.assertEqual(symbol, 6)
        self.assertEqual(state.increment_k, 1)

    def test_context_under_addition_is_noop(self):
        state = OracleState(A, increment_k=2, mirror_anchor=4)
        self.assertEqual(state.apply(C, 9), state)
        self.assertEqual(state.apply(A, 9), state)

    def test_modular_wrap(self):
        symbol, _ = oracle_next(OracleState(I), [15], 0, n_symbols=16)
        self.assertEqual(symbol, 0)

    def test_addition_at_stream_head_uses_zero(self):
        symbol, _ = oracle_next(OracleState(), [6], 0, A, n_symbols=10)
        self.assertEqual(symbol, 6)

    def test_mirror_underrun_clamps(self):
        state = OracleState(R, mirror_anchor=1)
        symbol, _ = oracle_next(state, [9, 5, 4, 3, 2], 4, n_symbols=10)
        self.assertEqual(symbol, 9)

    def test_rejects_context_first_and_negative_index(self):
        with self.assertRaises(OracleError):
            oracle_next(OracleState(), [1], 0, C, n_symbols=10)
        with self.assertRaises(OracleError):
            oracle_next(OracleState(I), [1], -1, n_symbols=10)
        with self.assertRaises(OracleError):
            oracle_next(OracleState(), [1], 0, n_symbols=10)


class ValidateStreamTests(SimpleTestCase):
    def test_transcribed_examples(self):
        for stream in (ADD_THEN_INCREMENT, ADD_THEN_REVERSE, INCREMENT_WITH_CONTEXT):
            self.assertTrue(validate_stream(stream, DECIMAL))

    def test_flipped_symbol(self):
        symbols = list(INCREMENT_WITH_CONTEXT.symbols)
        symbols[6] = (symbols[6] + 1) % 10
        broken = transcribed(symbols, {0: I, 3: C, 8: C})
        self.assertFalse(validate_stream(broken, DECIMAL))

    def test_context_first_is_invalid(self):
        self.assertFalse(validate_stream(transcribed([1, 2, 3], {0: C}), DECIMAL))


class GenerateStreamTests(SimpleTestCase):
    def test_determinism(self):
        config = TaskConfig(seed=11)
        self.assertEqual(generate_stream(config, 500), generate_stream(config, 500))
        self.assertNotEqual(
            generate_stream(config, 500).symbols, generate_stream(TaskConfig(seed=12), 500).symbols
        )

    def test_increment_only(self):
        stream = generate_stream(TaskConfig("I", n_symbols=10, seed=3), 400)
        diffs = np.diff(stream.symbol_array) % 10
        self.assertTrue(np.all(diffs == 1))

    def test_first_token_is_never_context(self):
        for seed in range(50):
            stream = generate_stream(TaskConfig("IC", n_symbols=10, seed=seed), 20)
            self.assertIs(stream.tape[0], I)

    def test_frequencies_and_spacing_are_flat(self):
        stats = stream_statistics(generate_stream(TaskConfig(seed=5), 100_000))
        for token, frequency in stats.control_frequencies.items():
            self.assertAlmostEqual(frequency, 0.25, delta=0.03, msg=token)
        self.assertEqual(sorted(stats.gap_histogram), list(range(3, 10)))
        # 6 degrees of freedom, p = 0.001
        self.assertLess(stats.gap_chi_square, 22.46)
        self.assertLess(stats.control_chi_square, 16.27)

    def test_fuzz_laws(self):
        for seed in range(100):
            config = TaskConfig(seed=seed)
            stream = generate_stream(config, 10_000)
            with self.subTest(seed=seed):
                self.assertTrue(validate_stream(stream, config))
                self.assertTrue(np.all((stream.symbol_array >= 0) & (stream.symbol_array < 16)))
                self.assert_laws(stream)
                fraction = len(stream.control_positions) / stream.length
                self.assertGreaterEqual(fraction, 1 / 9)
                self.assertLessEqual(fraction, 1 / 3)
                gaps = np.diff(stream.control_positions)
                self.assertTrue(np.all((gaps >= 3) & (gaps <= 9)))

    def assert_laws(self, stream):
        x, n = stream.symbols, stream.config.n_symbols
        state = OracleState()
        for t in range(stream.length - 1):
            if stream.tape[t] is not None:
                state = state.apply(stream.tape[t], t)
            if state.current_task is I:
                self.assertEqual((x[t + 1] - x[t]) % n, state.increment_k % n)
            elif state.current_task is A and t >= 1:
                self.assertEqual(x[t + 1], (x[t] + x[t - 1]) % n)
            elif state.current_task is R:
                j = t + 1 - state.mirror_anchor
                self.assertEqual(x[state.mirror_anchor + j], x[max(0, state.mirror_anchor + 1 - j)])


class WindowTests(SimpleTestCase):
    def test_tape_encoding_of_transcribed_window(self):
        batch = slice_windows(INCREMENT_WITH_CONTEXT, 11, 1, np.random.default_rng(0))
        first = batch.inputs[0, 0]
        self.assertEqual(np.count_nonzero(first), 2)
        self.assertEqual(first[1], 1.0)
        self.assertEqual(first[DECIMAL.tape_slot(I)], 1.0)
        self.assertEqual(np.count_nonzero(batch.inputs[0, 1]), 1)
        self.assertEqual(batch.inputs[0, 3, DECIMAL.tape_slot(C)], 1.0)
        np.testing.assert_array_equal(batch.targets[0], INCREMENT_WITH_CONTEXT.symbols[1:])

    def test_round_trip_and_targets(self):
        stream = generate_stream(TaskConfig(seed=9), 5_000)
        batch = slice_windows(stream, 24, 1000, np.random.default_rng(3))
        starts = np.random.default_rng(3).integers(0, stream.length - 24, size=1000)
        index = starts[:, None] + np.arange(24)

        symbols, tape = decode_batch(batch)
        np.testing.assert_array_equal(symbols, stream.symbol_array[index])
        np.testing.assert_array_equal(tape, stream.tape_codes[index])
        np.testing.assert_array_equal(batch.targets[:, :-1], symbols[:, 1:])
        np.testing.assert_array_equal(batch.targets, stream.symbol_array[index + 1])

        nonzero = np.count_nonzero(batch.inputs, axis=-1)
        np.testing.assert_array_equal(nonzero, np.where(tape == NO_CONTROL, 1, 2))
        self.assertTrue(np.all(batch.inputs[..., 16:][tape == NO_CONTROL] == 0))

    def test_stream_too_short(self):
        stream = generate_stream(TaskConfig(), 24)
        with self.assertRaises(StreamTooShortError):
            slice_windows(stream, 24, 1, np.random.default_rng(0))


class ExportTests(SimpleTestCase):
    def test_stream_dump(self):
        config = TaskConfig(seed=4)
        stream = generate_stream(config, 300)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_stream_dump(stream, Path(tmp) / "stream.tsv")
            lines = path.read_text().splitlines()
            self.assertEqual(len(lines), 300)
            self.assertEqual(lines[0].split("\t")[0], "0")
            self.assertIn(lines[0].split("\t")[2], {"I", "A", "R"})
            restored = read_stream_dump(path, config)
        self.assertEqual(restored, stream)
        self.assertTrue(validate_stream(restored, config))

    def test_malformed_dump_lines(self):
        cases = {
            "0\tseven\tI\n": "must be integers",
            "0\t3\tX\n": "unknown tape token",
            "0\t3\n": "expected",
            "1\t3\tI\n": "out of sequence",
        }
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "bad.tsv"
            for text, message in cases.items():
                path.write_text(text)
                with self.assertRaisesMessage(ConfigurationError, message):
                    read_stream_dump(path, TaskConfig())
                with self.assertRaisesMessage(ConfigurationError, "bad.tsv:1"):
                    read_stream_dump(path, TaskConfig())

    def test_batch_binary_layout(self):
        stream = generate_stream(TaskConfig(seed=4), 300)
        batch = slice_windows(stream, 24, 5, np.random.default_rng(1))
        with tempfile.TemporaryDirectory() as tmp:
            path = write_batch_binary(batch, Path(tmp) / "batch.bin")
            raw = path.read_bytes()
            self.assertEqual(np.frombuffer(raw[:12], dtype="<u4").tolist(), [5, 24, 20])
            self.assertEqual(len(raw), 12 + 4 * 5 * 24 * 20)
            np.testing.assert_array_equal(read_batch_binary(path), batch.inputs)
