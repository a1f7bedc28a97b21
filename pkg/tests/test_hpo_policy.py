import math
from unittest import TestCase

import numpy as np

from spsro.engine import DEFAULT_SOLVERS, run_spsro
from spsro.exceptions import (
    CapacityError,
    InvalidArgumentError,
    ModeMismatchError,
)
from spsro.games import generate_nfg
from spsro.hpo_policy import (
    BinDensity,
    TransformerSelector,
    next_selection,
    next_token_log_probs,
    token_density,
)
from spsro.modes import Field, Mode
from spsro.tokenizer import QuantizationSpec, encode_trace
from spsro.transformer.model import init_params
from tests.factories import (
    empty_trace,
    random_params,
    random_trace,
    tiny_config,
)


def spec_for(mode: Mode = Mode.efg, q: int = 5) -> QuantizationSpec:
    return QuantizationSpec(
        q=q,
        mode=mode,
        solvers=DEFAULT_SOLVERS,
        k_bar=100,
        y_min=0.0,
        y_max=2.0,
    )


class TestBinDensity(TestCase):
    def test_uniform(self):
        density = BinDensity(probs=np.full(5, 0.2), low=0.0, high=1.0)
        self.assertTrue(np.allclose(density.values, 1.0))
        self.assertAlmostEqual(density.integral(), 1.0)
        self.assertEqual(density(1.0), 1.0)

    def test_one_hot(self):
        density = BinDensity(
            probs=np.array([0.0, 0.0, 1.0, 0.0, 0.0]), low=1.0, high=101.0
        )
        self.assertAlmostEqual(density(51.0), 1.0 / 20.0)
        self.assertEqual(density(5.0), 0.0)
        self.assertEqual(density(200.0), 0.0)
        self.assertAlmostEqual(density.integral(), 1.0)


class TestTokenDensity(TestCase):
    def setUp(self):
        self.params = random_params(tiny_config())
        self.spec = spec_for()

    def test_integrates_to_one(self):
        density = token_density(self.params, self.spec, [1, 2, 3], Field.beta)
        self.assertAlmostEqual(density.integral(), 1.0)
        self.assertEqual((density.low, density.high), (0.0, 1.0))

    def test_wrong_field(self):
        with self.assertRaises(InvalidArgumentError):
            token_density(self.params, self.spec, [1, 2, 3], Field.y)


class TestTransformerSelector(TestCase):
    def setUp(self):
        self.params = random_params(tiny_config(context_epochs=4))
        self.spec = spec_for()

    def test_greedy_is_deterministic(self):
        trace = random_trace(Mode.efg, epochs=2)
        a = TransformerSelector(self.params, self.spec, greedy=True, seed=1)
        b = TransformerSelector(self.params, self.spec, greedy=True, seed=2)
        self.assertEqual(a.next(trace), b.next(trace))
        self.assertEqual(a.last_tokens, b.last_tokens)
        self.assertEqual(len(a.last_tokens), 5)

    def test_sampling_is_seeded(self):
        trace = random_trace(Mode.efg, epochs=1)
        a = TransformerSelector(self.params, self.spec, seed=7)
        b = TransformerSelector(self.params, self.spec, seed=7)
        for _ in range(3):
            self.assertEqual(a.next(trace), b.next(trace))

    def test_untrained_model(self):
        config = tiny_config(dtype="float32")
        selector = TransformerSelector(
            init_params(config), self.spec, greedy=True
        )
        selection = selector.next(empty_trace())
        self.assertEqual(selector.last_tokens, [0] * 5)
        for alpha in selection.weights.alpha:
            self.assertAlmostEqual(alpha, 1.0 / 3.0)
        self.assertAlmostEqual(selection.oracle.beta, 0.1)
        # Bin 0 of [1, 100] has its centre at 10.9.
        self.assertEqual(selection.oracle.k, 11)
        self.assertAlmostEqual(
            selector.last_log_prob, -5 * math.log(5), places=5
        )

    def test_empty_trace_uses_prior(self):
        params = self.params.copy()
        params.values["prior.first_token"] = np.array(
            [0.0, 0.0, 0.0, 10.0, 0.0]
        )
        selector = TransformerSelector(params, self.spec, greedy=True)
        selector.next(empty_trace())
        self.assertEqual(selector.last_tokens[0], 3)

    def test_log_prob_bookkeeping(self):
        trace = random_trace(Mode.efg, epochs=1)
        selector = TransformerSelector(self.params, self.spec, seed=3)
        selector.next(trace)
        context = list(encode_trace(trace, self.spec).tokens)
        expected = 0.0
        for token in selector.last_tokens:
            expected += next_token_log_probs(self.params, context)[token]
            context.append(token)
        self.assertAlmostEqual(selector.last_log_prob, expected, places=9)

    def test_capacity(self):
        selector = TransformerSelector(self.params, self.spec)
        with self.assertRaises(CapacityError):
            selector.next(random_trace(Mode.efg, epochs=4))

    def test_q_mismatch(self):
        with self.assertRaises(ModeMismatchError):
            TransformerSelector(self.params, spec_for(q=20))

    def test_trace_mode_mismatch(self):
        selector = TransformerSelector(self.params, self.spec)
        with self.assertRaises(ModeMismatchError):
            selector.next(random_trace(Mode.nfg, epochs=1))

    def test_temperature(self):
        with self.assertRaises(InvalidArgumentError):
            TransformerSelector(self.params, self.spec, temperature=0.0)

    def test_next_selection(self):
        trace = random_trace(Mode.efg, epochs=1)
        selector = TransformerSelector(self.params, self.spec, greedy=True)
        self.assertEqual(next_selection(selector, trace), selector.next(trace))


class TestNormalFormRuns(TestCase):
    def setUp(self):
        config = tiny_config(mode=Mode.nfg, context_epochs=3)
        self.params = random_params(config)
        self.spec = spec_for(Mode.nfg)

    def test_selection(self):
        selector = TransformerSelector(self.params, self.spec, seed=0)
        selection = selector.next(random_trace(Mode.nfg, epochs=1))
        self.assertEqual((selection.oracle.beta, selection.oracle.k), (0, 1))
        self.assertEqual(len(selector.last_tokens), 3)

    def test_drives_a_run(self):
        game = generate_nfg(6, 6, seed=0)
        trace = run_spsro(
            game,
            TransformerSelector(self.params, self.spec, seed=0),
            epochs=3,
        )
        self.assertTrue(trace.valid)
        self.assertEqual(len(trace), 3)

    def test_run_beyond_capacity(self):
        game = generate_nfg(6, 6, seed=0)
        trace = run_spsro(
            game,
            TransformerSelector(self.params, self.spec, seed=0),
            epochs=5,
        )
        self.assertFalse(trace.valid)
        self.assertEqual(len(trace), 3)
