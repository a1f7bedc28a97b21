import os
import tempfile
from unittest import TestCase

from spsro.conf import SpsroConfig
from spsro.engine import ConstantSelector, SwitchSelector, preset_selection
from spsro.exceptions import (
    CheckpointError,
    InvalidArgumentError,
    ModeMismatchError,
    UnsupportedSolverError,
)
from spsro.hpo import RandomSelector, TPESelector
from spsro.hpo_policy import TransformerSelector
from spsro.modes import Mode
from spsro.selectors import behavior_selector, parse_selector
from spsro.tokenizer import QuantizationSpec
from spsro.transformer.checkpoint import save
from tests.factories import empty_trace, random_params, tiny_config


class TestSimpleSelectors(TestCase):
    def test_preset(self):
        factory = parse_selector("psro_prd", Mode.nfg)
        self.assertEqual(factory.name, "psro_prd")
        selector = factory(0)
        self.assertIsInstance(selector, ConstantSelector)
        self.assertEqual(
            selector.next(empty_trace()), preset_selection("psro_prd")
        )

    def test_preset_uses_config_budget(self):
        config = SpsroConfig()
        config.oracle.k_bar = 300
        selection = parse_selector("inrl", Mode.efg, config)(0).next(
            empty_trace()
        )
        self.assertEqual(selection.oracle.k, 300)

    def test_mixed(self):
        selection = parse_selector("mixed", Mode.nfg)(0).next(empty_trace())
        self.assertEqual(len(set(selection.weights.alpha)), 1)

    def test_switch(self):
        selector = parse_selector("switch:uniform:prd:5", Mode.nfg)(0)
        self.assertIsInstance(selector, SwitchSelector)
        self.assertEqual(selector.switch_epoch, 5)

    def test_bad_switch(self):
        for text in ("switch:uniform:prd", "switch:uniform:prd:soon"):
            with self.assertRaises(InvalidArgumentError):
                parse_selector(text, Mode.nfg)
        with self.assertRaises(UnsupportedSolverError):
            parse_selector("switch:uniform:magic:3", Mode.nfg)

    def test_fresh_selector_per_run(self):
        factory = parse_selector("tpe", Mode.efg)
        self.assertIsNot(factory(0), factory(0))

    def test_suggesters(self):
        self.assertIsInstance(
            parse_selector("random", Mode.efg)(1), RandomSelector
        )
        tpe = parse_selector("tpe", Mode.nfg)(1)
        self.assertIsInstance(tpe, TPESelector)
        self.assertIs(tpe.space.mode, Mode.nfg)

    def test_seeded(self):
        factory = parse_selector("random", Mode.efg)
        trace = empty_trace()
        self.assertEqual(factory(4).next(trace), factory(4).next(trace))
        self.assertNotEqual(factory(4).next(trace), factory(5).next(trace))

    def test_behavior(self):
        config = SpsroConfig()
        config.hpo.kind = "random"
        self.assertIsInstance(
            behavior_selector(config, Mode.efg)(0), RandomSelector
        )

    def test_unknown(self):
        with self.assertRaises(InvalidArgumentError):
            parse_selector("optuna", Mode.nfg)


class TestTransformerSelectors(TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.directory.name, "model.ckpt")
        self.params = random_params(tiny_config(dtype="float32"))
        self.spec = QuantizationSpec(
            q=5,
            mode=Mode.efg,
            solvers=("uniform", "prd", "alpharank"),
            k_bar=100,
            y_min=0.0,
            y_max=2.0,
        )

    def tearDown(self):
        self.directory.cleanup()

    def test_options(self):
        save(self.params, self.path, quantization=self.spec)
        cases = [
            (f"transformer:{self.path}", False, 1.0),
            (f"transformer:{self.path}:greedy", True, 1.0),
            (f"transformer:{self.path}:t=0.5", False, 0.5),
        ]
        for text, greedy, temperature in cases:
            selector = parse_selector(text, Mode.efg)(0)
            self.assertIsInstance(selector, TransformerSelector)
            self.assertEqual(selector.greedy, greedy)
            self.assertEqual(selector.temperature, temperature)
            self.assertEqual(selector.spec, self.spec)

    def test_bad_temperature(self):
        save(self.params, self.path, quantization=self.spec)
        for option in ("t=0", "t=hot"):
            with self.assertRaises(InvalidArgumentError):
                parse_selector(f"transformer:{self.path}:{option}", Mode.efg)

    def test_missing_checkpoint(self):
        with self.assertRaises(CheckpointError):
            parse_selector(f"transformer:{self.path}", Mode.efg)

    def test_no_quantization(self):
        save(self.params, self.path)
        with self.assertRaises(CheckpointError):
            parse_selector(f"transformer:{self.path}", Mode.efg)

    def test_mode_mismatch(self):
        save(self.params, self.path, quantization=self.spec)
        with self.assertRaises(ModeMismatchError):
            parse_selector(f"transformer:{self.path}", Mode.nfg)
