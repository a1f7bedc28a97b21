import math
import os
import struct
import tempfile
from unittest import TestCase

import numpy as np

from spsro.engine import DEFAULT_SOLVERS
from spsro.exceptions import CheckpointError, InvalidArgumentError
from spsro.modes import Mode
from spsro.tokenizer import QuantizationSpec
from spsro.transformer.checkpoint import (
    MAGIC,
    dumps_checkpoint,
    load,
    load_checkpoint,
    loads_checkpoint,
    save,
)
from spsro.transformer.config import ModelConfig
from spsro.transformer.model import (
    backward,
    forward,
    init_params,
    loss,
    loss_and_grads,
)
from tests.factories import random_params, tiny_config


def random_tokens(config: ModelConfig, length: int, seed: int = 1):
    generator = np.random.default_rng(seed)
    return [int(i) for i in generator.integers(0, config.q, size=length)]


class TestConfig(TestCase):
    def test_heads_must_divide(self):
        with self.assertRaises(ValueError):
            ModelConfig(embed_dim=10, heads=4)

    def test_context_tokens(self):
        self.assertEqual(ModelConfig().context_tokens, 300)
        nfg = ModelConfig(mode=Mode.nfg)
        self.assertEqual(nfg.context_tokens, 200)


class TestForward(TestCase):
    def setUp(self):
        self.config = tiny_config()
        self.params = random_params(self.config)

    def test_uniform_when_untrained(self):
        config = tiny_config(dtype="float32")
        params = init_params(config, seed=0)
        tokens = random_tokens(config, 12)
        self.assertAlmostEqual(loss(params, tokens), math.log(5), places=6)
        self.assertTrue(
            np.allclose(params.prior_log_probs(), -math.log(5))
        )

    def test_sums_to_one(self):
        log_probs = forward(self.params, random_tokens(self.config, 8))
        self.assertEqual(log_probs.shape, (8, 5))
        self.assertTrue(np.allclose(np.exp(log_probs).sum(axis=-1), 1.0))

    def test_causal(self):
        tokens = random_tokens(self.config, 10)
        full = forward(self.params, tokens)
        changed = list(tokens)
        changed[6] = (changed[6] + 1) % 5
        altered = forward(self.params, changed)
        self.assertTrue(np.allclose(full[:6], altered[:6], atol=1e-12))
        self.assertFalse(np.allclose(full[6:], altered[6:]))
        self.assertTrue(
            np.allclose(forward(self.params, tokens[:4]), full[:4])
        )

    def test_epoch_order_matters(self):
        tokens = random_tokens(self.config, 12)
        swapped = tokens[6:] + tokens[:6]
        self.assertFalse(
            np.array_equal(
                forward(self.params, tokens)[-1],
                forward(self.params, swapped)[-1],
            )
        )

    def test_batched(self):
        a = random_tokens(self.config, 8, seed=1)
        b = random_tokens(self.config, 8, seed=2)
        output = forward(self.params, np.array([a, b]))
        self.assertEqual(output.shape, (2, 8, 5))
        self.assertTrue(np.allclose(output[1], forward(self.params, b)))

    def test_deterministic(self):
        tokens = random_tokens(self.config, 8)
        self.assertTrue(
            np.array_equal(
                forward(self.params, tokens), forward(self.params, tokens)
            )
        )

    def test_too_long(self):
        with self.assertRaises(InvalidArgumentError):
            forward(self.params, random_tokens(self.config, 13))

    def test_bad_token(self):
        with self.assertRaises(InvalidArgumentError):
            forward(self.params, [0, 5])

    def test_empty(self):
        with self.assertRaises(InvalidArgumentError):
            forward(self.params, [])


class TestGradients(TestCase):
    def test_matches_finite_differences(self):
        config = tiny_config()
        params = random_params(config)
        tokens = random_tokens(config, 8)
        grads = backward(params, tokens)
        generator = np.random.default_rng(3)
        step = 1e-5

        worst = 0.0
        for name, value in params.values.items():
            flat = value.reshape(-1)
            picks = generator.choice(
                flat.size, size=min(flat.size, 6), replace=False
            )
            for index in picks:
                original = flat[index]
                flat[index] = original + step
                plus = loss(params, tokens)
                flat[index] = original - step
                minus = loss(params, tokens)
                flat[index] = original
                numeric = (plus - minus) / (2 * step)
                analytic = grads[name].reshape(-1)[index]
                error = abs(analytic - numeric) / max(
                    abs(analytic), abs(numeric), 1e-3
                )
                worst = max(worst, error)
        self.assertLess(worst, 1e-4)

    def test_unused_epoch_embeddings(self):
        config = tiny_config()
        params = random_params(config)
        grads = backward(params, random_tokens(config, 6))
        self.assertTrue(np.all(grads["embed.epoch.weight"][1] == 0.0))
        self.assertTrue(np.any(grads["embed.epoch.weight"][0] != 0.0))
        self.assertTrue(np.all(grads["prior.first_token"] == 0.0))

    def test_duplicated_batch(self):
        config = tiny_config()
        params = random_params(config)
        tokens = random_tokens(config, 8)
        single_loss, single = loss_and_grads(params, tokens)
        double_loss, double = loss_and_grads(params, np.array([tokens] * 2))
        self.assertAlmostEqual(single_loss, double_loss, places=12)
        for name in single:
            self.assertTrue(np.allclose(single[name], double[name]))

    def test_needs_two_tokens(self):
        config = tiny_config()
        with self.assertRaises(InvalidArgumentError):
            loss(random_params(config), [1])


class TestCheckpoint(TestCase):
    def setUp(self):
        self.config = tiny_config(dtype="float32")
        self.params = random_params(self.config)
        self.spec = QuantizationSpec(
            q=5,
            mode=Mode.efg,
            solvers=DEFAULT_SOLVERS,
            k_bar=100,
            y_min=0.25,
            y_max=2.0,
        )
        self.directory = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.directory.name, "model.ckpt")

    def tearDown(self):
        self.directory.cleanup()

    def test_round_trip(self):
        save(self.params, self.path, quantization=self.spec)
        checkpoint = load_checkpoint(self.path)
        self.assertEqual(checkpoint.quantization, self.spec)
        self.assertEqual(checkpoint.params.config, self.config)
        for name, value in self.params.values.items():
            self.assertTrue(
                np.array_equal(checkpoint.params[name], value), name
            )
        tokens = random_tokens(self.config, 12)
        self.assertTrue(
            np.array_equal(
                forward(load(self.path), tokens),
                forward(self.params, tokens),
            )
        )

    def test_without_quantization(self):
        data = dumps_checkpoint(self.params)
        self.assertIsNone(loads_checkpoint(data).quantization)

    def test_same_bytes(self):
        self.assertEqual(
            dumps_checkpoint(self.params, self.spec),
            dumps_checkpoint(self.params.copy(), self.spec),
        )

    def test_truncated(self):
        data = dumps_checkpoint(self.params, self.spec)
        for size in (4, len(MAGIC) + 2, len(data) // 2, len(data) - 1):
            with self.assertRaises(CheckpointError):
                loads_checkpoint(data[:size])

    def test_bad_magic(self):
        data = dumps_checkpoint(self.params)
        with self.assertRaises(CheckpointError):
            loads_checkpoint(b"NOT-A-TF" + data[len(MAGIC) :])

    def test_bad_version(self):
        data = dumps_checkpoint(self.params)
        start = len(MAGIC)
        patched = data[:start] + struct.pack("<I", 2) + data[start + 4 :]
        with self.assertRaises(CheckpointError):
            loads_checkpoint(patched)

    def test_trailing_bytes(self):
        with self.assertRaises(CheckpointError):
            loads_checkpoint(dumps_checkpoint(self.params) + b"\x00")

    def test_missing_file(self):
        with self.assertRaises(OSError):
            load(os.path.join(self.directory.name, "missing.ckpt"))
