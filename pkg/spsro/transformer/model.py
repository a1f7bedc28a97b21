"""
A small decoder-only transformer written against NumPy, with a hand-written
backward pass.

Parameters live in a flat dict keyed by dotted names, in the order given by
:func:`parameter_shapes`. That order is also the checkpoint order.

Token embedding
    Each token's bin centre ``v = (token + 0.5) / Q`` is projected with the
    linear layer of its field (``embed.alpha``, ``embed.beta``, ``embed.k``,
    ``embed.y``), then the learned embedding of its epoch is added. The alpha
    layer has one row per meta-solver slot.

Blocks
    Pre-norm causal self-attention and a GELU MLP, each on a residual
    branch.

Output
    A final layer norm and a single ``Q``-way head shared by every field.
    The head starts at zero, so an untrained model predicts uniformly.
"""
from __future__ import annotations

import math
import typing as t
from dataclasses import dataclass

import numpy as np

from spsro.exceptions import InvalidArgumentError
from spsro.modes import Field
from spsro.transformer.config import ModelConfig

LAYER_NORM_EPS = 1e-5
INIT_STD = 0.02
GELU_SCALE = math.sqrt(2.0 / math.pi)

FIELD_NAMES = {
    Field.alpha: "alpha",
    Field.beta: "beta",
    Field.k: "k",
    Field.y: "y",
}


def parameter_shapes(config: ModelConfig) -> t.Dict[str, t.Tuple[int, ...]]:
    d, m, q = config.embed_dim, config.num_solvers, config.q
    shapes: t.Dict[str, t.Tuple[int, ...]] = {
        "embed.alpha.weight": (m, d),
        "embed.alpha.bias": (m, d),
        "embed.beta.weight": (1, d),
        "embed.beta.bias": (1, d),
        "embed.k.weight": (1, d),
        "embed.k.bias": (1, d),
        "embed.y.weight": (1, d),
        "embed.y.bias": (1, d),
        "embed.epoch.weight": (config.context_epochs, d),
    }
    for i in range(config.blocks):
        prefix = f"blocks.{i}"
        shapes.update(
            {
                f"{prefix}.ln1.gain": (d,),
                f"{prefix}.ln1.bias": (d,),
                f"{prefix}.attn.qkv.weight": (d, 3 * d),
                f"{prefix}.attn.qkv.bias": (3 * d,),
                f"{prefix}.attn.proj.weight": (d, d),
                f"{prefix}.attn.proj.bias": (d,),
                f"{prefix}.ln2.gain": (d,),
                f"{prefix}.ln2.bias": (d,),
                f"{prefix}.mlp.fc.weight": (d, 4 * d),
                f"{prefix}.mlp.fc.bias": (4 * d,),
                f"{prefix}.mlp.proj.weight": (4 * d, d),
                f"{prefix}.mlp.proj.bias": (d,),
            }
        )
    shapes.update(
        {
            "ln_f.gain": (d,),
            "ln_f.bias": (d,),
            "head.weight": (d, q),
            "head.bias": (q,),
            # Log-prior over the first token of a sequence, which has no
            # context to condition on. Not trained by gradient descent.
            "prior.first_token": (q,),
        }
    )
    return shapes


@dataclass
class ModelParams:
    config: ModelConfig
    values: t.Dict[str, np.ndarray]

    def __post_init__(self):
        shapes = parameter_shapes(self.config)
        if set(self.values) != set(shapes):
            missing = sorted(set(shapes) - set(self.values))
            extra = sorted(set(self.values) - set(shapes))
            raise InvalidArgumentError(
                f"Parameters don't match the config. Missing: {missing}, "
                f"unexpected: {extra}."
            )
        values = {}
        for name, shape in shapes.items():
            value = np.asarray(self.values[name], dtype=self.config.dtype)
            if value.shape != shape:
                raise InvalidArgumentError(
                    f"{name} has shape {value.shape}, expected {shape}."
                )
            if not np.all(np.isfinite(value)):
                raise InvalidArgumentError(f"{name} has non-finite values.")
            values[name] = value
        self.values = values

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def copy(self) -> "ModelParams":
        return ModelParams(
            config=self.config,
            values={name: value.copy() for name, value in self.values.items()},
        )

    def astype(self, dtype: str) -> "ModelParams":
        return ModelParams(
            config=self.config.model_copy(update={"dtype": dtype}),
            values=dict(self.values),
        )

    def prior_log_probs(self) -> np.ndarray:
        return log_softmax(self.values["prior.first_token"])


def init_params(config: ModelConfig, seed: t.Any = 0) -> ModelParams:
    """
    Linear weights and embeddings ~ N(0, 0.02), biases zero, layer norm
    gains one. The output head and the first-token prior start at zero.
    """
    generator = np.random.default_rng(seed)
    values = {}
    for name, shape in parameter_shapes(config).items():
        if name.startswith("head.") or name.startswith("prior."):
            values[name] = np.zeros(shape)
        elif name.endswith(".gain"):
            values[name] = np.ones(shape)
        elif name.endswith(".weight"):
            values[name] = generator.normal(0.0, INIT_STD, size=shape)
        else:
            values[name] = np.zeros(shape)
    return ModelParams(config=config, values=values)


###############################################################################
# Building blocks


def log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=-1, keepdims=True)


def _layer_norm(x, gain, bias):
    mean = x.mean(axis=-1, keepdims=True)
    centred = x - mean
    variance = (centred**2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(variance + LAYER_NORM_EPS)
    normed = centred * inv_std
    return normed * gain + bias, (normed, inv_std, gain)


def _layer_norm_backward(grad, cache):
    normed, inv_std, gain = cache
    axes = tuple(range(grad.ndim - 1))
    grad_gain = np.sum(grad * normed, axis=axes)
    grad_bias = np.sum(grad, axis=axes)
    grad_normed = grad * gain
    grad_x = inv_std * (
        grad_normed
        - grad_normed.mean(axis=-1, keepdims=True)
        - normed * (grad_normed * normed).mean(axis=-1, keepdims=True)
    )
    return grad_x, grad_gain, grad_bias


def _gelu(x):
    inner = GELU_SCALE * (x + 0.044715 * x**3)
    tanh = np.tanh(inner)
    return 0.5 * x * (1.0 + tanh), (x, tanh)


def _gelu_backward(grad, cache):
    x, tanh = cache
    d_inner = GELU_SCALE * (1.0 + 3 * 0.044715 * x**2)
    local = 0.5 * (1.0 + tanh) + 0.5 * x * (1.0 - tanh**2) * d_inner
    return grad * local


def _dropout(x, rate, generator):
    if generator is None or rate <= 0.0:
        return x, None
    mask = (generator.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * mask, mask


def _dropout_backward(grad, mask):
    return grad if mask is None else grad * mask


###############################################################################
# Forward


def position_layout(
    config: ModelConfig, length: int
) -> t.Tuple[t.List[t.Tuple[Field, int]], np.ndarray]:
    """
    The ``(field, slot)`` and epoch index of each of the first ``length``
    positions.
    """
    layout = config.mode.fields(config.num_solvers)
    per_epoch = len(layout)
    fields = [layout[p % per_epoch] for p in range(length)]
    epochs = np.arange(length) // per_epoch
    return fields, epochs


def _as_batch(tokens, config: ModelConfig) -> np.ndarray:
    batch = np.asarray(tokens, dtype=np.int64)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.ndim != 2 or batch.shape[1] == 0:
        raise InvalidArgumentError("Expected a non-empty token sequence.")
    if batch.shape[1] > config.context_tokens:
        raise InvalidArgumentError(
            f"{batch.shape[1]} tokens exceed the context of "
            f"{config.context_tokens}."
        )
    if np.any(batch < 0) or np.any(batch >= config.q):
        raise InvalidArgumentError(f"Tokens must lie in [0, {config.q - 1}].")
    return batch


def _forward(
    params: ModelParams,
    batch: np.ndarray,
    generator: t.Optional[np.random.Generator] = None,
):
    """
    Returns ``(log_probs, cache)``. Dropout only applies when a generator
    is given.
    """
    config = params.config
    p = params.values
    dtype = np.dtype(config.dtype)
    batch_size, length = batch.shape
    d, heads = config.embed_dim, config.heads
    head_dim = d // heads
    rate = config.dropout

    fields, epochs = position_layout(config, length)
    weight_rows = np.stack(
        [p[f"embed.{FIELD_NAMES[f]}.weight"][slot] for f, slot in fields]
    )
    bias_rows = np.stack(
        [p[f"embed.{FIELD_NAMES[f]}.bias"][slot] for f, slot in fields]
    )
    values = ((batch + 0.5) / config.q).astype(dtype)
    x = (
        values[:, :, None] * weight_rows[None]
        + bias_rows[None]
        + p["embed.epoch.weight"][epochs][None]
    )
    x, embed_mask = _dropout(x, rate, generator)

    causal = np.tril(np.ones((length, length), dtype=bool))
    scale = 1.0 / math.sqrt(head_dim)
    block_caches = []

    for i in range(config.blocks):
        prefix = f"blocks.{i}"
        attn_in, ln1_cache = _layer_norm(
            x, p[f"{prefix}.ln1.gain"], p[f"{prefix}.ln1.bias"]
        )
        qkv = attn_in @ p[f"{prefix}.attn.qkv.weight"] + (
            p[f"{prefix}.attn.qkv.bias"]
        )
        q, k, v = np.split(qkv, 3, axis=-1)
        # (batch, heads, length, head_dim)
        split_shape = (batch_size, length, heads, head_dim)
        q = q.reshape(split_shape).transpose(0, 2, 1, 3)
        k = k.reshape(split_shape).transpose(0, 2, 1, 3)
        v = v.reshape(split_shape).transpose(0, 2, 1, 3)
        scores = (q @ k.transpose(0, 1, 3, 2)) * scale
        scores = np.where(causal, scores, -np.inf)
        attention = _softmax(scores)
        attended = attention @ v
        merged = attended.transpose(0, 2, 1, 3).reshape(batch_size, length, d)
        projected = merged @ p[f"{prefix}.attn.proj.weight"] + (
            p[f"{prefix}.attn.proj.bias"]
        )
        projected, attn_mask = _dropout(projected, rate, generator)
        x = x + projected

        mlp_in, ln2_cache = _layer_norm(
            x, p[f"{prefix}.ln2.gain"], p[f"{prefix}.ln2.bias"]
        )
        hidden = mlp_in @ p[f"{prefix}.mlp.fc.weight"] + (
            p[f"{prefix}.mlp.fc.bias"]
        )
        activated, gelu_cache = _gelu(hidden)
        out = activated @ p[f"{prefix}.mlp.proj.weight"] + (
            p[f"{prefix}.mlp.proj.bias"]
        )
        out, mlp_mask = _dropout(out, rate, generator)
        x = x + out

        block_caches.append(
            {
                "attn_in": attn_in,
                "ln1": ln1_cache,
                "q": q,
                "k": k,
                "v": v,
                "attention": attention,
                "merged": merged,
                "attn_mask": attn_mask,
                "mlp_in": mlp_in,
                "ln2": ln2_cache,
                "gelu": gelu_cache,
                "activated": activated,
                "mlp_mask": mlp_mask,
            }
        )

    final, ln_f_cache = _layer_norm(x, p["ln_f.gain"], p["ln_f.bias"])
    logits = final @ p["head.weight"] + p["head.bias"]
    log_probs = log_softmax(logits)

    cache = {
        "fields": fields,
        "epochs": epochs,
        "values": values,
        "embed_mask": embed_mask,
        "blocks": block_caches,
        "final": final,
        "ln_f": ln_f_cache,
        "scale": scale,
    }
    return log_probs, cache


def forward(params: ModelParams, tokens: t.Sequence[int]) -> np.ndarray:
    """
    Log-probabilities over the ``Q`` bins for the token after each position.
    Position ``n`` only sees tokens ``0..n``. Dropout is off.

    :param tokens:
        One sequence, or a ``(batch, length)`` array of equal-length ones.
    :returns:
        ``(length, Q)``, or ``(batch, length, Q)`` for batched input.

    """
    batch = _as_batch(tokens, params.config)
    log_probs, _ = _forward(params, batch)
    return log_probs[0] if np.ndim(tokens) == 1 else log_probs


def _nll(log_probs: np.ndarray, batch: np.ndarray) -> float:
    targets = batch[:, 1:]
    picked = np.take_along_axis(
        log_probs[:, :-1], targets[:, :, None], axis=-1
    )
    return float(-picked.mean())


def loss(params: ModelParams, tokens: t.Sequence[int]) -> float:
    """
    Mean negative log-likelihood of tokens ``1..T-1`` given their prefixes.
    The first token has no context and isn't scored.
    """
    batch = _as_batch(tokens, params.config)
    if batch.shape[1] < 2:
        raise InvalidArgumentError("The loss needs at least two tokens.")
    log_probs, _ = _forward(params, batch)
    return _nll(log_probs, batch)


###############################################################################
# Backward


def loss_and_grads(
    params: ModelParams,
    tokens: t.Sequence[int],
    generator: t.Optional[np.random.Generator] = None,
) -> t.Tuple[float, t.Dict[str, np.ndarray]]:
    """
    The loss and its exact gradient with respect to every parameter. With a
    generator, dropout is applied and differentiated through.
    """
    config = params.config
    p = params.values
    batch = _as_batch(tokens, config)
    if batch.shape[1] < 2:
        raise InvalidArgumentError("The loss needs at least two tokens.")
    log_probs, cache = _forward(params, batch, generator)
    batch_size, length = batch.shape
    d, heads = config.embed_dim, config.heads
    head_dim = d // heads

    grads = {name: np.zeros_like(value) for name, value in p.items()}

    # Cross entropy over positions 0..T-2.
    count = batch_size * (length - 1)
    grad_logits = np.exp(log_probs)
    grad_logits[:, -1] = 0.0
    rows = np.arange(batch_size)[:, None]
    cols = np.arange(length - 1)[None, :]
    grad_logits[rows, cols, batch[:, 1:]] -= 1.0
    grad_logits /= count

    grads["head.weight"] = np.einsum(
        "btd,btq->dq", cache["final"], grad_logits
    )
    grads["head.bias"] = grad_logits.sum(axis=(0, 1))
    grad_final = grad_logits @ p["head.weight"].T
    grad_x, grads["ln_f.gain"], grads["ln_f.bias"] = _layer_norm_backward(
        grad_final, cache["ln_f"]
    )

    for i in reversed(range(config.blocks)):
        prefix = f"blocks.{i}"
        c = cache["blocks"][i]

        # MLP branch
        grad_out = _dropout_backward(grad_x, c["mlp_mask"])
        grads[f"{prefix}.mlp.proj.weight"] = np.einsum(
            "bth,btd->hd", c["activated"], grad_out
        )
        grads[f"{prefix}.mlp.proj.bias"] = grad_out.sum(axis=(0, 1))
        grad_activated = grad_out @ p[f"{prefix}.mlp.proj.weight"].T
        grad_hidden = _gelu_backward(grad_activated, c["gelu"])
        grads[f"{prefix}.mlp.fc.weight"] = np.einsum(
            "btd,bth->dh", c["mlp_in"], grad_hidden
        )
        grads[f"{prefix}.mlp.fc.bias"] = grad_hidden.sum(axis=(0, 1))
        grad_mlp_in = grad_hidden @ p[f"{prefix}.mlp.fc.weight"].T
        grad_ln2, grads[f"{prefix}.ln2.gain"], grads[f"{prefix}.ln2.bias"] = (
            _layer_norm_backward(grad_mlp_in, c["ln2"])
        )
        grad_x = grad_x + grad_ln2

        # Attention branch
        grad_projected = _dropout_backward(grad_x, c["attn_mask"])
        grads[f"{prefix}.attn.proj.weight"] = np.einsum(
            "bti,btj->ij", c["merged"], grad_projected
        )
        grads[f"{prefix}.attn.proj.bias"] = grad_projected.sum(axis=(0, 1))
        grad_merged = grad_projected @ p[f"{prefix}.attn.proj.weight"].T
        grad_attended = grad_merged.reshape(
            batch_size, length, heads, head_dim
        ).transpose(0, 2, 1, 3)

        attention = c["attention"]
        grad_attention = grad_attended @ c["v"].transpose(0, 1, 3, 2)
        grad_v = attention.transpose(0, 1, 3, 2) @ grad_attended
        grad_scores = attention * (
            grad_attention
            - np.sum(grad_attention * attention, axis=-1, keepdims=True)
        )
        grad_scores = grad_scores * cache["scale"]
        grad_q = grad_scores @ c["k"]
        grad_k = grad_scores.transpose(0, 1, 3, 2) @ c["q"]

        def merge_heads(x):
            return x.transpose(0, 2, 1, 3).reshape(batch_size, length, d)

        grad_qkv = np.concatenate(
            [merge_heads(grad_q), merge_heads(grad_k), merge_heads(grad_v)],
            axis=-1,
        )
        grads[f"{prefix}.attn.qkv.weight"] = np.einsum(
            "bti,btj->ij", c["attn_in"], grad_qkv
        )
        grads[f"{prefix}.attn.qkv.bias"] = grad_qkv.sum(axis=(0, 1))
        grad_attn_in = grad_qkv @ p[f"{prefix}.attn.qkv.weight"].T
        grad_ln1, grads[f"{prefix}.ln1.gain"], grads[f"{prefix}.ln1.bias"] = (
            _layer_norm_backward(grad_attn_in, c["ln1"])
        )
        grad_x = grad_x + grad_ln1

    # Embeddings
    grad_embed = _dropout_backward(grad_x, cache["embed_mask"])
    values = cache["values"]
    per_position_value = np.einsum("bt,btd->td", values, grad_embed)
    per_position = grad_embed.sum(axis=0)
    for position, (field, slot) in enumerate(cache["fields"]):
        name = FIELD_NAMES[field]
        grads[f"embed.{name}.weight"][slot] += per_position_value[position]
        grads[f"embed.{name}.bias"][slot] += per_position[position]
    np.add.at(grads["embed.epoch.weight"], cache["epochs"], per_position)

    return _nll(log_probs, batch), grads


def backward(
    params: ModelParams, tokens: t.Sequence[int]
) -> t.Dict[str, np.ndarray]:
    """
    Gradient of :func:`loss` with respect to every parameter. The first
    token prior gets a zero gradient.
    """
    _, grads = loss_and_grads(params, tokens)
    return grads
