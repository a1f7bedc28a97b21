"""
Trains the sequence model on an offline dataset with AdamW.

The learning rate warms up linearly over ``warmup_tokens`` predicted tokens,
then follows a cosine down to 10% of the base rate at ``final_tokens``.
Decoupled weight decay applies to the ``*.weight`` matrices of the linear
layers only. Shuffling, initialisation and dropout each have their own
random stream derived from the seed, so a rerun is bit-identical.
"""
from __future__ import annotations

import logging
import math
import typing as t
from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

from spsro.dataset import Dataset
from spsro.exceptions import InvalidArgumentError, ModeMismatchError
from spsro.tokenizer import encode_trace
from spsro.transformer.config import ModelConfig, TrainConfig
from spsro.transformer.model import ModelParams, init_params, loss_and_grads

logger = logging.getLogger(__name__)

ADAM_EPS = 1e-8
MIN_LR_FRACTION = 0.1
NO_DECAY = ("embed.epoch.weight",)


@dataclass
class TrainResult:
    params: ModelParams
    losses: t.List[float] = field(default_factory=list)


def check_compatible(dataset: Dataset, config: ModelConfig):
    """
    :raises ModeMismatchError:
        If the model and dataset disagree on the mode, the number of
        meta-solvers or the quantization level.
    :raises InvalidArgumentError:
        If the dataset's runs are longer than the model's context.

    """
    spec = dataset.quantization
    if spec.mode is not config.mode:
        raise ModeMismatchError(
            f"The model is {config.mode.value}, the dataset "
            f"{spec.mode.value}."
        )
    if spec.m != config.num_solvers:
        raise ModeMismatchError(
            f"The model expects {config.num_solvers} meta-solvers, the "
            f"dataset has {spec.m}."
        )
    if spec.q != config.q:
        raise ModeMismatchError(
            f"The model has {config.q} bins, the dataset {spec.q}."
        )
    if dataset.epochs > config.context_epochs:
        raise InvalidArgumentError(
            f"The dataset has {dataset.epochs} epochs per run, more than the "
            f"model's context of {config.context_epochs}."
        )


def fit_first_token_prior(
    sequences: t.Sequence[t.Sequence[int]], q: int
) -> np.ndarray:
    """
    Log-frequencies of the first token, with add-one smoothing.
    """
    counts = np.ones(q)
    for sequence in sequences:
        counts[sequence[0]] += 1
    return np.log(counts / counts.sum())


def learning_rate(
    tokens: int, final_tokens: int, config: TrainConfig
) -> float:
    if tokens < config.warmup_tokens:
        return config.lr * tokens / max(1, config.warmup_tokens)
    progress = (tokens - config.warmup_tokens) / max(
        1, final_tokens - config.warmup_tokens
    )
    multiplier = max(
        MIN_LR_FRACTION, 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))
    )
    return config.lr * multiplier


def _decays(name: str) -> bool:
    return name.endswith(".weight") and name not in NO_DECAY


def _batch_loss_and_grads(
    params: ModelParams,
    sequences: t.List[t.Tuple[int, ...]],
    generator: np.random.Generator,
) -> t.Tuple[float, t.Dict[str, np.ndarray], int]:
    """
    Sequences of different lengths are run in equal-length groups. The
    result is the mean over every predicted token in the batch.
    """
    groups: t.Dict[int, t.List[t.Tuple[int, ...]]] = {}
    for sequence in sequences:
        groups.setdefault(len(sequence), []).append(sequence)

    total = sum(len(s) - 1 for s in sequences)
    loss_sum = 0.0
    grads: t.Dict[str, np.ndarray] = {}
    for length in sorted(groups):
        group = groups[length]
        weight = len(group) * (length - 1) / total
        loss, group_grads = loss_and_grads(
            params, np.array(group), generator
        )
        loss_sum += weight * loss
        for name, grad in group_grads.items():
            if name in grads:
                grads[name] += weight * grad
            else:
                grads[name] = weight * grad
    return loss_sum, grads, total


def train(
    dataset: Dataset,
    model_config: ModelConfig,
    train_config: t.Optional[TrainConfig] = None,
    progress: bool = False,
) -> TrainResult:
    """
    :param progress:
        Show a progress bar over training epochs.
    :returns:
        The final parameters and the mean loss of each training epoch.

    """
    train_config = train_config or TrainConfig()
    check_compatible(dataset, model_config)

    encoded = [
        encode_trace(run, dataset.quantization, model_config.context_epochs)
        for run in dataset.runs
    ]
    sequences = [i.tokens for i in encoded if len(i) >= 2]
    if not sequences:
        raise InvalidArgumentError("The dataset has no runs to train on.")

    seed = train_config.seed
    params = init_params(
        model_config, np.random.SeedSequence(seed, spawn_key=(0,))
    )
    shuffle_generator = np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(1,))
    )
    dropout_generator = np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(2,))
    )

    params.values["prior.first_token"] = fit_first_token_prior(
        sequences, model_config.q
    ).astype(model_config.dtype)

    dataset_tokens = sum(len(s) - 1 for s in sequences)
    final_tokens = train_config.final_tokens or (
        dataset_tokens * train_config.epochs
    )
    beta_1, beta_2 = train_config.betas
    first_moment = {n: np.zeros_like(v) for n, v in params.values.items()}
    second_moment = {n: np.zeros_like(v) for n, v in params.values.items()}
    step = 0
    tokens_seen = 0
    losses: t.List[float] = []

    epochs: t.Iterable[int] = range(train_config.epochs)
    if progress:
        epochs = tqdm(epochs, desc="Training", unit="epoch")

    for epoch in epochs:
        order = shuffle_generator.permutation(len(sequences))
        epoch_loss = 0.0
        for start in range(0, len(order), train_config.batch_size):
            batch = [
                sequences[i]
                for i in order[start : start + train_config.batch_size]
            ]
            loss, grads, batch_tokens = _batch_loss_and_grads(
                params, batch, dropout_generator
            )
            epoch_loss += loss * batch_tokens / dataset_tokens

            # The prior is fitted from frequencies, not trained.
            grads.pop("prior.first_token", None)

            norm = math.sqrt(
                sum(float(np.sum(g * g)) for g in grads.values())
            )
            if norm > train_config.grad_norm_clip:
                scale = train_config.grad_norm_clip / (norm + 1e-6)
                grads = {n: g * scale for n, g in grads.items()}

            step += 1
            tokens_seen += batch_tokens
            lr = learning_rate(tokens_seen, final_tokens, train_config)
            bias_1 = 1.0 - beta_1**step
            bias_2 = 1.0 - beta_2**step

            for name, grad in grads.items():
                value = params.values[name]
                if _decays(name):
                    value *= 1.0 - lr * train_config.weight_decay
                first_moment[name] = beta_1 * first_moment[name] + (
                    (1.0 - beta_1) * grad
                )
                second_moment[name] = beta_2 * second_moment[name] + (
                    (1.0 - beta_2) * grad * grad
                )
                update = (first_moment[name] / bias_1) / (
                    np.sqrt(second_moment[name] / bias_2) + ADAM_EPS
                )
                value -= (lr * update).astype(value.dtype)

        losses.append(epoch_loss)
        logger.info("Epoch %d: mean loss %.6f", epoch + 1, epoch_loss)
        if not math.isfinite(epoch_loss):
            raise InvalidArgumentError(
                f"Training diverged at epoch {epoch + 1}."
            )

    return TrainResult(params=params, losses=losses)
