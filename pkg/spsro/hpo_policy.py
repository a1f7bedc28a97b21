"""
A trained sequence model used as a :class:`~spsro.engine.SelectorPolicy`.

The run so far is encoded (every epoch's ``y`` included), then each field of
the next epoch is predicted in layout order. A predicted token is appended
to the context before the next field is predicted. The ``y`` slot is left
for the run to fill in.
"""
from __future__ import annotations

import logging
import typing as t
from dataclasses import dataclass

import numpy as np

from spsro.engine import HyperparamSelection, RunTrace, SelectorPolicy
from spsro.exceptions import (
    CapacityError,
    InvalidArgumentError,
    ModeMismatchError,
)
from spsro.meta_solvers import SolverWeights
from spsro.modes import Field, Mode
from spsro.oracles import OracleParams
from spsro.tokenizer import QuantizationSpec, detokenize, encode_trace
from spsro.transformer.model import ModelParams, forward

logger = logging.getLogger(__name__)


def _check_spec(params: ModelParams, spec: QuantizationSpec):
    config = params.config
    if config.mode is not spec.mode:
        raise ModeMismatchError(
            f"The model is {config.mode.value}, the quantization "
            f"{spec.mode.value}."
        )
    if config.q != spec.q:
        raise ModeMismatchError(
            f"The model has {config.q} bins, the quantization {spec.q}."
        )
    if config.num_solvers != spec.m:
        raise ModeMismatchError(
            f"The model expects {config.num_solvers} meta-solvers, the "
            f"quantization has {spec.m}."
        )


def next_token_log_probs(
    params: ModelParams, context: t.Sequence[int]
) -> np.ndarray:
    """
    Log-probabilities of the token following ``context``. An empty context
    uses the first-token prior.
    """
    if len(context) == 0:
        return params.prior_log_probs().astype(np.float64)
    return forward(params, list(context))[-1].astype(np.float64)


@dataclass(frozen=True)
class BinDensity:
    """
    The piecewise-constant density a ``Q``-way bin distribution implies over
    ``[low, high]``: bin ``b`` has density ``probs[b] * Q / (high - low)``.
    """

    probs: np.ndarray
    low: float
    high: float

    @property
    def bin_width(self) -> float:
        return (self.high - self.low) / len(self.probs)

    @property
    def values(self) -> np.ndarray:
        return self.probs / self.bin_width

    def __call__(self, x: float) -> float:
        if not self.low <= x <= self.high:
            return 0.0
        index = int((x - self.low) / self.bin_width)
        return float(self.values[min(index, len(self.probs) - 1)])

    def integral(self) -> float:
        return float(np.sum(self.values) * self.bin_width)


def token_density(
    params: ModelParams,
    spec: QuantizationSpec,
    context: t.Sequence[int],
    field: Field,
) -> BinDensity:
    """
    The model's density over the real range of the field that comes next
    after ``context``.

    :raises InvalidArgumentError:
        If ``field`` isn't the one the layout puts after ``context``.

    """
    _check_spec(params, spec)
    layout = spec.layout()
    expected, _ = layout[len(context) % len(layout)]
    if Field(field) is not expected:
        raise InvalidArgumentError(
            f"Position {len(context)} holds {expected.value}, not "
            f"{Field(field).value}."
        )
    low, high = spec.value_range(expected)
    probs = np.exp(next_token_log_probs(params, context))
    return BinDensity(probs=probs / probs.sum(), low=low, high=high)


class TransformerSelector(SelectorPolicy):
    """
    :param greedy:
        Take the most likely bin instead of sampling.
    :param temperature:
        Log-probabilities are divided by this before sampling.
    :param seed:
        Seeds the sampling stream. Use one selector per run.

    After every call, ``last_tokens`` holds the predicted tokens and
    ``last_log_prob`` the summed log-probability of those tokens under the
    sampling distribution.
    """

    def __init__(
        self,
        params: ModelParams,
        spec: QuantizationSpec,
        greedy: bool = False,
        temperature: float = 1.0,
        seed: t.Any = 0,
    ):
        if not temperature > 0.0:
            raise InvalidArgumentError("The temperature must be positive.")
        _check_spec(params, spec)
        self.params = params
        self.spec = spec
        self.greedy = greedy
        self.temperature = temperature
        self.generator = np.random.default_rng(seed)
        self.last_tokens: t.List[int] = []
        self.last_log_prob = 0.0

    def _pick(self, log_probs: np.ndarray) -> t.Tuple[int, float]:
        if self.greedy:
            token = int(np.argmax(log_probs))
            return token, float(log_probs[token])
        scaled = log_probs / self.temperature
        probs = np.exp(scaled - np.max(scaled))
        probs /= probs.sum()
        token = int(self.generator.choice(len(probs), p=probs))
        return token, float(np.log(probs[token]))

    def next(self, trace: RunTrace) -> HyperparamSelection:
        config = self.params.config
        if Mode(trace.mode) is not config.mode:
            raise ModeMismatchError(
                f"A {config.mode.value} model can't steer a "
                f"{Mode(trace.mode).value} run."
            )
        if len(trace) >= config.context_epochs:
            raise CapacityError(
                f"The run already has {len(trace)} epochs, the model's "
                f"capacity is {config.context_epochs}."
            )

        context = list(encode_trace(trace, self.spec).tokens)
        values: t.Dict[Field, t.List[float]] = {i: [] for i in Field}
        tokens: t.List[int] = []
        log_prob = 0.0
        for field, _ in self.spec.layout():
            if field is Field.y:
                break
            token, token_log_prob = self._pick(
                next_token_log_probs(self.params, context)
            )
            context.append(token)
            tokens.append(token)
            log_prob += token_log_prob
            values[field].append(detokenize(token, field, self.spec))

        self.last_tokens = tokens
        self.last_log_prob = log_prob
        logger.debug("Epoch %d tokens: %s", len(trace) + 1, tokens)

        alpha = np.array(values[Field.alpha])
        alpha = alpha / alpha.sum()
        if self.spec.mode is Mode.efg:
            beta = min(max(values[Field.beta][0], 0.0), 1.0)
            k = int(min(max(round(values[Field.k][0]), 1), self.spec.k_bar))
        else:
            beta, k = 0.0, 1

        return HyperparamSelection(
            weights=SolverWeights(
                solvers=self.spec.solvers, alpha=tuple(alpha)
            ),
            oracle=OracleParams(beta=beta, k=k, k_bar=self.spec.k_bar),
        )


def next_selection(
    selector: TransformerSelector, trace: RunTrace
) -> HyperparamSelection:
    return selector.next(trace)
