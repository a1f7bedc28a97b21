"""
Quantises run traces into token sequences for the transformer.

Each real value ``x`` in ``[low, high]`` becomes one of ``Q`` bins::

    token = floor((x - low) / (high - low) * Q)

with ``x = high`` (and anything outside the range) clamped into
``[0, Q - 1]``. Decoding returns the bin centre. Every epoch contributes
``alpha_1 .. alpha_m`` then, for extensive-form runs, ``beta`` and ``K``,
then ``y``.
"""
from __future__ import annotations

import math
import typing as t
from dataclasses import dataclass

from spsro.engine import RunTrace
from spsro.exceptions import InvalidArgumentError, ModeMismatchError
from spsro.modes import Field, Mode


@dataclass(frozen=True)
class QuantizationSpec:
    """
    :param q:
        Number of bins.
    :param y_min:
        Lower end of the ``y`` range observed in the dataset.
    :param y_max:
        Upper end of the observed ``y`` range.

    """

    q: int
    mode: Mode
    solvers: t.Tuple[str, ...]
    k_bar: int
    y_min: float
    y_max: float

    def __post_init__(self):
        if self.q < 2:
            raise InvalidArgumentError("The quantization level must be >= 2.")
        if len(self.solvers) == 0:
            raise InvalidArgumentError("At least one meta-solver is needed.")
        if self.k_bar < 1:
            raise InvalidArgumentError("k_bar must be at least 1.")
        if not (
            math.isfinite(self.y_min)
            and math.isfinite(self.y_max)
            and self.y_max > self.y_min
        ):
            raise InvalidArgumentError(
                f"Invalid y range [{self.y_min}, {self.y_max}]."
            )
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "solvers", tuple(self.solvers))

    @classmethod
    def create(
        cls,
        q: int,
        mode: Mode,
        solvers: t.Sequence[str],
        k_bar: int,
        ys: t.Iterable[float],
    ) -> "QuantizationSpec":
        """
        Derives the ``y`` range from observed values. A single repeated
        value gets a range of width 1 above it.
        """
        ys = list(ys)
        if not ys:
            raise InvalidArgumentError("No y values to derive a range from.")
        y_min, y_max = float(min(ys)), float(max(ys))
        if y_max <= y_min:
            y_max = y_min + 1.0
        return cls(
            q=q,
            mode=mode,
            solvers=tuple(solvers),
            k_bar=k_bar,
            y_min=y_min,
            y_max=y_max,
        )

    @property
    def m(self) -> int:
        return len(self.solvers)

    @property
    def tokens_per_epoch(self) -> int:
        return self.mode.tokens_per_epoch(self.m)

    def layout(self) -> t.List[t.Tuple[Field, int]]:
        return self.mode.fields(self.m)

    def value_range(self, field: Field) -> t.Tuple[float, float]:
        if field in (Field.alpha, Field.beta):
            return 0.0, 1.0
        if field is Field.k:
            # K_bar = 1 leaves nothing to quantise, so give the bins some
            # width. detokenize clamps the result back to K_bar.
            return 1.0, float(max(self.k_bar, 2))
        return self.y_min, self.y_max


def tokenize(x: float, field: Field, spec: QuantizationSpec) -> int:
    low, high = spec.value_range(field)
    x = min(max(float(x), low), high)
    token = math.floor((x - low) / (high - low) * spec.q)
    return min(max(token, 0), spec.q - 1)


def detokenize(token: int, field: Field, spec: QuantizationSpec) -> float:
    if not 0 <= token < spec.q:
        raise InvalidArgumentError(
            f"Token {token} is outside [0, {spec.q - 1}]."
        )
    low, high = spec.value_range(field)
    value = low + (token + 0.5) / spec.q * (high - low)
    if field is Field.k:
        return min(value, float(spec.k_bar))
    return value


@dataclass(frozen=True)
class TokenSequence:
    """
    :param tokens:
        Flat token list, ``tokens_per_epoch`` tokens per epoch.
    :param epochs:
        The 0-based epoch index of each token.

    """

    mode: Mode
    num_solvers: int
    tokens: t.Tuple[int, ...]
    epochs: t.Tuple[int, ...]

    def __post_init__(self):
        per_epoch = self.mode.tokens_per_epoch(self.num_solvers)
        if len(self.tokens) != len(self.epochs):
            raise InvalidArgumentError("Every token needs an epoch index.")
        if len(self.tokens) % per_epoch:
            raise InvalidArgumentError(
                f"{len(self.tokens)} tokens isn't a whole number of epochs "
                f"of {per_epoch} tokens."
            )

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def num_epochs(self) -> int:
        return len(self.tokens) // self.mode.tokens_per_epoch(
            self.num_solvers
        )


@dataclass(frozen=True)
class DecodedEpoch:
    """
    Bin centres for one epoch. ``beta`` and ``k`` are ``None`` for
    normal-form runs.
    """

    alpha: t.Tuple[float, ...]
    beta: t.Optional[float]
    k: t.Optional[float]
    y: float


def epoch_values(
    trace: RunTrace, epoch_index: int
) -> t.Dict[t.Tuple[Field, int], float]:
    selection, metrics = trace.epochs[epoch_index]
    values = {
        (Field.alpha, slot): alpha
        for slot, alpha in enumerate(selection.weights.alpha)
    }
    values[(Field.beta, 0)] = selection.oracle.beta
    values[(Field.k, 0)] = float(selection.oracle.k)
    values[(Field.y, 0)] = metrics.y
    return values


def encode_trace(
    trace: RunTrace,
    spec: QuantizationSpec,
    context_epochs: t.Optional[int] = None,
) -> TokenSequence:
    """
    :raises ModeMismatchError:
        If the trace and spec disagree on the mode.
    :raises InvalidArgumentError:
        If the trace uses different meta-solvers, or has more than
        ``context_epochs`` epochs.

    """
    if Mode(trace.mode) is not spec.mode:
        raise ModeMismatchError(
            f"A {trace.mode.value} trace can't be encoded in "
            f"{spec.mode.value} mode."
        )
    if len(trace) and tuple(trace.solvers) != spec.solvers:
        raise InvalidArgumentError(
            f"The trace uses {trace.solvers}, the quantization {spec.solvers}."
        )
    if context_epochs is not None and len(trace) > context_epochs:
        raise InvalidArgumentError(
            f"The trace has {len(trace)} epochs, more than the context of "
            f"{context_epochs}."
        )

    tokens: t.List[int] = []
    epochs: t.List[int] = []
    layout = spec.layout()
    for epoch_index in range(len(trace)):
        values = epoch_values(trace, epoch_index)
        for field, slot in layout:
            tokens.append(tokenize(values[(field, slot)], field, spec))
            epochs.append(epoch_index)

    return TokenSequence(
        mode=spec.mode,
        num_solvers=spec.m,
        tokens=tuple(tokens),
        epochs=tuple(epochs),
    )


def decode_trace(
    sequence: TokenSequence, spec: QuantizationSpec
) -> t.List[DecodedEpoch]:
    if sequence.mode is not spec.mode or sequence.num_solvers != spec.m:
        raise ModeMismatchError("The sequence doesn't match the quantization.")

    output = []
    layout = spec.layout()
    per_epoch = len(layout)
    for start in range(0, len(sequence), per_epoch):
        values: t.Dict[Field, t.List[float]] = {i: [] for i in Field}
        for (field, _), token in zip(
            layout, sequence.tokens[start : start + per_epoch]
        ):
            values[field].append(detokenize(token, field, spec))
        output.append(
            DecodedEpoch(
                alpha=tuple(values[Field.alpha]),
                beta=values[Field.beta][0] if values[Field.beta] else None,
                k=values[Field.k][0] if values[Field.k] else None,
                y=values[Field.y][0],
            )
        )
    return output
