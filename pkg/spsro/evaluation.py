"""
NashConv and the per-epoch metric ``y`` that selectors minimise.
"""
from __future__ import annotations

import logging
import typing as t
from dataclasses import dataclass

import numpy as np

from spsro.exceptions import DegenerateReferenceError, InvalidArgumentError
from spsro.games import (
    Game,
    NormalFormGame,
    TabularPolicy,
    aggregate_policies,
    best_response,
    expected_value,
)
from spsro.meta_game import PolicySpace

logger = logging.getLogger(__name__)

CLAMP_TOLERANCE = 1e-9


@dataclass(frozen=True)
class EpochMetrics:
    """
    :param degenerate:
        Set when the epoch-1 NashConv was zero, in which case ``y`` only
        holds the effort ratio.

    """

    epoch: int
    nashconv: float
    br_effort: float
    y: float
    degenerate: bool = False

    def __post_init__(self):
        if self.epoch < 1:
            raise InvalidArgumentError("Epochs are numbered from 1.")
        if not self.nashconv >= -CLAMP_TOLERANCE:
            raise InvalidArgumentError(
                f"NashConv can't be negative, got {self.nashconv}."
            )
        if not self.br_effort > 0.0:
            raise InvalidArgumentError("The best-response effort must be > 0.")
        if not np.isfinite(self.y):
            raise InvalidArgumentError("y must be finite.")


@dataclass(frozen=True)
class ReferenceValues:
    """
    The epoch-1 NashConv and effort which later epochs are measured against.
    """

    nashconv: float
    effort: float


def nashconv(game: Game, space: PolicySpace, sigma: t.Sequence) -> float:
    """
    The sum over players of how much an exact best response in the full
    game gains over the player's current meta-strategy.

    :param sigma:
        A meta-strategy, indexable by player, over ``space``.

    """
    for player in (0, 1):
        if np.shape(sigma[player]) != (space.size(player),):
            raise InvalidArgumentError(
                f"Player {player + 1}'s meta-strategy doesn't match the "
                "policy space."
            )

    aggregated = [
        aggregate_policies(
            game, space.policies[player], np.asarray(sigma[player]), player
        )
        for player in (0, 1)
    ]

    if isinstance(game, NormalFormGame):
        x = t.cast(np.ndarray, aggregated[0])
        y = t.cast(np.ndarray, aggregated[1])
        value = float(x @ game.payoff @ y)
        best_0 = float(np.max(game.payoff @ y))
        best_1 = float(np.max(-(x @ game.payoff)))
    else:
        policy_0 = t.cast(TabularPolicy, aggregated[0])
        policy_1 = t.cast(TabularPolicy, aggregated[1])
        value = expected_value(game, policy_0, policy_1)[0]
        _, best_0 = best_response(game, policy_1, player=0)
        _, best_1 = best_response(game, policy_0, player=1)

    total = (best_0 - value) + (best_1 + value)
    if total < 0.0:
        if total < -CLAMP_TOLERANCE:
            logger.warning("NashConv came out negative: %s", total)
        total = 0.0
    return total


def metric_y(
    nashconv_e: float, effort_e: float, refs: ReferenceValues
) -> float:
    """
    ``nashconv_e / refs.nashconv + effort_e / refs.effort``.

    :raises DegenerateReferenceError:
        If the reference NashConv is zero. The game was solved at epoch 1, so
        the caller should fall back to :func:`effort_ratio`.

    """
    if refs.effort <= 0.0:
        raise InvalidArgumentError("The reference effort must be positive.")
    if refs.nashconv == 0.0:
        raise DegenerateReferenceError(
            "The epoch-1 NashConv is zero, so the NashConv ratio is undefined."
        )
    return nashconv_e / refs.nashconv + effort_ratio(effort_e, refs)


def effort_ratio(effort_e: float, refs: ReferenceValues) -> float:
    return effort_e / refs.effort
