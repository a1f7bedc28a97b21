"""
The empirical meta-game: each player's growing list of policies and the
matrix of exact expected payoffs between them.
"""
from __future__ import annotations

import typing as t
from dataclasses import dataclass

import numpy as np
import pandas as pd

from spsro.exceptions import InvalidArgumentError, PreconditionError
from spsro.games import Game, Policy, expected_value


@dataclass(frozen=True)
class PolicySpace:
    """
    Immutable - ``append`` and ``remove`` return new spaces. Index ``e - 1``
    holds the policy added at epoch ``e`` until something is pruned.
    """

    policies: t.Tuple[t.Tuple[Policy, ...], t.Tuple[Policy, ...]]

    @classmethod
    def create(cls, policy_1: Policy, policy_2: Policy) -> "PolicySpace":
        return cls(policies=((policy_1,), (policy_2,)))

    def size(self, player: int) -> int:
        return len(self.policies[player])

    @property
    def shape(self) -> t.Tuple[int, int]:
        return self.size(0), self.size(1)

    def append(self, player: int, policy: Policy) -> "PolicySpace":
        policies = list(self.policies)
        policies[player] = policies[player] + (policy,)
        return PolicySpace(policies=(policies[0], policies[1]))

    def remove(self, player: int, index: int) -> "PolicySpace":
        policies = list(self.policies)
        player_policies = list(policies[player])
        del player_policies[index]
        policies[player] = tuple(player_policies)
        return PolicySpace(policies=(policies[0], policies[1]))


@dataclass(frozen=True, eq=False)
class PayoffTensor:
    """
    ``values[j, k]`` is player 1's expected payoff of its policy ``j``
    against player 2's policy ``k``.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise InvalidArgumentError("A payoff tensor must be 2D.")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def empty(cls) -> "PayoffTensor":
        return cls(values=np.zeros((0, 0)))

    @property
    def shape(self) -> t.Tuple[int, int]:
        return self.values.shape[0], self.values.shape[1]

    def to_csv(self, path: t.Optional[str] = None) -> t.Optional[str]:
        """
        One row per player 1 policy, no header. Returns the text if no
        ``path`` is given.
        """
        return pd.DataFrame(self.values).to_csv(
            path,
            index=False,
            header=False,
            lineterminator="\n",
            float_format="%.17g",
        )


def update_payoff_tensor(
    space: PolicySpace, tensor: PayoffTensor, game: Game
) -> PayoffTensor:
    """
    Evaluates every match-up missing from ``tensor``. Existing entries are
    copied across untouched.
    """
    rows, cols = space.shape
    old_rows, old_cols = tensor.shape
    if old_rows > rows or old_cols > cols:
        raise InvalidArgumentError(
            f"The payoff tensor {tensor.shape} is larger than the policy "
            f"space {space.shape}."
        )
    if (old_rows, old_cols) == (rows, cols):
        return tensor

    values = np.zeros((rows, cols))
    values[:old_rows, :old_cols] = tensor.values
    for j in range(rows):
        for k in range(cols):
            if j < old_rows and k < old_cols:
                continue
            values[j, k] = expected_value(
                game, space.policies[0][j], space.policies[1][k]
            )[0]
    return PayoffTensor(values=values)


def prune_policy(
    space: PolicySpace,
    tensor: PayoffTensor,
    meta_strategy: t.Sequence[np.ndarray],
    player: int,
    cap: int,
) -> t.Tuple[PolicySpace, PayoffTensor]:
    """
    Removes ``player``'s policy with the least meta-strategy probability
    (lowest index on ties), along with its row or column of the tensor.

    :raises PreconditionError:
        If the player's space doesn't exceed ``cap``.

    """
    if space.size(player) <= cap:
        raise PreconditionError(
            f"Player {player + 1} has {space.size(player)} policies, which "
            f"doesn't exceed the cap of {cap}."
        )
    probabilities = np.asarray(meta_strategy[player])
    if probabilities.shape != (space.size(player),):
        raise InvalidArgumentError(
            "The meta-strategy doesn't match the policy space."
        )

    index = int(np.argmin(probabilities))
    values = np.delete(tensor.values, index, axis=player)
    return space.remove(player, index), PayoffTensor(values=values)
