"""
Two-player zero-sum games: random normal-form games and Kuhn poker, plus the
policies played in them and exact payoff evaluation.

Random payoff matrices come from NumPy's ``PCG64`` bit generator seeded with
the game's 64-bit seed, drawing ``rows * cols`` values in row-major order
with ``Generator.uniform(-1.0, 1.0)``. The same ``(rows, cols, seed)``
always produces the same matrix.
"""
from __future__ import annotations

import itertools
import typing as t
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from spsro.exceptions import InvalidArgumentError, InvalidPolicyError

MAX_SEED = 2**64 - 1
PROBABILITY_TOLERANCE = 1e-9


###############################################################################
# Normal-form games


@dataclass(frozen=True, eq=False)
class NormalFormGame:
    """
    :param payoff:
        ``rows x cols`` matrix of player 1's rewards, each in ``[-1, 1]``.
        Player 2 receives the negation.

    """

    rows: int
    cols: int
    payoff: np.ndarray
    seed: int

    def __post_init__(self):
        payoff = np.array(self.payoff, dtype=np.float64)
        if payoff.shape != (self.rows, self.cols):
            raise InvalidArgumentError(
                f"Payoff matrix has shape {payoff.shape}, expected "
                f"{(self.rows, self.cols)}."
            )
        if not np.all(np.isfinite(payoff)) or np.any(np.abs(payoff) > 1.0):
            raise InvalidArgumentError("Payoffs must lie within [-1, 1].")
        payoff.flags.writeable = False
        object.__setattr__(self, "payoff", payoff)

    def num_actions(self, player: int) -> int:
        return self.rows if player == 0 else self.cols

    def descriptor(self) -> "NFGDescriptor":
        return NFGDescriptor(rows=self.rows, cols=self.cols, seed=self.seed)


@dataclass(frozen=True)
class PureAction:
    index: int


def generate_nfg(rows: int, cols: int, seed: int) -> NormalFormGame:
    """
    Samples a random zero-sum matrix game with payoffs uniform on
    ``[-1, 1]``.

    :raises InvalidArgumentError:
        For a zero dimension or a seed outside the unsigned 64-bit range.

    """
    if rows < 1 or cols < 1:
        raise InvalidArgumentError(
            f"Game dimensions must be positive, got {rows}x{cols}."
        )
    if not 0 <= seed <= MAX_SEED:
        raise InvalidArgumentError("The seed must be an unsigned 64 bit int.")

    generator = np.random.Generator(np.random.PCG64(seed))
    payoff = generator.uniform(-1.0, 1.0, size=(rows, cols))
    return NormalFormGame(rows=rows, cols=cols, payoff=payoff, seed=seed)


###############################################################################
# Kuhn poker

PASS, BET = 0, 1
ACTION_CHARS = "pb"
TERMINAL_HISTORIES = frozenset(("pp", "bp", "bb", "pbp", "pbb"))


@dataclass(frozen=True)
class KuhnPoker:
    """
    Three cards (J < Q < K), one chip ante, one chip bet. Player 1 acts first.
    Actions are ``0`` (pass / check / fold) and ``1`` (bet / call).
    """

    cards: t.Tuple[str, ...] = ("J", "Q", "K")
    ante: int = 1
    bet: int = 1

    @property
    def deals(self) -> t.List[t.Tuple[int, int]]:
        return list(itertools.permutations(range(len(self.cards)), 2))

    @property
    def deal_probability(self) -> float:
        return 1.0 / len(self.deals)

    def num_actions(self, player: int) -> int:
        return 2

    def info_states(self, player: int) -> t.List[str]:
        histories = ("", "pb") if player == 0 else ("p", "b")
        return [card + h for h in histories for card in self.cards]

    def utility(self, card_0: int, card_1: int, history: str) -> float:
        """
        Player 1's payoff at a terminal history.
        """
        if history == "bp":
            return float(self.ante)
        if history == "pbp":
            return -float(self.ante)
        stake = self.ante + (self.bet if history in ("bb", "pbb") else 0)
        return float(stake if card_0 > card_1 else -stake)

    def descriptor(self) -> "KuhnDescriptor":
        return KuhnDescriptor()


Game = t.Union[NormalFormGame, KuhnPoker]


def is_terminal(history: str) -> bool:
    return history in TERMINAL_HISTORIES


###############################################################################
# Policies


@dataclass(frozen=True)
class TabularPolicy:
    """
    A behaviour policy for one player of an extensive-form game.

    :param player:
        0 or 1.
    :param table:
        Information state key -> probability of each legal action.

    """

    player: int
    table: t.Mapping[str, t.Tuple[float, ...]] = field(hash=False)

    def __post_init__(self):
        table = {}
        for key, probs in self.table.items():
            probs = tuple(float(p) for p in probs)
            if any(p < 0.0 for p in probs) or (
                abs(sum(probs) - 1.0) > PROBABILITY_TOLERANCE
            ):
                raise InvalidPolicyError(
                    f"The distribution at {key!r} isn't on the simplex: "
                    f"{probs}."
                )
            table[key] = probs
        object.__setattr__(self, "table", MappingProxyType(table))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TabularPolicy):
            return NotImplemented
        return self.player == other.player and dict(self.table) == dict(
            other.table
        )

    def probs(self, key: str) -> t.Tuple[float, ...]:
        try:
            return self.table[key]
        except KeyError:
            raise InvalidPolicyError(
                f"Player {self.player + 1}'s policy has no entry for "
                f"information state {key!r}."
            )

    @classmethod
    def uniform(cls, game: KuhnPoker, player: int) -> "TabularPolicy":
        n = game.num_actions(player)
        return cls(
            player=player,
            table={key: (1.0 / n,) * n for key in game.info_states(player)},
        )

    @classmethod
    def random(
        cls, game: KuhnPoker, player: int, generator: np.random.Generator
    ) -> "TabularPolicy":
        """
        Every information state gets an independent ``Dirichlet(1, ..., 1)``
        distribution.
        """
        n = game.num_actions(player)
        table = {}
        for key in game.info_states(player):
            probs = generator.dirichlet(np.ones(n))
            table[key] = tuple(probs / probs.sum())
        return cls(player=player, table=table)

    @classmethod
    def deterministic(
        cls, game: KuhnPoker, player: int, choices: t.Mapping[str, int]
    ) -> "TabularPolicy":
        n = game.num_actions(player)
        table = {}
        for key in game.info_states(player):
            probs = [0.0] * n
            probs[choices.get(key, 0)] = 1.0
            table[key] = tuple(probs)
        return cls(player=player, table=table)


Policy = t.Union[PureAction, TabularPolicy, np.ndarray]


def _mixed_action(
    game: NormalFormGame, policy: Policy, player: int
) -> np.ndarray:
    n = game.num_actions(player)
    if isinstance(policy, PureAction):
        if not 0 <= policy.index < n:
            raise InvalidPolicyError(
                f"Action {policy.index} is out of range for player "
                f"{player + 1} ({n} actions)."
            )
        output = np.zeros(n)
        output[policy.index] = 1.0
        return output

    if isinstance(policy, np.ndarray):
        if (
            policy.shape != (n,)
            or np.any(policy < 0.0)
            or abs(policy.sum() - 1.0) > PROBABILITY_TOLERANCE
        ):
            raise InvalidPolicyError(
                f"Player {player + 1}'s mixed action must be a distribution "
                f"over {n} actions."
            )
        return policy.astype(np.float64)

    raise InvalidPolicyError(
        "Normal-form policies are pure actions or mixed action vectors."
    )


def expected_value(
    game: Game, policy_1: Policy, policy_2: Policy
) -> t.Tuple[float, float]:
    """
    Exact expected payoffs of both players.

    For normal-form games the policies are :class:`PureAction` instances or
    mixed action vectors, and the value is the bilinear form
    ``x^T A y``. For Kuhn poker every deal and action sequence with non-zero
    probability is enumerated.

    :raises InvalidPolicyError:
        If a policy doesn't match the game, or a tabular policy is missing a
        reachable information state.

    """
    if isinstance(game, NormalFormGame):
        x = _mixed_action(game, policy_1, player=0)
        y = _mixed_action(game, policy_2, player=1)
        value = float(x @ game.payoff @ y)
        return value, -value

    if not (
        isinstance(policy_1, TabularPolicy)
        and isinstance(policy_2, TabularPolicy)
    ):
        raise InvalidPolicyError("Kuhn poker needs tabular policies.")

    policies = (policy_1, policy_2)

    def walk(cards: t.Tuple[int, int], history: str) -> float:
        if is_terminal(history):
            return game.utility(cards[0], cards[1], history)
        player = len(history) % 2
        key = game.cards[cards[player]] + history
        total = 0.0
        for action, prob in enumerate(policies[player].probs(key)):
            if prob > 0.0:
                total += prob * walk(cards, history + ACTION_CHARS[action])
        return total

    value = game.deal_probability * sum(
        walk(cards, "") for cards in game.deals
    )
    return value, -value


def mix_policies(
    a: TabularPolicy, b: TabularPolicy, beta: float
) -> TabularPolicy:
    """
    Per information state, returns ``beta * a + (1 - beta) * b``.
    """
    if not 0.0 <= beta <= 1.0:
        raise InvalidArgumentError(f"beta must be in [0, 1], got {beta}.")
    if a.player != b.player or set(a.table) != set(b.table):
        raise InvalidArgumentError(
            "Only policies of the same player and game can be mixed."
        )
    if beta == 1.0:
        return a
    if beta == 0.0:
        return b

    table = {}
    for key, probs_a in a.table.items():
        mixed = [
            beta * p + (1.0 - beta) * q for p, q in zip(probs_a, b.table[key])
        ]
        total = sum(mixed)
        table[key] = tuple(p / total for p in mixed)
    return TabularPolicy(player=a.player, table=table)


###############################################################################
# Aggregation and best responses


def aggregate_policies(
    game: Game,
    policies: t.Sequence[Policy],
    weights: np.ndarray,
    player: int,
) -> Policy:
    """
    Collapses a meta-strategy over policies into a single equivalent policy.

    For normal-form games this is the mixed action vector. For Kuhn poker it
    is the realisation-weighted behaviour policy, which yields the same
    expected payoffs as the mixture against any opponent.
    """
    if len(policies) != len(weights):
        raise InvalidArgumentError(
            "There must be one weight per policy to aggregate."
        )

    if isinstance(game, NormalFormGame):
        output = np.zeros(game.num_actions(player))
        for policy, weight in zip(policies, weights):
            output += weight * _mixed_action(game, policy, player)
        return output / output.sum()

    tabular = t.cast(t.Sequence[TabularPolicy], policies)
    n = game.num_actions(player)
    table = {}
    for key in game.info_states(player):
        card, history = key[0], key[1:]
        numerator = np.zeros(n)
        denominator = 0.0
        fallback = np.zeros(n)
        for policy, weight in zip(tabular, weights):
            reach = weight
            for step in range(player, len(history), 2):
                action = ACTION_CHARS.index(history[step])
                reach *= policy.probs(card + history[:step])[action]
            probs = np.asarray(policy.probs(key))
            numerator += reach * probs
            denominator += reach
            fallback += weight * probs
        probs = numerator / denominator if denominator > 0 else fallback
        table[key] = tuple(probs / probs.sum())
    return TabularPolicy(player=player, table=table)


def best_response(
    game: KuhnPoker, opponent: TabularPolicy, player: int
) -> t.Tuple[TabularPolicy, float]:
    """
    Exact best response of ``player`` against a fixed opponent policy, by a
    recursive walk over public histories carrying the opponent's reach
    weight for each of its possible cards. Ties go to the lowest action.

    :returns:
        The deterministic best-response policy and its expected value.

    """
    if opponent.player == player:
        raise InvalidArgumentError(
            "The opponent policy belongs to the responding player."
        )

    choices: t.Dict[str, int] = {}

    def utility(card: int, other: int, history: str) -> float:
        if player == 0:
            return game.utility(card, other, history)
        return -game.utility(other, card, history)

    def walk(card: int, history: str, reach: t.Dict[int, float]) -> float:
        if is_terminal(history):
            return sum(
                weight * utility(card, other, history)
                for other, weight in reach.items()
            )

        if len(history) % 2 == player:
            values = [
                walk(card, history + char, reach) for char in ACTION_CHARS
            ]
            best = 0
            for action in range(1, len(values)):
                if values[action] > values[best]:
                    best = action
            choices[game.cards[card] + history] = best
            return values[best]

        total = 0.0
        for action, char in enumerate(ACTION_CHARS):
            next_reach = {
                other: weight
                * opponent.probs(game.cards[other] + history)[action]
                for other, weight in reach.items()
            }
            total += walk(card, history + char, next_reach)
        return total

    value = 0.0
    for card in range(len(game.cards)):
        reach = {
            other: game.deal_probability
            for other in range(len(game.cards))
            if other != card
        }
        value += walk(card, "", reach)

    return TabularPolicy.deterministic(game, player, choices), value


###############################################################################
# Descriptors


class NFGDescriptor(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: t.Literal["nfg"] = "nfg"
    rows: int = Field(ge=1)
    cols: int = Field(ge=1)
    seed: int = Field(ge=0, le=MAX_SEED)


class KuhnDescriptor(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: t.Literal["kuhn"] = "kuhn"


GameDescriptor = t.Annotated[
    t.Union[NFGDescriptor, KuhnDescriptor], Field(discriminator="kind")
]


def game_from_descriptor(descriptor: GameDescriptor) -> Game:
    if isinstance(descriptor, NFGDescriptor):
        return generate_nfg(descriptor.rows, descriptor.cols, descriptor.seed)
    return KuhnPoker()
