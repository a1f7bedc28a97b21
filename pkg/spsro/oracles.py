"""
Best-response oracles. Each expands one player's policy space against the
opponent's current meta-strategy.

Normal-form games always use the exact oracle. Kuhn poker uses tabular
Q-learning by default, parameterised by the initialisation mix ``beta`` and
the episode budget ``k``. An exact tree-walk oracle is available too.
"""
from __future__ import annotations

import logging
import typing as t
from dataclasses import dataclass

import numpy as np

from spsro.conf import OracleConfig
from spsro.exceptions import InvalidArgumentError, ModeMismatchError
from spsro.games import (
    ACTION_CHARS,
    Game,
    KuhnPoker,
    NormalFormGame,
    Policy,
    PureAction,
    TabularPolicy,
    aggregate_policies,
    best_response,
    is_terminal,
    mix_policies,
)

logger = logging.getLogger(__name__)

# Q-values start as a faint copy of the initial policy, so the greedy policy
# before any update is the initial policy's most likely action.
Q_INIT_SCALE = 1e-3


@dataclass(frozen=True)
class OracleParams:
    """
    :param beta:
        How much of the previous best response goes into the initial policy.
        The rest is a freshly sampled random policy.
    :param k:
        Number of Q-learning episodes.
    :param k_bar:
        Upper bound on ``k``.

    """

    beta: float
    k: int
    k_bar: int = 5000

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise InvalidArgumentError(
                f"beta must be in [0, 1], not {self.beta}."
            )
        if self.k_bar < 1:
            raise InvalidArgumentError("k_bar must be at least 1.")
        if not 1 <= self.k <= self.k_bar:
            raise InvalidArgumentError(
                f"k must be in [1, {self.k_bar}], not {self.k}."
            )


@dataclass
class QTable:
    """
    Per information state, the value estimate of each legal action.
    """

    values: t.Dict[str, np.ndarray]

    @classmethod
    def from_policy(cls, policy: TabularPolicy) -> "QTable":
        return cls(
            values={
                key: Q_INIT_SCALE * np.asarray(probs, dtype=np.float64)
                for key, probs in policy.table.items()
            }
        )

    def greedy_action(self, key: str) -> int:
        # np.argmax picks the lowest index on ties.
        return int(np.argmax(self.values[key]))

    def greedy_policy(self, game: KuhnPoker, player: int) -> TabularPolicy:
        return TabularPolicy.deterministic(
            game,
            player,
            {key: self.greedy_action(key) for key in self.values},
        )


def _check_opponent(
    opponent_meta: t.Sequence[float], opponent_space: t.Sequence[Policy]
) -> np.ndarray:
    if len(opponent_space) == 0:
        raise InvalidArgumentError("The opponent's policy space is empty.")
    weights = np.asarray(opponent_meta, dtype=np.float64)
    if weights.shape != (len(opponent_space),):
        raise InvalidArgumentError(
            "The opponent meta-strategy doesn't match its policy space."
        )
    return weights


###############################################################################
# Exact oracles


def exact_br_nfg(
    game: NormalFormGame,
    opponent_meta: t.Sequence[float],
    opponent_space: t.Sequence[Policy],
    player: int,
) -> t.Tuple[PureAction, float]:
    """
    The pure action with the highest expected payoff against the opponent's
    mixture, ties going to the lowest index.

    :returns:
        The action and its expected payoff.

    """
    weights = _check_opponent(opponent_meta, opponent_space)
    mixture = t.cast(
        np.ndarray,
        aggregate_policies(game, opponent_space, weights, 1 - player),
    )
    if player == 0:
        values = game.payoff @ mixture
    else:
        values = -(mixture @ game.payoff)
    index = int(np.argmax(values))
    return PureAction(index=index), float(values[index])


def exact_br_efg(
    game: KuhnPoker,
    opponent_meta: t.Sequence[float],
    opponent_space: t.Sequence[Policy],
    player: int,
) -> t.Tuple[TabularPolicy, float]:
    weights = _check_opponent(opponent_meta, opponent_space)
    opponent = t.cast(
        TabularPolicy,
        aggregate_policies(game, opponent_space, weights, 1 - player),
    )
    return best_response(game, opponent, player)


###############################################################################
# Q-learning oracle


def _epsilon_schedule(k: int, config: OracleConfig) -> np.ndarray:
    """
    Linear from 1.0 down to ``eps_final`` over the first
    ``eps_anneal_fraction`` of the episodes, then flat.
    """
    window = max(config.eps_anneal_fraction * k, 1.0)
    progress = np.minimum(np.arange(k) / window, 1.0)
    return 1.0 - (1.0 - config.eps_final) * progress


def _sample(probs: t.Sequence[float], draw: float) -> int:
    index = int(np.searchsorted(np.cumsum(probs), draw, side="right"))
    return min(index, len(probs) - 1)


def rl_br_efg(
    game: KuhnPoker,
    opponent_meta: t.Sequence[float],
    opponent_space: t.Sequence[TabularPolicy],
    player: int,
    params: OracleParams,
    prev_br: t.Optional[TabularPolicy],
    seed: t.Union[int, np.random.SeedSequence],
    config: t.Optional[OracleConfig] = None,
) -> TabularPolicy:
    """
    Trains a better response with ``params.k`` episodes of tabular
    Q-learning.

    The initial policy is ``mix_policies(prev_br, random, beta)``, where
    ``random`` is drawn fresh from ``seed`` (and ``prev_br`` is uniform if
    there isn't one). It seeds the Q-table and biases exploration. Each
    episode samples an opponent policy from ``opponent_meta`` and a deal,
    plays one hand, and applies undiscounted TD updates to the learner's
    decisions. The greedy policy of the final Q-table is returned.

    :param seed:
        All randomness comes from here, so the same inputs and seed give the
        same policy.

    """
    weights = _check_opponent(opponent_meta, opponent_space)
    config = config or OracleConfig()

    generator = np.random.default_rng(seed)
    fresh = TabularPolicy.random(game, player, generator)
    base = prev_br or TabularPolicy.uniform(game, player)
    initial = mix_policies(base, fresh, params.beta)

    q_table = QTable.from_policy(initial)
    # Exploration draws half from the initial policy and half uniformly,
    # so every action keeps some chance of being tried.
    explore = {
        key: 0.5 * np.asarray(probs) + 0.5 / len(probs)
        for key, probs in initial.table.items()
    }

    k = params.k
    epsilons = _epsilon_schedule(k, config)
    opponents = generator.choice(len(opponent_space), size=k, p=weights)
    all_deals = game.deals
    deals = generator.integers(0, len(all_deals), size=k)
    # Two draws per decision, at most three decisions per hand.
    draws = generator.random((k, 3, 2))
    lr = config.lr

    for episode in range(k):
        opponent = opponent_space[opponents[episode]]
        cards = all_deals[deals[episode]]
        history = ""
        visited: t.List[t.Tuple[str, int]] = []
        decision = 0

        while not is_terminal(history):
            actor = len(history) % 2
            key = game.cards[cards[actor]] + history
            explore_draw, sample_draw = draws[episode, decision]
            if actor == player:
                if explore_draw < epsilons[episode]:
                    action = _sample(explore[key], sample_draw)
                else:
                    action = q_table.greedy_action(key)
                visited.append((key, action))
            else:
                action = _sample(opponent.probs(key), sample_draw)
            history += ACTION_CHARS[action]
            decision += 1

        reward = game.utility(cards[0], cards[1], history)
        if player == 1:
            reward = -reward

        for index, (key, action) in enumerate(visited):
            if index + 1 < len(visited):
                target = float(np.max(q_table.values[visited[index + 1][0]]))
            else:
                target = reward
            values = q_table.values[key]
            values[action] += lr * (target - values[action])

    return q_table.greedy_policy(game, player)


def br_effort(params: t.Optional[OracleParams]) -> float:
    """
    The training effort of one best response, counted in updates. An exact
    oracle (``params`` is ``None``) counts as a single update.
    """
    if params is None:
        return 1.0
    return float(params.k)


###############################################################################


def resolve_oracle_kind(game: Game, config: OracleConfig) -> str:
    """
    :raises ModeMismatchError:
        If Q-learning is requested for a normal-form game.

    """
    if isinstance(game, NormalFormGame):
        if config.kind == "qlearn":
            raise ModeMismatchError(
                "The Q-learning oracle only applies to extensive-form games."
            )
        return "exact"
    return "qlearn" if config.kind == "auto" else config.kind


def compute_best_response(
    game: Game,
    opponent_meta: t.Sequence[float],
    opponent_space: t.Sequence[Policy],
    player: int,
    params: OracleParams,
    prev_br: t.Optional[Policy],
    seed: np.random.SeedSequence,
    config: OracleConfig,
) -> t.Tuple[Policy, float]:
    """
    Dispatches to the right oracle for the game and config.

    :returns:
        The new policy and its training effort.

    """
    kind = resolve_oracle_kind(game, config)
    if isinstance(game, NormalFormGame):
        action, _ = exact_br_nfg(game, opponent_meta, opponent_space, player)
        return action, br_effort(None)

    if kind == "exact":
        policy, _ = exact_br_efg(game, opponent_meta, opponent_space, player)
        return policy, br_effort(None)

    policy = rl_br_efg(
        game,
        opponent_meta,
        t.cast(t.Sequence[TabularPolicy], opponent_space),
        player,
        params,
        prev_br=t.cast(t.Optional[TabularPolicy], prev_br),
        seed=seed,
        config=config,
    )
    return policy, br_effort(params)
