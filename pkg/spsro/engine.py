"""
The SPSRO epoch loop, and the fixed selectors behind the classic PSRO
variants.

Each epoch:

1. fill in the payoff tensor for new policies
2. run the meta-solvers with non-zero weight and mix them with ``alpha``
3. prune down to the support cap, if pruning applies
4. measure NashConv of the mixed meta-strategy
5. add a best response per player, trained against the frozen spaces
6. compute ``y`` and ask the selector for the next epoch's hyperparameters
"""
from __future__ import annotations

import abc
import logging
import typing as t
from dataclasses import dataclass, field

import numpy as np

from spsro.conf import SpsroConfig
from spsro.exceptions import (
    DegenerateReferenceError,
    InvalidArgumentError,
    SelectorError,
)
from spsro.evaluation import (
    EpochMetrics,
    ReferenceValues,
    effort_ratio,
    metric_y,
    nashconv,
)
from spsro.games import (
    Game,
    GameDescriptor,
    NormalFormGame,
    Policy,
    PureAction,
    TabularPolicy,
)
from spsro.meta_game import (
    PayoffTensor,
    PolicySpace,
    prune_policy,
    update_payoff_tensor,
)
from spsro.meta_solvers import (
    MetaStrategy,
    SolverWeights,
    compute_meta_strategy,
)
from spsro.modes import Mode
from spsro.oracles import OracleParams, compute_best_response

logger = logging.getLogger(__name__)

DEFAULT_SOLVERS = ("uniform", "prd", "alpharank")


@dataclass(frozen=True)
class HyperparamSelection:
    weights: SolverWeights
    oracle: OracleParams


@dataclass(frozen=True, eq=False)
class EpochDiagnostics:
    """
    :param meta_game_shape:
        The payoff tensor's shape when the meta-solvers ran.
    :param pruned:
        Per player, the indices removed by pruning, in removal order.
    :param sigma:
        The meta-strategy after pruning, which NashConv was measured on.

    """

    meta_game_shape: t.Tuple[int, int]
    pruned: t.Tuple[t.Tuple[int, ...], t.Tuple[int, ...]]
    sigma: MetaStrategy


@dataclass
class RunTrace:
    """
    Everything a run produced, epoch by epoch. Diagnostics and the error
    message aren't part of equality or of the dataset format.
    """

    mode: Mode
    game: GameDescriptor
    seed: int
    solvers: t.Tuple[str, ...]
    epochs: t.List[t.Tuple[HyperparamSelection, EpochMetrics]] = field(
        default_factory=list
    )
    valid: bool = True
    diagnostics: t.List[EpochDiagnostics] = field(
        default_factory=list, compare=False, repr=False
    )
    error: t.Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        for index, (_, metrics) in enumerate(self.epochs):
            if metrics.epoch != index + 1:
                raise InvalidArgumentError(
                    f"Epoch {metrics.epoch} found at position {index + 1}."
                )

    def __len__(self) -> int:
        return len(self.epochs)

    @property
    def selections(self) -> t.List[HyperparamSelection]:
        return [i[0] for i in self.epochs]

    @property
    def metrics(self) -> t.List[EpochMetrics]:
        return [i[1] for i in self.epochs]

    def append(
        self,
        selection: HyperparamSelection,
        metrics: EpochMetrics,
        diagnostics: t.Optional[EpochDiagnostics] = None,
    ):
        if metrics.epoch != len(self.epochs) + 1:
            raise InvalidArgumentError(
                f"Expected epoch {len(self.epochs) + 1}, got {metrics.epoch}."
            )
        self.epochs.append((selection, metrics))
        if diagnostics is not None:
            self.diagnostics.append(diagnostics)


###############################################################################
# Selectors


class SelectorPolicy(abc.ABC):
    """
    Chooses the hyperparameters for the next epoch, given the run so far.
    Called with an empty trace for epoch 1.
    """

    @abc.abstractmethod
    def next(self, trace: RunTrace) -> HyperparamSelection:
        ...


class ConstantSelector(SelectorPolicy):
    def __init__(self, selection: HyperparamSelection):
        self.selection = selection

    def next(self, trace: RunTrace) -> HyperparamSelection:
        return self.selection


class SwitchSelector(SelectorPolicy):
    """
    Returns ``first`` before ``switch_epoch`` and ``second`` from then on.
    """

    def __init__(
        self,
        first: HyperparamSelection,
        second: HyperparamSelection,
        switch_epoch: int,
    ):
        if switch_epoch < 1:
            raise InvalidArgumentError("switch_epoch must be at least 1.")
        self.first = first
        self.second = second
        self.switch_epoch = switch_epoch

    def next(self, trace: RunTrace) -> HyperparamSelection:
        epoch = len(trace) + 1
        return self.first if epoch < self.switch_epoch else self.second


# name -> (meta-solver, beta, K is K_bar)
PRESETS: t.Dict[str, t.Tuple[str, float, bool]] = {
    "gda": ("last_one", 1.0, False),
    "inrl": ("last_one", 1.0, True),
    "psro_p": ("penultimate", 0.0, True),
    "psro_u": ("uniform", 0.0, True),
    "psro_prd": ("prd", 0.0, True),
    "psro_alpharank": ("alpharank", 0.0, True),
}


def _solver_set(
    solvers: t.Sequence[str], required: t.Sequence[str]
) -> t.Tuple[str, ...]:
    """
    ``solvers`` if it holds everything in ``required``, otherwise just the
    required solvers.
    """
    if all(i in solvers for i in required):
        return tuple(solvers)
    return tuple(dict.fromkeys(required))


def preset_selection(
    name: str,
    solvers: t.Sequence[str] = DEFAULT_SOLVERS,
    k_bar: int = 5000,
) -> HyperparamSelection:
    try:
        solver, beta, full_budget = PRESETS[name]
    except KeyError:
        raise InvalidArgumentError(
            f"Unknown preset {name!r}. Use one of {sorted(PRESETS)}."
        )
    solver_set = _solver_set(solvers, [solver])
    return HyperparamSelection(
        weights=SolverWeights.one_hot(solver_set, solver),
        oracle=OracleParams(
            beta=beta, k=k_bar if full_budget else 1, k_bar=k_bar
        ),
    )


def preset_variant(
    name: str,
    solvers: t.Sequence[str] = DEFAULT_SOLVERS,
    k_bar: int = 5000,
) -> SelectorPolicy:
    """
    A constant selector for one of the classic PSRO variants:

    ================== =============== ====== ========
    name               meta-solver     beta   K
    ================== =============== ====== ========
    ``gda``            Last-One        1      1
    ``inrl``           Last-One        1      K_bar
    ``psro_p``         Penultimate     0      K_bar
    ``psro_u``         Uniform         0      K_bar
    ``psro_prd``       PRD             0      K_bar
    ``psro_alpharank`` alpha-Rank      0      K_bar
    ================== =============== ====== ========

    If ``solvers`` contains the variant's meta-solver, the weights are one-hot
    over ``solvers``. Otherwise the variant runs over its own solver alone.

    :raises InvalidArgumentError:
        For an unknown name.

    """
    return ConstantSelector(preset_selection(name, solvers, k_bar))


def default_selection(
    solvers: t.Sequence[str] = DEFAULT_SOLVERS, k_bar: int = 5000
) -> HyperparamSelection:
    """
    Equal weights on every solver, fresh initialisation and the full episode
    budget.
    """
    return HyperparamSelection(
        weights=SolverWeights.uniform(solvers),
        oracle=OracleParams(beta=0.0, k=k_bar, k_bar=k_bar),
    )


def solver_switch_schedule(
    first: str,
    second: str,
    switch_epoch: int,
    solvers: t.Sequence[str] = DEFAULT_SOLVERS,
    k_bar: int = 5000,
) -> SelectorPolicy:
    """
    One-hot on ``first`` until ``switch_epoch``, then on ``second``.
    """
    solver_set = _solver_set(solvers, [first, second])
    oracle = OracleParams(beta=0.0, k=k_bar, k_bar=k_bar)
    return SwitchSelector(
        first=HyperparamSelection(
            weights=SolverWeights.one_hot(solver_set, first), oracle=oracle
        ),
        second=HyperparamSelection(
            weights=SolverWeights.one_hot(solver_set, second), oracle=oracle
        ),
        switch_epoch=switch_epoch,
    )


###############################################################################
# The loop


def mode_of(game: Game) -> Mode:
    return Mode.nfg if isinstance(game, NormalFormGame) else Mode.efg


def seed_stream(seed: int, *key: int) -> np.random.SeedSequence:
    """
    An independent random stream for one purpose within a run, e.g.
    ``(epoch, player)`` for a best response.
    """
    return np.random.SeedSequence(seed, spawn_key=key)


def initial_policy(game: Game, player: int, seed: int) -> Policy:
    if isinstance(game, NormalFormGame):
        generator = np.random.default_rng(seed_stream(seed, 0, player))
        return PureAction(
            index=int(generator.integers(game.num_actions(player)))
        )
    return TabularPolicy.uniform(game, player)


def _pruning_applies(
    selection: HyperparamSelection, config: SpsroConfig
) -> bool:
    if not config.pruning.enabled:
        return False
    if config.pruning.all_solvers:
        return True
    weights = selection.weights
    return any(
        solver == "alpharank" and alpha > 0.0
        for solver, alpha in zip(weights.solvers, weights.alpha)
    )


def _ask(
    selector: SelectorPolicy, trace: RunTrace
) -> t.Optional[HyperparamSelection]:
    """
    Asks the selector for a selection. On failure the trace is flagged
    invalid and ``None`` is returned.
    """
    try:
        selection = selector.next(trace)
        if not isinstance(selection, HyperparamSelection):
            raise SelectorError(
                f"The selector returned {type(selection).__name__}."
            )
    except Exception as exception:
        logger.warning(
            "Selector failed after %d epochs: %s", len(trace), exception
        )
        trace.valid = False
        trace.error = str(exception)
        return None
    return selection


def run_spsro(
    game: Game,
    selector: SelectorPolicy,
    epochs: int = 50,
    config: t.Optional[SpsroConfig] = None,
    seed: int = 0,
) -> RunTrace:
    """
    Runs SPSRO for ``epochs`` epochs.

    If the selector raises, the run stops there and the partial trace comes
    back with ``valid`` set to ``False``.
    """
    if epochs < 1:
        raise InvalidArgumentError("A run needs at least one epoch.")
    config = config or SpsroConfig()

    space = PolicySpace.create(
        initial_policy(game, 0, seed), initial_policy(game, 1, seed)
    )
    tensor = PayoffTensor.empty()
    trace = RunTrace(
        mode=mode_of(game),
        game=game.descriptor(),
        seed=seed,
        solvers=tuple(config.meta_solvers),
    )
    prev_brs: t.List[t.Optional[Policy]] = [None, None]
    refs: t.Optional[ReferenceValues] = None

    selection = _ask(selector, trace)
    if selection is None:
        return trace
    trace.solvers = selection.weights.solvers

    for epoch in range(1, epochs + 1):
        tensor = update_payoff_tensor(space, tensor, game)
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug(
                "Payoff tensor at epoch %d:\n%s", epoch, tensor.to_csv()
            )
        meta_game_shape = tensor.shape
        sigma, _ = compute_meta_strategy(tensor, selection.weights, config)

        pruned: t.Tuple[t.List[int], t.List[int]] = ([], [])
        if _pruning_applies(selection, config):
            for player in (0, 1):
                while space.size(player) > config.pruning.cap:
                    index = int(np.argmin(sigma[player]))
                    space, tensor = prune_policy(
                        space,
                        tensor,
                        sigma.distributions,
                        player,
                        config.pruning.cap,
                    )
                    sigma = sigma.without(player, index)
                    pruned[player].append(index)

        current_nashconv = nashconv(game, space, sigma.distributions)

        new_policies: t.List[Policy] = []
        efforts: t.List[float] = []
        for player in (0, 1):
            opponent = 1 - player
            policy, effort = compute_best_response(
                game,
                sigma[opponent],
                space.policies[opponent],
                player,
                selection.oracle,
                prev_brs[player],
                seed=seed_stream(seed, epoch, player),
                config=config.oracle,
            )
            new_policies.append(policy)
            efforts.append(effort)

        for player in (0, 1):
            space = space.append(player, new_policies[player])
            prev_brs[player] = new_policies[player]

        effort = max(efforts)
        if refs is None:
            refs = ReferenceValues(nashconv=current_nashconv, effort=effort)
        degenerate = False
        try:
            y = metric_y(current_nashconv, effort, refs)
        except DegenerateReferenceError:
            if epoch == 1:
                logger.warning(
                    "The game is solved at epoch 1, so y only measures "
                    "effort for seed %d.",
                    seed,
                )
            y = effort_ratio(effort, refs)
            degenerate = True

        trace.append(
            selection,
            EpochMetrics(
                epoch=epoch,
                nashconv=current_nashconv,
                br_effort=effort,
                y=y,
                degenerate=degenerate,
            ),
            EpochDiagnostics(
                meta_game_shape=meta_game_shape,
                pruned=(tuple(pruned[0]), tuple(pruned[1])),
                sigma=sigma,
            ),
        )
        logger.debug(
            "Epoch %d: NashConv %.6f, effort %s, y %.6f",
            epoch,
            current_nashconv,
            effort,
            y,
        )

        if epoch < epochs:
            next_selection = _ask(selector, trace)
            if next_selection is None:
                return trace
            if next_selection.weights.solvers != selection.weights.solvers:
                trace.valid = False
                trace.error = "The selector changed the meta-solver set."
                return trace
            selection = next_selection

    return trace
