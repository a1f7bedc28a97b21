"""
Meta-solvers map the payoff tensor to a joint meta-strategy. SPSRO runs
several of them each epoch and mixes their outputs with weights ``alpha``.
"""
from __future__ import annotations

import logging
import math
import typing as t
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve
from scipy.special import expit

from spsro.conf import SpsroConfig
from spsro.exceptions import (
    InvalidArgumentError,
    ResourceLimitError,
    UnsupportedSolverError,
)
from spsro.meta_game import PayoffTensor

logger = logging.getLogger(__name__)

SIMPLEX_TOLERANCE = 1e-9
# Weights this close to normalised are stored as given, so they survive a
# write and read unchanged.
NORMALISED_TOLERANCE = 1e-12
STATIONARY_TOLERANCE = 1e-10
MAX_POWER_ITERATIONS = 100_000

# Recognised identifiers from the wider PSRO literature which aren't
# implemented here.
UNIMPLEMENTED_SOLVERS = ("nash", "rectified_nash", "cce")


@dataclass(frozen=True, eq=False)
class MetaStrategy:
    """
    One probability distribution per player over that player's policies.
    """

    distributions: t.Tuple[np.ndarray, np.ndarray]

    def __post_init__(self):
        distributions = []
        for player, distribution in enumerate(self.distributions):
            distribution = np.array(distribution, dtype=np.float64)
            if (
                distribution.ndim != 1
                or distribution.size == 0
                or np.any(distribution < 0.0)
                or abs(distribution.sum() - 1.0) > SIMPLEX_TOLERANCE
            ):
                raise InvalidArgumentError(
                    f"Player {player + 1}'s meta-strategy isn't a "
                    f"distribution: {distribution}."
                )
            distribution.flags.writeable = False
            distributions.append(distribution)
        object.__setattr__(self, "distributions", tuple(distributions))

    def __getitem__(self, player: int) -> np.ndarray:
        return self.distributions[player]

    @property
    def shape(self) -> t.Tuple[int, int]:
        return self.distributions[0].size, self.distributions[1].size

    def without(self, player: int, index: int) -> "MetaStrategy":
        """
        Drops one of ``player``'s entries and renormalises the rest. If the
        remaining entries have no mass, they become uniform.
        """
        distributions = list(self.distributions)
        remaining = np.delete(distributions[player], index)
        total = remaining.sum()
        distributions[player] = (
            remaining / total
            if total > 0
            else np.full(remaining.size, 1.0 / remaining.size)
        )
        return MetaStrategy(distributions=(distributions[0], distributions[1]))


@dataclass(frozen=True)
class SolverWeights:
    """
    :param solvers:
        Identifiers of the meta-solvers, in token order.
    :param alpha:
        One non-negative weight per solver. Normalised on construction.

    """

    solvers: t.Tuple[str, ...]
    alpha: t.Tuple[float, ...]

    def __post_init__(self):
        validate_solver_set(self.solvers)
        alpha = np.asarray(self.alpha, dtype=np.float64)
        if alpha.shape != (len(self.solvers),):
            raise InvalidArgumentError(
                f"Expected {len(self.solvers)} weights, got {alpha.size}."
            )
        if not np.all(np.isfinite(alpha)) or np.any(alpha < 0.0):
            raise InvalidArgumentError("Solver weights must be non-negative.")
        total = alpha.sum()
        if total <= 0.0:
            raise InvalidArgumentError("At least one weight must be positive.")
        if abs(total - 1.0) > NORMALISED_TOLERANCE:
            alpha = alpha / total
        object.__setattr__(self, "solvers", tuple(self.solvers))
        object.__setattr__(self, "alpha", tuple(float(i) for i in alpha))

    @classmethod
    def one_hot(
        cls, solvers: t.Sequence[str], solver: str
    ) -> "SolverWeights":
        return cls(
            solvers=tuple(solvers),
            alpha=tuple(1.0 if i == solver else 0.0 for i in solvers),
        )

    @classmethod
    def uniform(cls, solvers: t.Sequence[str]) -> "SolverWeights":
        return cls(solvers=tuple(solvers), alpha=(1.0,) * len(solvers))

    @property
    def m(self) -> int:
        return len(self.solvers)


###############################################################################
# Solvers


def _uniform_distribution(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def _one_hot(n: int, index: int) -> np.ndarray:
    output = np.zeros(n)
    output[index] = 1.0
    return output


def _check_tensor(tensor: PayoffTensor):
    rows, cols = tensor.shape
    if rows == 0 or cols == 0:
        raise InvalidArgumentError("The payoff tensor is empty.")
    if not np.all(np.isfinite(tensor.values)):
        raise InvalidArgumentError("The payoff tensor has non-finite values.")


def solve_uniform(tensor: PayoffTensor) -> MetaStrategy:
    _check_tensor(tensor)
    rows, cols = tensor.shape
    return MetaStrategy(
        distributions=(
            _uniform_distribution(rows),
            _uniform_distribution(cols),
        )
    )


def solve_last_one(tensor: PayoffTensor) -> MetaStrategy:
    """
    All mass on each player's most recently added policy.
    """
    _check_tensor(tensor)
    rows, cols = tensor.shape
    return MetaStrategy(
        distributions=(_one_hot(rows, rows - 1), _one_hot(cols, cols - 1))
    )


def solve_penultimate(tensor: PayoffTensor) -> MetaStrategy:
    """
    All mass on each player's second newest policy, or the only policy if
    there's just one.
    """
    _check_tensor(tensor)
    rows, cols = tensor.shape
    return MetaStrategy(
        distributions=(
            _one_hot(rows, max(rows - 2, 0)),
            _one_hot(cols, max(cols - 2, 0)),
        )
    )


def _project_with_floor(x: np.ndarray, floor: float) -> np.ndarray:
    """
    Maps ``x`` onto ``{z : z >= floor, sum(z) = 1}``. Coordinates below the
    floor are raised to it and the surplus is taken proportionally from the
    mass above the floor.
    """
    x = np.maximum(x, floor)
    slack = x - floor
    total = slack.sum()
    if total <= 0.0:
        return np.full(x.size, 1.0 / x.size)
    return floor + slack * ((1.0 - floor * x.size) / total)


def solve_prd(
    tensor: PayoffTensor,
    steps: int = 100_000,
    step_size: float = 1e-2,
    gamma: float = 1e-6,
    average_fraction: float = 0.5,
) -> MetaStrategy:
    """
    Projected replicator dynamics. Both populations start uniform and take
    ``steps`` simultaneous Euler steps of the replicator equation, each
    followed by a projection that keeps every probability at or above
    ``gamma / n``.

    In zero-sum games the iterates orbit the equilibrium rather than
    settling on it, so the average of the last
    ``ceil(average_fraction * steps)`` iterates is returned. With no steps
    that is the uniform start.

    :param average_fraction:
        Share of the trailing iterates to average, in ``(0, 1]``. Small
        values approach the final iterate.

    """
    _check_tensor(tensor)
    payoff = tensor.values
    rows, cols = payoff.shape
    if not 0.0 <= gamma <= 1.0:
        raise InvalidArgumentError("gamma must be in [0, 1].")
    if not 0.0 < average_fraction <= 1.0:
        raise InvalidArgumentError("average_fraction must be in (0, 1].")

    x = _uniform_distribution(rows)
    y = _uniform_distribution(cols)
    if steps == 0:
        return MetaStrategy(distributions=(x, y))

    floor_x, floor_y = gamma / rows, gamma / cols
    window = max(1, math.ceil(average_fraction * steps))
    sum_x, sum_y = np.zeros(rows), np.zeros(cols)

    for step in range(steps):
        values_x = payoff @ y
        values_y = -(x @ payoff)
        new_x = x + step_size * x * (values_x - x @ values_x)
        new_y = y + step_size * y * (values_y - y @ values_y)
        if rows > 1:
            x = _project_with_floor(new_x, floor_x)
        if cols > 1:
            y = _project_with_floor(new_y, floor_y)
        if step >= steps - window:
            sum_x += x
            sum_y += y

    return MetaStrategy(distributions=(sum_x / window, sum_y / window))


def _alpharank_transitions(
    payoff: np.ndarray, alpha_scale: float, mutation: float
) -> sp.csr_matrix:
    """
    Markov chain over pure profiles ``(j, k)`` (state ``j * cols + k``).
    From each profile, every single-population deviation is proposed with
    probability ``eta = 1 / ((rows - 1) + (cols - 1))`` and fixes with the
    logistic probability ``expit(alpha_scale * (f_mutant - f_resident))``.
    With probability ``mutation`` the fixation is neutral (1/2), which
    keeps the chain irreducible whatever the payoffs.
    """
    rows, cols = payoff.shape
    eta = 1.0 / ((rows - 1) + (cols - 1))
    row_ids: t.List[np.ndarray] = []
    col_ids: t.List[np.ndarray] = []
    probs: t.List[np.ndarray] = []

    def fixation(gain: np.ndarray) -> np.ndarray:
        rho = expit(alpha_scale * gain)
        return eta * ((1.0 - mutation) * rho + mutation * 0.5)

    if rows > 1:
        # Player 1 deviates from j to r while player 2 stays on k.
        j, r, k = np.meshgrid(
            np.arange(rows), np.arange(rows), np.arange(cols), indexing="ij"
        )
        mask = j != r
        j, r, k = j[mask], r[mask], k[mask]
        row_ids.append(j * cols + k)
        col_ids.append(r * cols + k)
        probs.append(fixation(payoff[r, k] - payoff[j, k]))

    if cols > 1:
        # Player 2 deviates from k to r, with payoffs negated.
        j, k, r = np.meshgrid(
            np.arange(rows), np.arange(cols), np.arange(cols), indexing="ij"
        )
        mask = k != r
        j, k, r = j[mask], k[mask], r[mask]
        row_ids.append(j * cols + k)
        col_ids.append(j * cols + r)
        probs.append(fixation(payoff[j, k] - payoff[j, r]))

    n = rows * cols
    off_diagonal = sp.csr_matrix(
        (
            np.concatenate(probs),
            (np.concatenate(row_ids), np.concatenate(col_ids)),
        ),
        shape=(n, n),
    )
    stay = 1.0 - np.asarray(off_diagonal.sum(axis=1)).ravel()
    return (off_diagonal + sp.diags(stay)).tocsr()


def stationary_distribution(
    transitions: sp.csr_matrix,
    tolerance: float = STATIONARY_TOLERANCE,
    max_iterations: int = MAX_POWER_ITERATIONS,
) -> np.ndarray:
    """
    Solves ``x P = x`` with a sparse direct solve, then runs power
    iteration until ``max|x P - x| <= tolerance``.
    """
    n = transitions.shape[0]
    if n == 1:
        return np.ones(1)

    system = (transitions.T - sp.identity(n, format="csr")).tolil()
    system[n - 1, :] = np.ones(n)
    rhs = np.zeros(n)
    rhs[n - 1] = 1.0
    x = np.asarray(spsolve(system.tocsc(), rhs)).ravel()
    if not np.all(np.isfinite(x)):
        x = np.full(n, 1.0 / n)
    x = np.maximum(x, 0.0)
    x /= x.sum()

    transitions_t = transitions.T.tocsr()
    for _ in range(max_iterations):
        next_x = transitions_t @ x
        residual = np.max(np.abs(next_x - x))
        x = next_x / next_x.sum()
        if residual <= tolerance:
            break
    else:
        logger.warning(
            "Power iteration stopped at %d iterations above tolerance.",
            max_iterations,
        )
    return x


def solve_alpharank(
    tensor: PayoffTensor,
    alpha_scale: float = 50.0,
    mutation: float = 1e-6,
    max_profiles: int = 10_000,
) -> MetaStrategy:
    """
    Two-population alpha-Rank. The stationary distribution over pure
    profiles is marginalised onto each player's policies.

    :raises ResourceLimitError:
        If there are more than ``max_profiles`` pure profiles.

    """
    _check_tensor(tensor)
    rows, cols = tensor.shape
    if rows * cols > max_profiles:
        raise ResourceLimitError(
            f"alpha-Rank over {rows}x{cols} profiles exceeds the limit of "
            f"{max_profiles}."
        )
    if not mutation > 0.0:
        raise InvalidArgumentError("The mutation rate must be positive.")
    if rows * cols == 1:
        return MetaStrategy(distributions=(np.ones(1), np.ones(1)))

    transitions = _alpharank_transitions(tensor.values, alpha_scale, mutation)
    profile_mass = stationary_distribution(transitions).reshape(rows, cols)
    marginal_x = profile_mass.sum(axis=1)
    marginal_y = profile_mass.sum(axis=0)
    return MetaStrategy(
        distributions=(
            marginal_x / marginal_x.sum(),
            marginal_y / marginal_y.sum(),
        )
    )


###############################################################################
# Registry and mixing

SolverFunction = t.Callable[[PayoffTensor, SpsroConfig], MetaStrategy]

SOLVERS: t.Dict[str, SolverFunction] = {
    "uniform": lambda tensor, config: solve_uniform(tensor),
    "prd": lambda tensor, config: solve_prd(
        tensor,
        steps=config.prd.steps,
        step_size=config.prd.step_size,
        gamma=config.prd.gamma,
        average_fraction=config.prd.average_fraction,
    ),
    "alpharank": lambda tensor, config: solve_alpharank(
        tensor,
        alpha_scale=config.alpharank.alpha_scale,
        mutation=config.alpharank.mutation,
        max_profiles=config.alpharank.max_profiles,
    ),
    "last_one": lambda tensor, config: solve_last_one(tensor),
    "penultimate": lambda tensor, config: solve_penultimate(tensor),
}


def validate_solver_set(solvers: t.Sequence[str]):
    """
    :raises UnsupportedSolverError:
        For an empty set, an unknown identifier, or one of the recognised
        but unimplemented solvers.

    """
    if len(solvers) == 0:
        raise UnsupportedSolverError("At least one meta-solver is needed.")
    for solver in solvers:
        if solver in UNIMPLEMENTED_SOLVERS:
            raise UnsupportedSolverError(
                f"The {solver!r} meta-solver is recognised but not "
                f"implemented. Use one of {sorted(SOLVERS)}."
            )
        if solver not in SOLVERS:
            raise UnsupportedSolverError(
                f"Unknown meta-solver {solver!r}. Use one of "
                f"{sorted(SOLVERS)}."
            )


def solve(
    solver: str, tensor: PayoffTensor, config: t.Optional[SpsroConfig] = None
) -> MetaStrategy:
    validate_solver_set([solver])
    return SOLVERS[solver](tensor, config or SpsroConfig())


def mix_meta_strategies(
    strategies: t.Sequence[MetaStrategy], weights: SolverWeights
) -> MetaStrategy:
    """
    Per player, the convex combination ``sum_b alpha_b * sigma_b``.
    """
    if len(strategies) != weights.m:
        raise InvalidArgumentError(
            f"Got {len(strategies)} meta-strategies for {weights.m} weights."
        )
    shapes = {strategy.shape for strategy in strategies}
    if len(shapes) != 1:
        raise InvalidArgumentError(
            f"Meta-strategies disagree on dimensions: {sorted(shapes)}."
        )

    mixed = []
    for player in (0, 1):
        total = np.zeros(strategies[0].shape[player])
        for strategy, alpha in zip(strategies, weights.alpha):
            total = total + alpha * strategy[player]
        mixed.append(total)
    return MetaStrategy(distributions=(mixed[0], mixed[1]))


def compute_meta_strategy(
    tensor: PayoffTensor, weights: SolverWeights, config: SpsroConfig
) -> t.Tuple[MetaStrategy, t.Dict[str, MetaStrategy]]:
    """
    Runs every solver with a non-zero weight and mixes the outputs. A
    solver with zero weight can't change the mixture, so it's skipped.

    :returns:
        The mixed meta-strategy, and each solver's own output.

    """
    outputs: t.Dict[str, MetaStrategy] = {}
    for solver, alpha in zip(weights.solvers, weights.alpha):
        if alpha > 0.0 and solver not in outputs:
            outputs[solver] = solve(solver, tensor, config)

    active = [
        (solver, alpha)
        for solver, alpha in zip(weights.solvers, weights.alpha)
        if alpha > 0.0
    ]
    active_weights = SolverWeights(
        solvers=tuple(i[0] for i in active), alpha=tuple(i[1] for i in active)
    )
    mixed = mix_meta_strategies(
        [outputs[solver] for solver, _ in active], active_weights
    )
    return mixed, outputs
