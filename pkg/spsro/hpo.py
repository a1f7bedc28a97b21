"""
Online hyperparameter suggesters. They generate the offline dataset and
serve as the online HPO baseline.

:func:`suggest_tpe` hands the observations so far to optuna's
tree-structured Parzen estimator and asks it for the next point.
"""
from __future__ import annotations

import math
import typing as t
import warnings
from dataclasses import dataclass, field

import numpy as np
import optuna
from optuna.distributions import (
    BaseDistribution,
    FloatDistribution,
    IntDistribution,
)

from spsro.engine import (
    DEFAULT_SOLVERS,
    HyperparamSelection,
    RunTrace,
    SelectorPolicy,
)
from spsro.exceptions import InvalidArgumentError
from spsro.meta_solvers import SolverWeights
from spsro.modes import Mode
from spsro.oracles import OracleParams

# A study is created per suggestion, and optuna logs each one at INFO.
optuna.logging.set_verbosity(optuna.logging.WARNING)


@dataclass(frozen=True)
class SearchSpace:
    """
    Alpha components and beta range over ``[0, 1]``, K over ``[1, k_bar]``.
    Normal-form runs only search alpha, with ``beta = 0`` and ``K = 1``.
    """

    solvers: t.Tuple[str, ...] = DEFAULT_SOLVERS
    mode: Mode = Mode.efg
    k_bar: int = 5000

    def __post_init__(self):
        if len(self.solvers) == 0:
            raise InvalidArgumentError("The search space needs a solver.")
        if self.k_bar < 1:
            raise InvalidArgumentError("k_bar must be at least 1.")

    def distributions(self) -> t.Dict[str, BaseDistribution]:
        distributions: t.Dict[str, BaseDistribution] = {
            f"alpha_{solver}": FloatDistribution(0.0, 1.0)
            for solver in self.solvers
        }
        if self.mode is Mode.efg:
            distributions["beta"] = FloatDistribution(0.0, 1.0)
            distributions["k"] = IntDistribution(1, self.k_bar)
        return distributions

    def to_params(self, selection: HyperparamSelection) -> t.Dict[str, t.Any]:
        params: t.Dict[str, t.Any] = {
            f"alpha_{solver}": float(alpha)
            for solver, alpha in zip(self.solvers, selection.weights.alpha)
        }
        if self.mode is Mode.efg:
            params["beta"] = float(selection.oracle.beta)
            params["k"] = min(max(int(selection.oracle.k), 1), self.k_bar)
        return params

    def from_params(self, params: t.Dict[str, t.Any]) -> HyperparamSelection:
        values = [params[f"alpha_{solver}"] for solver in self.solvers]
        if self.mode is Mode.efg:
            values += [params["beta"], params["k"]]
        return self.from_vector(np.array(values, dtype=float))

    def from_vector(self, vector: np.ndarray) -> HyperparamSelection:
        m = len(self.solvers)
        alpha = np.clip(vector[:m], 0.0, 1.0)
        if alpha.sum() <= 0.0:
            alpha = np.ones(m)
        if self.mode is Mode.efg:
            beta = float(np.clip(vector[m], 0.0, 1.0))
            k = int(np.clip(round(float(vector[m + 1])), 1, self.k_bar))
        else:
            beta, k = 0.0, 1
        return HyperparamSelection(
            weights=SolverWeights(solvers=self.solvers, alpha=tuple(alpha)),
            oracle=OracleParams(beta=beta, k=k, k_bar=self.k_bar),
        )


@dataclass
class TrialHistory:
    observations: t.List[t.Tuple[HyperparamSelection, float]] = field(
        default_factory=list
    )

    def __len__(self) -> int:
        return len(self.observations)

    def add(self, selection: HyperparamSelection, y: float):
        if not math.isfinite(y):
            raise InvalidArgumentError(f"Observed y must be finite, got {y}.")
        self.observations.append((selection, float(y)))


def suggest_random(
    history: TrialHistory,
    space: SearchSpace,
    generator: np.random.Generator,
) -> HyperparamSelection:
    """
    Alpha components uniform on ``[0, 1]`` then normalised, beta uniform on
    ``[0, 1]`` and K a uniform integer in ``[1, k_bar]``.
    """
    m = len(space.solvers)
    values = list(generator.uniform(0.0, 1.0, size=m))
    if space.mode is Mode.efg:
        values.append(generator.uniform(0.0, 1.0))
        values.append(float(generator.integers(1, space.k_bar + 1)))
    return space.from_vector(np.array(values))


def suggest_tpe(
    history: TrialHistory,
    space: SearchSpace,
    generator: np.random.Generator,
    gamma_quantile: float = 0.25,
    candidates: int = 24,
    startup_trials: int = 10,
) -> HyperparamSelection:
    """
    Falls back to :func:`suggest_random` until ``startup_trials``
    observations exist.

    After that, the observations are replayed into a fresh optuna study and
    a multivariate :class:`optuna.samplers.TPESampler` suggests the next
    point. The ``ceil(gamma_quantile * n)`` observations with the lowest
    ``y`` form the good set, and ``candidates`` draws from it are scored.

    :param gamma_quantile:
        Fraction of the observations treated as good, in ``(0, 1)``.

    """
    if not 0.0 < gamma_quantile < 1.0:
        raise InvalidArgumentError("gamma_quantile must be in (0, 1).")

    n = len(history)
    if n < max(startup_trials, 2):
        return suggest_random(history, space, generator)

    def good_set_size(count: int) -> int:
        return min(max(math.ceil(gamma_quantile * count), 1), count - 1)

    distributions = space.distributions()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", optuna.exceptions.ExperimentalWarning)
        sampler = optuna.samplers.TPESampler(
            n_startup_trials=0,
            n_ei_candidates=candidates,
            gamma=good_set_size,
            multivariate=True,
            seed=int(generator.integers(2**31)),
        )
    study = optuna.create_study(direction="minimize", sampler=sampler)
    study.add_trials(
        [
            optuna.trial.create_trial(
                params=space.to_params(selection),
                distributions=distributions,
                value=y,
            )
            for selection, y in history.observations
        ]
    )
    trial = study.ask(fixed_distributions=distributions)
    return space.from_params(trial.params)


###############################################################################
# Selectors


class RandomSelector(SelectorPolicy):
    def __init__(self, space: SearchSpace, seed: int = 0):
        self.space = space
        self.generator = np.random.default_rng(seed)
        self.history = TrialHistory()

    def next(self, trace: RunTrace) -> HyperparamSelection:
        return suggest_random(self.history, self.space, self.generator)


class TPESelector(SelectorPolicy):
    """
    Keeps one trial history per run. Before each suggestion, any epochs in
    the trace it hasn't seen yet are added as observations.
    """

    def __init__(
        self,
        space: SearchSpace,
        seed: int = 0,
        gamma_quantile: float = 0.25,
        candidates: int = 24,
        startup_trials: int = 10,
    ):
        self.space = space
        self.generator = np.random.default_rng(seed)
        self.gamma_quantile = gamma_quantile
        self.candidates = candidates
        self.startup_trials = startup_trials
        self.history = TrialHistory()

    def observe(self, trace: RunTrace):
        if len(trace) < len(self.history):
            # A new run has started.
            self.history = TrialHistory()
        for selection, metrics in trace.epochs[len(self.history) :]:
            self.history.add(selection, metrics.y)

    def next(self, trace: RunTrace) -> HyperparamSelection:
        self.observe(trace)
        return suggest_tpe(
            self.history,
            self.space,
            self.generator,
            gamma_quantile=self.gamma_quantile,
            candidates=self.candidates,
            startup_trials=self.startup_trials,
        )
