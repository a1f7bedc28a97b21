"""
Run configuration. A config file is JSON with the same nesting as
:class:`SpsroConfig`, for example::

    {
        "meta_solvers": ["uniform", "prd", "alpharank"],
        "prd": {"steps": 20000},
        "oracle": {"kind": "qlearn", "k_bar": 5000},
        "pruning": {"cap": 10}
    }

Anything left out keeps its default.
"""
from __future__ import annotations

import os
import typing as t

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from spsro.exceptions import InvalidArgumentError, ParseError
from spsro.transformer.config import ModelConfig, TrainConfig

SEED_ENV_VAR = "SPSRO_SEED"


class PRDConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    steps: int = Field(default=100_000, ge=0)
    step_size: float = Field(default=1e-2, gt=0.0)
    gamma: float = Field(default=1e-6, ge=0.0, le=1.0)
    average_fraction: float = Field(default=0.5, gt=0.0, le=1.0)


class AlphaRankConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha_scale: float = Field(default=50.0, ge=0.0)
    mutation: float = Field(default=1e-6, gt=0.0, lt=1.0)
    max_profiles: int = Field(default=10_000, ge=1)


class OracleConfig(BaseModel):
    """
    :param kind:
        ``'exact'`` computes true best responses (NFG argmax, Kuhn tree walk).
        ``'qlearn'`` trains a tabular Q-learner for ``K`` episodes and is
        only valid for extensive-form games. ``'auto'`` means ``exact`` for
        normal-form games and ``qlearn`` for extensive-form games.
    :param k_bar:
        The largest episode budget a selector may ask for.
    :param lr:
        Q-learning step size.
    :param eps_final:
        Exploration rate reached at the end of the annealing window.
    :param eps_anneal_fraction:
        Fraction of the episodes over which exploration anneals from 1.0.

    """

    model_config = ConfigDict(extra="forbid")

    kind: t.Literal["auto", "exact", "qlearn"] = "auto"
    k_bar: int = Field(default=5000, ge=1)
    lr: float = Field(default=0.05, gt=0.0, le=1.0)
    eps_final: float = Field(default=0.05, ge=0.0, le=1.0)
    eps_anneal_fraction: float = Field(default=0.8, gt=0.0, le=1.0)


class PruningConfig(BaseModel):
    """
    Support-size pruning. Applies at epochs where ``alpharank`` has positive
    weight, or at every epoch if ``all_solvers`` is set.
    """

    model_config = ConfigDict(extra="forbid")

    enabled: bool = True
    cap: int = Field(default=10, ge=1)
    all_solvers: bool = False


class HPOConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: t.Literal["random", "tpe"] = "tpe"
    gamma_quantile: float = Field(default=0.25, gt=0.0, lt=1.0)
    candidates: int = Field(default=24, ge=1)
    startup_trials: int = Field(default=10, ge=0)


class QuantizationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    q: int = Field(default=20, ge=2)


class SpsroConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    meta_solvers: t.List[str] = Field(
        default_factory=lambda: ["uniform", "prd", "alpharank"]
    )
    prd: PRDConfig = Field(default_factory=PRDConfig)
    alpharank: AlphaRankConfig = Field(default_factory=AlphaRankConfig)
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    pruning: PruningConfig = Field(default_factory=PruningConfig)
    hpo: HPOConfig = Field(default_factory=HPOConfig)
    quantization: QuantizationConfig = Field(
        default_factory=QuantizationConfig
    )
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)


def load_config(path: t.Optional[str] = None) -> SpsroConfig:
    """
    Reads a JSON config file. With no path, the defaults are returned.

    :raises ParseError:
        If the file isn't valid JSON, or contains unknown keys or bad values.

    """
    if not path:
        return SpsroConfig()

    with open(path) as f:
        contents = f.read()

    try:
        return SpsroConfig.model_validate_json(contents)
    except ValidationError as exception:
        raise ParseError(f"{path}: {exception}") from exception


def resolve_seed(seed: int) -> int:
    """
    ``SPSRO_SEED`` in the environment (or a ``.env`` file) wins over the
    seed passed on the command line.
    """
    value = os.environ.get(SEED_ENV_VAR)
    if value is None or value == "":
        return seed
    try:
        resolved = int(value)
    except ValueError:
        raise InvalidArgumentError(
            f"{SEED_ENV_VAR} must be an integer, got {value!r}."
        )
    if resolved < 0:
        raise InvalidArgumentError(f"{SEED_ENV_VAR} must be non-negative.")
    return resolved
