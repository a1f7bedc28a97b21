"""
Builds selectors from the strings used on the command line:

====================================== =====================================
string                                 selector
====================================== =====================================
``gda``, ``psro_u``, ...               a classic variant, see
                                       :func:`~spsro.engine.preset_variant`
``mixed``                              equal weights on every meta-solver
``switch:<first>:<second>:<epoch>``    one meta-solver, then another
``random``                             the random suggester
``tpe``                                the TPE suggester
``transformer:<path>[:greedy|:t=<x>]`` a trained checkpoint
====================================== =====================================

Parsing happens once, up front, so a bad string or a missing checkpoint is
reported before any run starts. The result builds a fresh selector per run.
"""
from __future__ import annotations

import typing as t
from dataclasses import dataclass

from spsro.conf import SpsroConfig
from spsro.engine import (
    PRESETS,
    ConstantSelector,
    SelectorPolicy,
    default_selection,
    preset_variant,
    seed_stream,
    solver_switch_schedule,
)
from spsro.exceptions import (
    CheckpointError,
    InvalidArgumentError,
    ModeMismatchError,
)
from spsro.hpo import RandomSelector, SearchSpace, TPESelector
from spsro.hpo_policy import TransformerSelector
from spsro.modes import Mode
from spsro.transformer.checkpoint import Checkpoint, load_checkpoint


@dataclass
class SelectorFactory:
    """
    :param name:
        The string the selector was parsed from, used to label results.
    :param build:
        Called with a run's seed to get that run's selector.

    """

    name: str
    build: t.Callable[[int], SelectorPolicy]

    def __call__(self, seed: int) -> SelectorPolicy:
        return self.build(seed)


def _parse_transformer(
    text: str, mode: Mode
) -> t.Tuple[Checkpoint, bool, float]:
    body = text[len("transformer:") :]
    greedy = False
    temperature = 1.0
    path, _, option = body.rpartition(":")
    if path and option == "greedy":
        greedy = True
    elif path and option.startswith("t="):
        try:
            temperature = float(option[2:])
        except ValueError:
            raise InvalidArgumentError(
                f"Bad temperature in {text!r}."
            ) from None
        if not temperature > 0.0:
            raise InvalidArgumentError(
                f"The temperature in {text!r} must be positive."
            )
    else:
        path = body
    if not path:
        raise InvalidArgumentError(f"No checkpoint path in {text!r}.")

    try:
        checkpoint = load_checkpoint(path)
    except OSError as exception:
        raise CheckpointError(
            f"Can't read {path}: {exception.strerror or exception}"
        ) from exception
    if checkpoint.quantization is None:
        raise CheckpointError(
            f"{path} has no quantization spec, so it can't drive a run."
        )
    if checkpoint.params.config.mode is not mode:
        raise ModeMismatchError(
            f"{path} is a {checkpoint.params.config.mode.value} model, the "
            f"game is {mode.value}."
        )
    return checkpoint, greedy, temperature


def parse_selector(
    text: str, mode: Mode, config: t.Optional[SpsroConfig] = None
) -> SelectorFactory:
    """
    :param mode:
        The mode of the games the selector will run on.
    :raises InvalidArgumentError:
        For a string that doesn't parse.
    :raises CheckpointError:
        If a transformer checkpoint can't be loaded.

    """
    config = config or SpsroConfig()
    solvers = tuple(config.meta_solvers)
    k_bar = config.oracle.k_bar
    text = text.strip()

    if text in PRESETS:
        return SelectorFactory(
            name=text,
            build=lambda seed: preset_variant(text, solvers, k_bar),
        )

    if text == "mixed":
        selection = default_selection(solvers, k_bar)
        return SelectorFactory(
            name=text, build=lambda seed: ConstantSelector(selection)
        )

    if text.startswith("switch:"):
        parts = text.split(":")
        if len(parts) != 4:
            raise InvalidArgumentError(
                f"Expected switch:<first>:<second>:<epoch>, got {text!r}."
            )
        _, first, second, epoch = parts
        try:
            switch_epoch = int(epoch)
        except ValueError:
            raise InvalidArgumentError(
                f"Bad switch epoch in {text!r}."
            ) from None
        # Validates the names and epoch now rather than in the first run.
        solver_switch_schedule(first, second, switch_epoch, solvers, k_bar)
        return SelectorFactory(
            name=text,
            build=lambda seed: solver_switch_schedule(
                first, second, switch_epoch, solvers, k_bar
            ),
        )

    if text in ("random", "tpe"):
        space = SearchSpace(solvers=solvers, mode=mode, k_bar=k_bar)
        if text == "random":
            return SelectorFactory(
                name=text,
                build=lambda seed: RandomSelector(space, seed_stream(seed)),
            )
        hpo = config.hpo
        return SelectorFactory(
            name=text,
            build=lambda seed: TPESelector(
                space,
                seed_stream(seed),
                gamma_quantile=hpo.gamma_quantile,
                candidates=hpo.candidates,
                startup_trials=hpo.startup_trials,
            ),
        )

    if text.startswith("transformer:"):
        checkpoint, greedy, temperature = _parse_transformer(text, mode)
        spec = checkpoint.quantization
        assert spec is not None
        return SelectorFactory(
            name=text,
            build=lambda seed: TransformerSelector(
                checkpoint.params,
                spec,
                greedy=greedy,
                temperature=temperature,
                seed=seed_stream(seed),
            ),
        )

    raise InvalidArgumentError(
        f"Unknown selector {text!r}. Use a preset ({', '.join(PRESETS)}), "
        "mixed, switch:<first>:<second>:<epoch>, random, tpe or "
        "transformer:<checkpoint>."
    )


def behavior_selector(
    config: SpsroConfig, mode: Mode
) -> SelectorFactory:
    """
    The online suggester named by ``hpo.kind``, used to generate datasets.
    """
    return parse_selector(config.hpo.kind, mode, config)
