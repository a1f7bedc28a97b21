"""
Batches of SPSRO runs: generating the offline dataset and evaluating
selectors over many seeds.

Run ``i`` of a batch uses seed ``base_seed + i``. For normal-form games the
same seed also generates that run's payoff matrix, so every run plays a
fresh game. Runs are independent and can be spread over a process pool;
results always come back in run order.
"""
from __future__ import annotations

import logging
import multiprocessing
import re
import typing as t
from dataclasses import dataclass

from tqdm import tqdm

from spsro.conf import SpsroConfig
from spsro.dataset import Dataset
from spsro.engine import RunTrace, mode_of, run_spsro
from spsro.exceptions import InvalidArgumentError
from spsro.games import Game, KuhnPoker, generate_nfg
from spsro.modes import Mode
from spsro.selectors import SelectorFactory, parse_selector

logger = logging.getLogger(__name__)

NFG_PATTERN = re.compile(r"^nfg:(\d+)(?:x(\d+))?$")


def parse_game(text: str, seed: int = 0) -> Game:
    """
    ``kuhn``, ``nfg:<rows>x<cols>`` or ``nfg:<n>`` for a square game.

    :param seed:
        Seeds the payoff matrix of a normal-form game.

    """
    text = text.strip().lower()
    if text == "kuhn":
        return KuhnPoker()
    match = NFG_PATTERN.match(text)
    if match is None:
        raise InvalidArgumentError(
            f"Unknown game {text!r}. Use kuhn or nfg:<rows>x<cols>."
        )
    rows = int(match.group(1))
    cols = int(match.group(2) or rows)
    return generate_nfg(rows, cols, seed)


def game_mode(text: str) -> Mode:
    return mode_of(parse_game(text))


@dataclass
class ExperimentConfig:
    """
    :param game:
        A game string, see :func:`parse_game`.
    :param selectors:
        Selector strings, see :func:`spsro.selectors.parse_selector`.
    :param seeds:
        One run per selector per seed.
    :param parallel:
        Number of worker processes. 1 runs everything in this process.

    """

    game: str
    selectors: t.List[str]
    seeds: t.List[int]
    epochs: int = 50
    out_dir: str = "."
    parallel: int = 1

    def __post_init__(self):
        if not self.selectors:
            raise InvalidArgumentError("At least one selector is needed.")
        if not self.seeds:
            raise InvalidArgumentError("At least one seed is needed.")
        if self.epochs < 1:
            raise InvalidArgumentError("epochs must be at least 1.")
        if self.parallel < 1:
            raise InvalidArgumentError("parallel must be at least 1.")
        # Fail on a bad game string before any work starts.
        parse_game(self.game)


###############################################################################
# Workers


def _run_task(
    task: t.Tuple[str, str, int, SpsroConfig, int]
) -> RunTrace:
    """
    Runs in a worker process, so it gets strings rather than built objects
    and parses them itself.
    """
    game_text, selector_text, epochs, config, seed = task
    game = parse_game(game_text, seed)
    factory = parse_selector(selector_text, mode_of(game), config)
    trace = run_spsro(
        game, factory(seed), epochs=epochs, config=config, seed=seed
    )
    # Diagnostics hold full meta-strategies and aren't needed downstream.
    trace.diagnostics = []
    return trace


def _map(
    tasks: t.List[t.Any],
    parallel: int,
    progress: bool,
    description: str,
) -> t.List[RunTrace]:
    bar = tqdm(
        total=len(tasks), desc=description, unit="run", disable=not progress
    )
    results = []
    try:
        if parallel == 1:
            for task in tasks:
                results.append(_run_task(task))
                bar.update()
        else:
            with multiprocessing.Pool(processes=parallel) as pool:
                for trace in pool.imap(_run_task, tasks):
                    results.append(trace)
                    bar.update()
    finally:
        bar.close()
    return results


###############################################################################


def generate_dataset(
    game: str,
    runs: int,
    epochs: int,
    config: t.Optional[SpsroConfig] = None,
    behavior: t.Optional[str] = None,
    base_seed: int = 0,
    parallel: int = 1,
    progress: bool = False,
) -> Dataset:
    """
    Runs the behavior policy ``runs`` times and collects the traces.

    :param behavior:
        ``'random'`` or ``'tpe'``. Defaults to ``hpo.kind`` from the config.

    """
    config = config or SpsroConfig()
    behavior = behavior or config.hpo.kind
    if behavior not in ("random", "tpe"):
        raise InvalidArgumentError(
            f"The behavior policy must be random or tpe, not {behavior!r}."
        )
    if runs < 1:
        raise InvalidArgumentError("A dataset needs at least one run.")
    parse_game(game)

    tasks = [
        (game, behavior, epochs, config, base_seed + index)
        for index in range(runs)
    ]
    traces = _map(tasks, parallel, progress, "Generating")
    invalid = sum(not i.valid for i in traces)
    if invalid:
        logger.warning("%d of %d runs are flagged invalid.", invalid, runs)
    return Dataset.create(
        runs=traces,
        epochs=epochs,
        q=config.quantization.q,
        k_bar=config.oracle.k_bar,
    )


def run_experiment(
    experiment: ExperimentConfig,
    config: t.Optional[SpsroConfig] = None,
    progress: bool = False,
) -> t.List[t.Tuple[str, RunTrace]]:
    """
    Every selector on every seed, as ``(selector, trace)`` pairs ordered by
    selector then seed.

    :raises CheckpointError:
        If a transformer checkpoint is missing or unreadable. Checked before
        any run starts.

    """
    config = config or SpsroConfig()
    mode = game_mode(experiment.game)
    factories: t.List[SelectorFactory] = [
        parse_selector(text, mode, config) for text in experiment.selectors
    ]

    tasks = [
        (experiment.game, factory.name, experiment.epochs, config, seed)
        for factory in factories
        for seed in experiment.seeds
    ]
    traces = _map(tasks, experiment.parallel, progress, "Evaluating")
    return [(task[1], trace) for task, trace in zip(tasks, traces)]
