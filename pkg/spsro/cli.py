"""
The ``spsro`` command.

Every command exits with 0 on success. Failures print a single line to
stderr and exit with 2::

    error: <category>: <message>
    error: io: <path>: <message>
"""
import functools
import logging
import os
import sys
import typing as t

import pandas as pd
import targ

from spsro.conf import SpsroConfig, load_config, resolve_seed
from spsro.dataset import Dataset, read_dataset, write_dataset
from spsro.engine import mode_of, run_spsro
from spsro.exceptions import InvalidArgumentError, SpsroError
from spsro.experiment import (
    ExperimentConfig,
    generate_dataset,
    parse_game,
    run_experiment,
)
from spsro.reports import (
    plot_reports,
    read_runs_csv,
    runs_frame,
    summarize,
    write_runs_csv,
    write_summary_csv,
)
from spsro.selectors import parse_selector
from spsro.transformer.checkpoint import save
from spsro.transformer.config import ModelConfig
from spsro.transformer.train import train as train_model

logger = logging.getLogger(__name__)

EXIT_FAILURE = 2


def _configure_logging(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _fail(message: str) -> t.NoReturn:
    sys.stderr.write(f"error: {message}\n")
    sys.exit(EXIT_FAILURE)


def command(function: t.Callable) -> t.Callable:
    """
    Turns library and I/O errors into the one-line error format.
    """

    @functools.wraps(function)
    def wrapper(*args, **kwargs):
        try:
            return function(*args, **kwargs)
        except SpsroError as exception:
            _fail(f"{exception.category}: {exception}")
        except OSError as exception:
            path = exception.filename or "-"
            _fail(f"io: {path}: {exception.strerror or exception}")

    return wrapper


def _split(value: str) -> t.List[str]:
    return [i.strip() for i in value.split(",") if i.strip()]


def _ensure_dir(path: str):
    os.makedirs(path, exist_ok=True)


def _model_config(config: SpsroConfig, dataset: Dataset) -> ModelConfig:
    """
    The model section of the config, with the mode, the number of
    meta-solvers, the quantization level and the context filled in from the
    dataset wherever the config file leaves them out.
    """
    spec = dataset.quantization
    derived = {
        "mode": spec.mode,
        "num_solvers": spec.m,
        "q": spec.q,
        "context_epochs": max(dataset.epochs, config.model.context_epochs),
    }
    update = {
        key: value
        for key, value in derived.items()
        if key not in config.model.model_fields_set
    }
    return config.model.model_copy(update=update)


###############################################################################
# Commands


@command
def gen_dataset(
    out: str,
    game_family: str = "nfg:30x30",
    runs: int = 100,
    epochs: int = 50,
    behavior: str = "",
    config: str = "",
    seed: int = 0,
    parallel: int = 1,
    verbose: bool = False,
):
    """
    Generate the offline dataset by running an online suggester.

    :param out:
        Where to write the dataset (JSON lines).
    :param game_family:
        ``kuhn`` or ``nfg:<rows>x<cols>``. Each normal-form run gets a new
        game, seeded with the run's seed.
    :param runs:
        Number of runs.
    :param epochs:
        Epochs per run.
    :param behavior:
        ``random`` or ``tpe``. Defaults to ``hpo.kind`` in the config.
    :param config:
        A JSON config file.
    :param seed:
        Run ``i`` uses ``seed + i``. ``SPSRO_SEED`` overrides it.
    :param parallel:
        Number of worker processes.

    """
    _configure_logging(verbose)
    spsro_config = load_config(config)
    dataset = generate_dataset(
        game=game_family,
        runs=runs,
        epochs=epochs,
        config=spsro_config,
        behavior=behavior or None,
        base_seed=resolve_seed(seed),
        parallel=parallel,
        progress=True,
    )
    write_dataset(dataset, out)
    logger.info("Wrote %d runs to %s", len(dataset), out)


@command
def train(
    dataset: str,
    out: str,
    config: str = "",
    seed: int = 0,
    losses: str = "",
    verbose: bool = False,
):
    """
    Train the sequence model on a dataset.

    :param dataset:
        A dataset written by ``gen-dataset``.
    :param out:
        Where to write the checkpoint.
    :param config:
        A JSON config file. Its ``model`` and ``train`` sections apply.
    :param seed:
        Training seed. ``SPSRO_SEED`` overrides it.
    :param losses:
        Where to write the loss curve CSV. Defaults to ``<out>.losses.csv``.

    """
    _configure_logging(verbose)
    spsro_config = load_config(config)
    data = read_dataset(dataset)
    model_config = _model_config(spsro_config, data)
    train_config = spsro_config.train.model_copy(
        update={"seed": resolve_seed(seed)}
    )
    result = train_model(data, model_config, train_config, progress=True)
    save(result.params, out, quantization=data.quantization)
    logger.info("Wrote %s", out)

    losses = losses or f"{out}.losses.csv"
    pd.DataFrame(
        {
            "epoch": range(1, len(result.losses) + 1),
            "loss": result.losses,
        }
    ).to_csv(losses, index=False, lineterminator="\n")
    logger.info("Wrote %s", losses)


@command
def run(
    game: str,
    selector: str,
    epochs: int = 50,
    seed: int = 0,
    out: str = "",
    config: str = "",
    verbose: bool = False,
):
    """
    Run SPSRO once.

    :param game:
        ``kuhn`` or ``nfg:<rows>x<cols>``. The seed also generates the
        normal-form game.
    :param selector:
        A preset (``gda``, ``inrl``, ``psro_p``, ``psro_u``, ``psro_prd``,
        ``psro_alpharank``), ``mixed``, ``switch:<first>:<second>:<epoch>``,
        ``random``, ``tpe`` or ``transformer:<checkpoint>[:greedy|:t=<x>]``.
    :param out:
        Where to write the runs CSV. Defaults to stdout.

    """
    _configure_logging(verbose)
    spsro_config = load_config(config)
    seed = resolve_seed(seed)
    parsed_game = parse_game(game, seed)
    factory = parse_selector(selector, mode_of(parsed_game), spsro_config)
    trace = run_spsro(
        parsed_game,
        factory(seed),
        epochs=epochs,
        config=spsro_config,
        seed=seed,
    )
    if not trace.valid:
        logger.warning("The run stopped early: %s", trace.error)

    frame = runs_frame([(factory.name, trace)])
    if out:
        write_runs_csv(frame, out)
    else:
        sys.stdout.write(frame.to_csv(index=False, lineterminator="\n"))


@command
def evaluate(
    selectors: str,
    game: str = "nfg:40x40",
    seeds: int = 10,
    epochs: int = 50,
    seed: int = 0,
    out_dir: str = ".",
    parallel: int = 1,
    plots: bool = True,
    config: str = "",
    verbose: bool = False,
):
    """
    Compare selectors over several seeds.

    Writes ``runs.csv`` and ``summary.csv`` (mean and standard error of the
    final NashConv) to ``out_dir``, plus SVG plots if matplotlib is
    installed.

    :param selectors:
        Comma separated selector strings, see ``run``.
    :param seeds:
        Number of seeds. Seed ``i`` is ``seed + i``.

    """
    _configure_logging(verbose)
    spsro_config = load_config(config)
    base_seed = resolve_seed(seed)
    if seeds < 1:
        raise InvalidArgumentError("seeds must be at least 1.")
    experiment = ExperimentConfig(
        game=game,
        selectors=_split(selectors),
        seeds=[base_seed + i for i in range(seeds)],
        epochs=epochs,
        out_dir=out_dir,
        parallel=parallel,
    )
    results = run_experiment(experiment, spsro_config, progress=True)
    for name, trace in results:
        if not trace.valid:
            logger.warning(
                "%s, seed %d stopped early: %s", name, trace.seed, trace.error
            )

    _ensure_dir(out_dir)
    frame = runs_frame(results)
    write_runs_csv(frame, os.path.join(out_dir, "runs.csv"))
    write_summary_csv(summarize(frame), os.path.join(out_dir, "summary.csv"))
    if plots:
        plot_reports(frame, out_dir)
    logger.info("Wrote results to %s", out_dir)


@command
def report(
    runs: str,
    out_dir: str = ".",
    plots: bool = True,
    verbose: bool = False,
):
    """
    Summarise one or more runs CSVs.

    :param runs:
        Comma separated paths of runs CSVs.

    """
    _configure_logging(verbose)
    frame = read_runs_csv(_split(runs))
    summary = summarize(frame)
    _ensure_dir(out_dir)
    write_summary_csv(summary, os.path.join(out_dir, "summary.csv"))
    if plots:
        plot_reports(frame, out_dir)
    sys.stdout.write(summary.to_string(index=False) + "\n")


###############################################################################


def main():
    import dotenv

    dotenv.load_dotenv(dotenv.find_dotenv(usecwd=True))

    cli = targ.CLI(description="Self-adaptive PSRO")
    cli.register(gen_dataset, command_name="gen-dataset")
    cli.register(train)
    cli.register(run)
    cli.register(evaluate, command_name="eval")
    cli.register(report)
    cli.run()


if __name__ == "__main__":
    main()
