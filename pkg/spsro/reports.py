"""
Result tables and plots.

A runs CSV has one row per (selector, seed, epoch)::

    selector,solvers,seed,epoch,nashconv,effort,y,alpha_1,...,alpha_m,beta,k

``solvers`` lists the meta-solvers the alpha columns refer to, joined with
``|``. Selectors over fewer meta-solvers leave the extra alpha columns
empty. The summary CSV holds the mean and standard error of the final
NashConv per selector. See ``FORMAT.md``.
"""
from __future__ import annotations

import logging
import math
import os
import typing as t
import warnings

import colorama
import pandas as pd

from spsro.engine import RunTrace
from spsro.exceptions import ParseError

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:  # pragma: no cover
    plt = None

logger = logging.getLogger(__name__)

KEY_COLUMNS = ["selector", "solvers", "seed", "epoch"]
METRIC_COLUMNS = ["nashconv", "effort", "y"]
ORACLE_COLUMNS = ["beta", "k"]
SUMMARY_COLUMNS = [
    "selector",
    "seeds",
    "epochs",
    "final_nashconv_mean",
    "final_nashconv_se",
    "final_effort_mean",
]


def alpha_columns(m: int) -> t.List[str]:
    return [f"alpha_{i + 1}" for i in range(m)]


###############################################################################
# Runs table


def trace_rows(selector: str, trace: RunTrace) -> t.List[t.Dict[str, t.Any]]:
    rows = []
    for selection, metrics in trace.epochs:
        row: t.Dict[str, t.Any] = {
            "selector": selector,
            "solvers": "|".join(selection.weights.solvers),
            "seed": trace.seed,
            "epoch": metrics.epoch,
            "nashconv": metrics.nashconv,
            "effort": metrics.br_effort,
            "y": metrics.y,
        }
        for column, alpha in zip(
            alpha_columns(selection.weights.m), selection.weights.alpha
        ):
            row[column] = alpha
        row["beta"] = selection.oracle.beta
        row["k"] = selection.oracle.k
        rows.append(row)
    return rows


def _column_order(frame: pd.DataFrame) -> t.List[str]:
    alphas = sorted(
        (i for i in frame.columns if i.startswith("alpha_")),
        key=lambda i: int(i.split("_")[1]),
    )
    return KEY_COLUMNS + METRIC_COLUMNS + alphas + ORACLE_COLUMNS


def runs_frame(results: t.Iterable[t.Tuple[str, RunTrace]]) -> pd.DataFrame:
    rows = [row for name, trace in results for row in trace_rows(name, trace)]
    if not rows:
        return pd.DataFrame(
            columns=KEY_COLUMNS + METRIC_COLUMNS + ORACLE_COLUMNS
        )
    frame = pd.DataFrame(rows)
    return frame[_column_order(frame)]


def write_runs_csv(frame: pd.DataFrame, path: str):
    frame.to_csv(path, index=False, lineterminator="\n")


def read_runs_csv(paths: t.Sequence[str]) -> pd.DataFrame:
    """
    Reads and concatenates runs CSVs.

    :raises ParseError:
        If a file is missing a column, or has a value of the wrong type.

    """
    frames = []
    for path in paths:
        try:
            frame = pd.read_csv(path, dtype={"selector": str, "solvers": str})
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as exception:
            raise ParseError(f"{path}: {exception}") from exception

        required = KEY_COLUMNS + METRIC_COLUMNS + ORACLE_COLUMNS
        missing = [i for i in required if i not in frame.columns]
        if missing or "alpha_1" not in frame.columns:
            raise ParseError(
                f"{path} isn't a runs CSV, missing columns: "
                f"{missing or ['alpha_1']}."
            )
        unexpected = [
            i
            for i in frame.columns
            if i not in required and not i.startswith("alpha_")
        ]
        if unexpected:
            raise ParseError(f"{path} has unexpected columns {unexpected}.")

        for column in frame.columns:
            if column in ("selector", "solvers"):
                continue
            try:
                frame[column] = pd.to_numeric(frame[column])
            except (ValueError, TypeError) as exception:
                raise ParseError(
                    f"{path}: column {column} isn't numeric."
                ) from exception
        frames.append(frame)

    if not frames:
        raise ParseError("No runs CSVs given.")
    frame = pd.concat(frames, ignore_index=True)
    return frame[_column_order(frame)]


###############################################################################
# Aggregation


def check_complete(frame: pd.DataFrame):
    """
    Every seed of a selector must cover epochs ``1..E``, where ``E`` is the
    longest run of that selector.

    :raises ParseError:
        Naming the first selector and seed with missing epochs.

    """
    for selector, group in frame.groupby("selector", sort=True):
        expected = set(range(1, int(group["epoch"].max()) + 1))
        for seed, runs in group.groupby("seed", sort=True):
            epochs = list(runs["epoch"])
            if len(epochs) != len(set(epochs)):
                raise ParseError(
                    f"Selector {selector!r}, seed {seed} repeats epochs."
                )
            missing = sorted(expected - set(epochs))
            if missing:
                raise ParseError(
                    f"Selector {selector!r}, seed {seed} is missing epochs "
                    f"{missing}."
                )


def summarize(frame: pd.DataFrame) -> pd.DataFrame:
    """
    Per selector (sorted by name): the number of seeds, the run length, and
    the mean and standard error of the final NashConv across seeds. The
    standard error is 0 for a single seed.
    """
    check_complete(frame)
    rows = []
    for selector, group in frame.groupby("selector", sort=True):
        final_epoch = int(group["epoch"].max())
        finals = group[group["epoch"] == final_epoch].sort_values("seed")
        efforts = group.groupby("seed")["effort"].sum()
        n = len(finals)
        mean = float(finals["nashconv"].mean())
        se = (
            float(finals["nashconv"].std(ddof=1)) / math.sqrt(n)
            if n > 1
            else 0.0
        )
        rows.append(
            {
                "selector": selector,
                "seeds": n,
                "epochs": final_epoch,
                "final_nashconv_mean": mean,
                "final_nashconv_se": se,
                "final_effort_mean": float(efforts.mean()),
            }
        )
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def epoch_means(frame: pd.DataFrame, column: str) -> pd.DataFrame:
    """
    Mean of ``column`` per epoch (rows) and selector (columns).
    """
    return frame.pivot_table(
        index="epoch", columns="selector", values=column, aggfunc="mean"
    ).sort_index(axis=1)


def effort_curve(frame: pd.DataFrame) -> pd.DataFrame:
    """
    Mean cumulative effort and mean NashConv per epoch and selector, in
    long form.
    """
    frame = frame.sort_values(["selector", "seed", "epoch"]).copy()
    frame["cumulative_effort"] = frame.groupby(["selector", "seed"])[
        "effort"
    ].cumsum()
    return (
        frame.groupby(["selector", "epoch"], sort=True)[
            ["cumulative_effort", "nashconv"]
        ]
        .mean()
        .reset_index()
    )


def write_summary_csv(summary: pd.DataFrame, path: str):
    summary.to_csv(path, index=False, lineterminator="\n")


###############################################################################
# Plots


def _save(figure, path: str):
    figure.savefig(path, format="svg", metadata={"Date": None})
    plt.close(figure)
    logger.info("Wrote %s", path)


def _line_plot(
    table: pd.DataFrame, title: str, ylabel: str, path: str, xlabel="Epoch"
):
    figure, axes = plt.subplots(figsize=(6, 4))
    for selector in table.columns:
        axes.plot(table.index, table[selector], label=str(selector))
    axes.set_title(title)
    axes.set_xlabel(xlabel)
    axes.set_ylabel(ylabel)
    axes.legend(fontsize="small")
    figure.tight_layout()
    _save(figure, path)


def plot_reports(frame: pd.DataFrame, out_dir: str) -> t.List[str]:
    """
    Writes SVG plots to ``out_dir``:

    * ``nashconv_epoch.svg`` - mean NashConv per epoch
    * ``nashconv_effort.svg`` - mean NashConv against mean cumulative effort
    * ``weights.svg`` - mean weight of each meta-solver slot per epoch
    * ``budget.svg`` - mean K per epoch, if any selector used ``K > 1``

    Returns the paths written, which is empty if matplotlib isn't
    installed.
    """
    if plt is None:
        warnings.warn(
            colorama.Fore.YELLOW
            + "matplotlib isn't installed, so no plots were made. Install "
            "spsro[plots] to get them."
            + colorama.Fore.RESET
        )
        return []

    matplotlib.rcParams["svg.hashsalt"] = "spsro"
    paths = []

    path = os.path.join(out_dir, "nashconv_epoch.svg")
    _line_plot(epoch_means(frame, "nashconv"), "NashConv", "NashConv", path)
    paths.append(path)

    path = os.path.join(out_dir, "nashconv_effort.svg")
    curve = effort_curve(frame)
    figure, axes = plt.subplots(figsize=(6, 4))
    for selector, group in curve.groupby("selector", sort=True):
        axes.plot(
            group["cumulative_effort"], group["nashconv"], label=str(selector)
        )
    axes.set_title("NashConv against best-response effort")
    axes.set_xlabel("Cumulative effort")
    axes.set_ylabel("NashConv")
    axes.legend(fontsize="small")
    figure.tight_layout()
    _save(figure, path)
    paths.append(path)

    alphas = [i for i in frame.columns if i.startswith("alpha_")]
    path = os.path.join(out_dir, "weights.svg")
    figure, all_axes = plt.subplots(
        nrows=len(alphas), figsize=(6, 2.5 * len(alphas)), squeeze=False
    )
    for axes, column in zip(all_axes[:, 0], alphas):
        table = epoch_means(frame, column)
        for selector in table.columns:
            axes.plot(table.index, table[selector], label=str(selector))
        axes.set_ylabel(column)
        axes.set_ylim(-0.05, 1.05)
    all_axes[0, 0].set_title("Mean meta-solver weights")
    all_axes[-1, 0].set_xlabel("Epoch")
    all_axes[0, 0].legend(fontsize="small")
    figure.tight_layout()
    _save(figure, path)
    paths.append(path)

    if (frame["k"] > 1).any():
        path = os.path.join(out_dir, "budget.svg")
        _line_plot(
            epoch_means(frame, "k"), "Best-response budget", "Mean K", path
        )
        paths.append(path)

    return paths
