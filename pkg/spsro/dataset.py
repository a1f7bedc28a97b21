"""
The offline dataset: SPSRO run traces stored as JSON lines.

The first line is a header holding the quantization spec (including the
``y`` range observed across every epoch of every run). Each following line
is one run. See ``FORMAT.md`` for the full schema.
"""
from __future__ import annotations

import typing as t
from dataclasses import dataclass

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from spsro.engine import HyperparamSelection, RunTrace
from spsro.evaluation import EpochMetrics
from spsro.exceptions import (
    InvalidArgumentError,
    ModeMismatchError,
    ParseError,
    SpsroError,
)
from spsro.games import GameDescriptor
from spsro.meta_solvers import SolverWeights
from spsro.modes import Mode
from spsro.oracles import OracleParams
from spsro.tokenizer import QuantizationSpec

SCHEMA_VERSION = 1


###############################################################################
# Wire models


class DatasetHeader(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    schema_version: t.Literal[1] = Field(
        default=SCHEMA_VERSION, alias="schema"
    )
    kind: t.Literal["header"] = "header"
    mode: Mode
    q: int = Field(ge=2)
    solvers: t.List[str] = Field(min_length=1)
    k_bar: int = Field(ge=1)
    epochs: int = Field(ge=1, description="Context length, e.g. 50")
    y_min: float
    y_max: float


class EpochRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha: t.List[float]
    beta: float
    k: int
    y: float
    nashconv: float
    effort: float
    degenerate: bool = False


class RunRecord(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    schema_version: t.Literal[1] = Field(
        default=SCHEMA_VERSION, alias="schema"
    )
    mode: Mode
    game: GameDescriptor
    seed: int = Field(ge=0)
    valid: bool = True
    epochs: t.List[EpochRecord]


###############################################################################


@dataclass
class Dataset:
    runs: t.List[RunTrace]
    quantization: QuantizationSpec
    epochs: int

    def __post_init__(self):
        for index, run in enumerate(self.runs):
            if Mode(run.mode) is not self.quantization.mode:
                raise ModeMismatchError(
                    f"Run {index} is {run.mode.value}, the dataset is "
                    f"{self.quantization.mode.value}."
                )
            if len(run) > self.epochs:
                raise InvalidArgumentError(
                    f"Run {index} has {len(run)} epochs, more than "
                    f"{self.epochs}."
                )

    def __len__(self) -> int:
        return len(self.runs)

    @classmethod
    def create(
        cls,
        runs: t.List[RunTrace],
        epochs: int,
        q: int = 20,
        k_bar: int = 5000,
    ) -> "Dataset":
        """
        Derives the quantization spec, with the ``y`` range covering every
        observed value.
        """
        if not runs:
            raise InvalidArgumentError("A dataset needs at least one run.")
        first = runs[0]
        return cls(
            runs=runs,
            quantization=QuantizationSpec.create(
                q=q,
                mode=first.mode,
                solvers=first.solvers,
                k_bar=k_bar,
                ys=[m.y for run in runs for m in run.metrics],
            ),
            epochs=epochs,
        )


def _header(dataset: Dataset) -> DatasetHeader:
    spec = dataset.quantization
    return DatasetHeader(
        mode=spec.mode,
        q=spec.q,
        solvers=list(spec.solvers),
        k_bar=spec.k_bar,
        epochs=dataset.epochs,
        y_min=spec.y_min,
        y_max=spec.y_max,
    )


def _run_record(run: RunTrace) -> RunRecord:
    return RunRecord(
        mode=run.mode,
        game=run.game,
        seed=run.seed,
        valid=run.valid,
        epochs=[
            EpochRecord(
                alpha=list(selection.weights.alpha),
                beta=selection.oracle.beta,
                k=selection.oracle.k,
                y=metrics.y,
                nashconv=metrics.nashconv,
                effort=metrics.br_effort,
                degenerate=metrics.degenerate,
            )
            for selection, metrics in run.epochs
        ],
    )


def _run_trace(record: RunRecord, header: DatasetHeader) -> RunTrace:
    solvers = tuple(header.solvers)
    trace = RunTrace(
        mode=record.mode,
        game=record.game,
        seed=record.seed,
        solvers=solvers,
        valid=record.valid,
    )
    for index, epoch in enumerate(record.epochs):
        trace.append(
            HyperparamSelection(
                weights=SolverWeights(
                    solvers=solvers, alpha=tuple(epoch.alpha)
                ),
                oracle=OracleParams(
                    beta=epoch.beta, k=epoch.k, k_bar=header.k_bar
                ),
            ),
            EpochMetrics(
                epoch=index + 1,
                nashconv=epoch.nashconv,
                br_effort=epoch.effort,
                y=epoch.y,
                degenerate=epoch.degenerate,
            ),
        )
    return trace


def dumps_dataset(dataset: Dataset) -> str:
    lines = [_header(dataset).model_dump_json(by_alias=True)]
    for run in dataset.runs:
        lines.append(_run_record(run).model_dump_json(by_alias=True))
    return "\n".join(lines) + "\n"


def write_dataset(dataset: Dataset, path: str):
    with open(path, "w", newline="\n") as f:
        f.write(dumps_dataset(dataset))


def read_dataset(path: str, mode: t.Optional[Mode] = None) -> Dataset:
    """
    :param mode:
        If given, the dataset must be in this mode.
    :raises ParseError:
        For malformed lines, with the 1-based line number.
    :raises ModeMismatchError:
        If the file's mode isn't ``mode``, or a run disagrees with the
        header.

    """
    with open(path) as f:
        lines = f.read().splitlines()

    if not lines:
        raise ParseError("The dataset is empty.", line_number=1)

    try:
        header = DatasetHeader.model_validate_json(lines[0])
    except ValidationError as exception:
        raise ParseError(str(exception), line_number=1) from exception

    if mode is not None and header.mode is not Mode(mode):
        raise ModeMismatchError(
            f"{path} holds a {header.mode.value} dataset, not "
            f"{Mode(mode).value}."
        )

    runs = []
    for line_number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            record = RunRecord.model_validate_json(line)
        except ValidationError as exception:
            raise ParseError(
                str(exception), line_number=line_number
            ) from exception
        if record.mode is not header.mode:
            raise ModeMismatchError(
                f"Line {line_number} is a {record.mode.value} run in a "
                f"{header.mode.value} dataset."
            )
        try:
            runs.append(_run_trace(record, header))
        except SpsroError as exception:
            raise ParseError(
                str(exception), line_number=line_number
            ) from exception

    try:
        spec = QuantizationSpec(
            q=header.q,
            mode=header.mode,
            solvers=tuple(header.solvers),
            k_bar=header.k_bar,
            y_min=header.y_min,
            y_max=header.y_max,
        )
        return Dataset(runs=runs, quantization=spec, epochs=header.epochs)
    except InvalidArgumentError as exception:
        raise ParseError(str(exception), line_number=1) from exception

