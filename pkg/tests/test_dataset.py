import json
import os
import tempfile
from unittest import TestCase

from spsro.dataset import (
    Dataset,
    dumps_dataset,
    read_dataset,
    write_dataset,
)
from spsro.exceptions import (
    InvalidArgumentError,
    ModeMismatchError,
    ParseError,
)
from spsro.modes import Mode
from tests.factories import random_trace


def three_runs(mode: Mode = Mode.efg) -> Dataset:
    return Dataset.create(
        runs=[random_trace(mode, epochs=4, seed=i) for i in range(3)],
        epochs=10,
        q=20,
        k_bar=100,
    )


class DatasetFileTest(TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.directory.name, "dataset.jsonl")

    def tearDown(self):
        self.directory.cleanup()

    def write_lines(self, lines):
        with open(self.path, "w") as f:
            f.write("\n".join(lines) + "\n")


class TestRoundTrip(DatasetFileTest):
    def test_round_trip(self):
        dataset = three_runs()
        write_dataset(dataset, self.path)
        self.assertEqual(read_dataset(self.path), dataset)

    def test_nfg_round_trip(self):
        dataset = three_runs(Mode.nfg)
        write_dataset(dataset, self.path)
        self.assertEqual(read_dataset(self.path, mode=Mode.nfg), dataset)

    def test_invalid_flag_survives(self):
        dataset = three_runs()
        dataset.runs[1].valid = False
        write_dataset(dataset, self.path)
        self.assertFalse(read_dataset(self.path).runs[1].valid)


class TestHeader(TestCase):
    def test_y_range(self):
        dataset = three_runs()
        ys = [m.y for run in dataset.runs for m in run.metrics]
        header = json.loads(dumps_dataset(dataset).splitlines()[0])
        self.assertEqual(header["y_min"], min(ys))
        self.assertEqual(header["y_max"], max(ys))
        self.assertEqual(header["schema"], 1)
        self.assertEqual(header["mode"], "efg")

    def test_run_lines(self):
        lines = dumps_dataset(three_runs()).splitlines()
        self.assertEqual(len(lines), 4)
        record = json.loads(lines[1])
        self.assertEqual(
            set(record["epochs"][0]),
            {"alpha", "beta", "k", "y", "nashconv", "effort", "degenerate"},
        )


class TestErrors(DatasetFileTest):
    def test_mode_mismatch(self):
        write_dataset(three_runs(Mode.efg), self.path)
        with self.assertRaises(ModeMismatchError):
            read_dataset(self.path, mode=Mode.nfg)

    def test_malformed_line(self):
        lines = dumps_dataset(three_runs()).splitlines()
        lines[2] = lines[2][:40]
        self.write_lines(lines)
        with self.assertRaises(ParseError) as manager:
            read_dataset(self.path)
        self.assertEqual(manager.exception.line_number, 3)
        self.assertIn("line 3", str(manager.exception))

    def test_schema_mismatch(self):
        lines = dumps_dataset(three_runs()).splitlines()
        header = json.loads(lines[0])
        header["schema"] = 2
        lines[0] = json.dumps(header)
        self.write_lines(lines)
        with self.assertRaises(ParseError) as manager:
            read_dataset(self.path)
        self.assertEqual(manager.exception.line_number, 1)

    def test_unknown_key(self):
        lines = dumps_dataset(three_runs()).splitlines()
        record = json.loads(lines[1])
        record["comment"] = "hello"
        lines[1] = json.dumps(record)
        self.write_lines(lines)
        with self.assertRaises(ParseError) as manager:
            read_dataset(self.path)
        self.assertEqual(manager.exception.line_number, 2)

    def test_empty_file(self):
        self.write_lines([])
        with self.assertRaises(ParseError):
            read_dataset(self.path)

    def test_run_longer_than_context(self):
        with self.assertRaises(InvalidArgumentError):
            Dataset.create(runs=[random_trace(epochs=6)], epochs=5)

    def test_mixed_modes(self):
        with self.assertRaises(ModeMismatchError):
            Dataset.create(
                runs=[random_trace(Mode.efg), random_trace(Mode.nfg)],
                epochs=10,
            )
