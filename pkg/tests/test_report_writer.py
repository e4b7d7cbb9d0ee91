"""
Unit tests for report writers
"""

import json
from dataclasses import dataclass

import pytest
import numpy as np
import pandas as pd

from src.core.errors import InvalidInputError, UnreadableFileError
from src.data.report_writer import ReportDocument, write_report, read_report, SCHEMA_VERSION


@dataclass
class Row:
    target: str
    level: float
    coverage: float


@pytest.fixture
def report():
    rows = [Row("conditional-mean", 0.95, 0.94), Row("sigma", 0.95, float("nan")), Row("future-response", 0.9, 0.91)]
    return ReportDocument.from_records("coverage", {"function_name": "cosine", "levels": (0.95,)}, rows)


class TestJson:

    def test_reparse_matches_document(self, report, tmp_path):
        path = str(tmp_path / "r.json")
        write_report(report, path)
        assert read_report(path) == report.to_dict()

    def test_nan_written_as_null(self, report, tmp_path):
        path = str(tmp_path / "r.json")
        write_report(report, path)
        with open(path) as f:
            text = f.read()
        assert "NaN" not in text
        assert json.loads(text)["records"][1]["coverage"] is None

    def test_self_describing(self, report):
        doc = report.to_dict()
        assert doc["schema_version"] == SCHEMA_VERSION
        assert doc["kind"] == "coverage"
        assert doc["config"]["levels"] == [0.95]
        assert doc["runtime_ms"] is None

    def test_numpy_scalars(self):
        doc = ReportDocument.from_records("x", {"seed": np.int64(3)}, [{"value": np.float64(0.5)}]).to_dict()
        assert type(doc["config"]["seed"]) is int
        assert type(doc["records"][0]["value"]) is float

    def test_empty_records(self, tmp_path):
        path = str(tmp_path / "empty.json")
        write_report(ReportDocument(kind="fit", config={}), path)
        assert read_report(path)["records"] == []

    def test_identical_bytes(self, report, tmp_path):
        a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        write_report(report, a)
        write_report(report, b)
        with open(a, "rb") as fa, open(b, "rb") as fb:
            assert fa.read() == fb.read()

    def test_unreadable(self, tmp_path):
        with pytest.raises(UnreadableFileError):
            read_report(str(tmp_path / "missing.json"))


class TestCsv:

    def test_one_row_per_record(self, report, tmp_path):
        path = str(tmp_path / "r.csv")
        write_report(report, path, fmt="csv")
        with open(path) as f:
            lines = f.read().splitlines()
        assert len(lines) == 4
        assert lines[0].split(",")[:2] == ["schema_version", "kind"]

    def test_columns(self, report, tmp_path):
        path = str(tmp_path / "r.csv")
        write_report(report, path, fmt="csv")
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["schema_version", "kind", "target", "level", "coverage",
                                       "config.function_name", "config.levels"]
        assert frame["target"].tolist() == ["conditional-mean", "sigma", "future-response"]
        assert pd.isna(frame["coverage"][1])

    def test_nested_fields_flattened(self, tmp_path):
        path = str(tmp_path / "n.csv")
        write_report(ReportDocument(kind="x", config={}, records=[{"ci": {"lower": 1.0, "upper": 2.0}}]), path, fmt="csv")
        assert {"ci.lower", "ci.upper"} <= set(pd.read_csv(path).columns)


    def test_config_on_every_row(self, tmp_path):
        path = str(tmp_path / "c.csv")
        config = {"seed": 42, "extra_levels": [0.9, 0.99], "params": {"n_trees": 10, "mtry": None}}
        write_report(ReportDocument(kind="coverage", config=config, records=[{"a": 1}, {"a": 2}]), path, fmt="csv")
        frame = pd.read_csv(path)
        assert frame["config.seed"].tolist() == [42, 42]
        assert frame["config.params.n_trees"].tolist() == [10, 10]
        assert frame["config.params.mtry"].isna().all()
        assert json.loads(frame["config.extra_levels"][0]) == [0.9, 0.99]


class TestFormat:

    def test_unknown_format(self, report, tmp_path):
        with pytest.raises(InvalidInputError):
            write_report(report, str(tmp_path / "r.xml"), fmt="xml")
