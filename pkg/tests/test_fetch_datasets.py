"""
Unit tests for the dataset fetch script (no network)
"""

import os
import sys

import pytest
import requests

SCRIPTS_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "scripts")
sys.path.insert(0, SCRIPTS_DIR)

import fetch_datasets  # noqa: E402
from fetch_datasets import SOURCES, fetch, parse_boston, parse_whitespace  # noqa: E402

from src.data.csv_loader import ColumnSpec, read_csv  # noqa: E402

AUTO_MPG_LINES = (
    '18.0   8   307.0      130.0      3504.      12.0   70  1\t"chevrolet chevelle malibu"\n'
    '25.0   4   98.00      ?          2046.      19.0   71  1\t"ford pinto"\n'
    '\n'
    '15.0   8   350.0\n'
)


class FakeResponse:

    def __init__(self, text, status=200):
        self.text = text
        self.status = status

    def raise_for_status(self):
        if self.status >= 400:
            raise requests.HTTPError(f"{self.status} error")


class TestParsers:

    def test_auto_mpg_lines(self):
        rows = list(parse_whitespace(AUTO_MPG_LINES, 9))
        assert len(rows) == 2, "blank and short lines are skipped"
        assert rows[0][-1] == "chevrolet chevelle malibu"
        assert rows[1][3] == ""

    def test_boston_wrapped_records(self):
        preamble = "\n".join(f"header line {i}" for i in range(22))
        body = ("0.00632  18.00   2.310  0  0.5380  6.5750  65.20  4.0900   1  296.0  15.30\n"
                " 396.90   4.98  24.00\n"
                "0.02731   0.00   7.070  0  0.4690  6.4210  78.90  4.9671   2  242.0  17.80\n"
                " 396.90   9.14  21.60\n")
        rows = list(parse_boston(preamble + "\n" + body, 14))
        assert len(rows) == 2
        assert rows[0][0] == "0.00632" and rows[0][-1] == "24.00"
        assert rows[1][-1] == "21.60"


class TestSources:

    def test_split_sizes(self):
        sizes = {name: (s.train_size, s.test_size) for name, s in SOURCES.items()}
        assert sizes == {"airfoil": (1000, 503), "auto_mpg": (314, 78), "boston": (400, 106),
                         "ccpp": (8000, 1568), "ccs": (750, 280)}

    def test_features_exclude_target_and_text(self):
        for name, source in SOURCES.items():
            assert source.target in source.columns, name
            assert source.target not in source.features, name
        assert SOURCES["auto_mpg"].features == ["cylinders", "displacement", "horsepower", "weight",
                                                "acceleration", "model_year", "origin"]


class TestFetch:

    def test_writes_loadable_csv(self, tmp_path, monkeypatch):
        monkeypatch.setattr(fetch_datasets.requests, "get", lambda url, timeout: FakeResponse(AUTO_MPG_LINES))
        assert fetch("auto_mpg", SOURCES["auto_mpg"], str(tmp_path))
        source = SOURCES["auto_mpg"]
        imported = read_csv(str(tmp_path / "auto_mpg.csv"),
                            ColumnSpec(target_column="mpg", feature_columns=tuple(source.features)))
        assert imported.dataset.n == 1
        assert imported.dropped_rows == 1

    def test_download_failure(self, tmp_path, monkeypatch):
        monkeypatch.setattr(fetch_datasets.requests, "get", lambda url, timeout: FakeResponse("", status=404))
        assert not fetch("airfoil", SOURCES["airfoil"], str(tmp_path))
        assert not (tmp_path / "airfoil.csv").exists()

    @pytest.mark.parametrize("name", ["ccpp", "ccs"])
    def test_spreadsheet_sources_need_manual_step(self, tmp_path, monkeypatch, name):
        def no_network(url, timeout):
            raise AssertionError("spreadsheet sources are not downloaded")

        monkeypatch.setattr(fetch_datasets.requests, "get", no_network)
        assert fetch(name, SOURCES[name], str(tmp_path))
        assert list(tmp_path.iterdir()) == []
