#!/usr/bin/env python3
"""
Download the public regression datasets and write them as headed CSVs

Air Foil, Auto MPG and Boston House are plain text upstream and are
converted here. CCPP and CCS are only published as spreadsheets; for those
the script prints the source and the header to use when saving the sheet as
CSV. Missing cells become empty strings, which read_csv drops.

    python scripts/fetch_datasets.py auto_mpg airfoil boston
    python scripts/fetch_datasets.py --list
"""

import argparse
import csv
import io
import logging
import os
import shlex
import sys
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional

import requests

project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

UCI = "https://archive.ics.uci.edu/ml/machine-learning-databases"
BOSTON_HEADER_LINES = 22


@dataclass(frozen=True)
class DatasetSource:
    """Where a dataset lives, its columns and its train/test sizes"""
    url: str
    columns: List[str]
    target: str
    train_size: int
    test_size: int
    parse: Optional[Callable[[str, int], Iterator[List[str]]]] = None
    note: str = ""

    @property
    def features(self) -> List[str]:
        return [c for c in self.columns if c != self.target and c != "car_name"]


def parse_whitespace(text: str, width: int) -> Iterator[List[str]]:
    """One record per line; '?' marks a missing cell, quoted cells may hold spaces"""
    for line in io.StringIO(text):
        if not line.strip():
            continue
        cells = shlex.split(line)
        if len(cells) != width:
            logger.warning(f"Skipping malformed line: {line.strip()}")
            continue
        yield ["" if cell == "?" else cell for cell in cells]


def parse_boston(text: str, width: int) -> Iterator[List[str]]:
    """StatLib layout: a free-text preamble, then each record wrapped over two lines"""
    tokens = " ".join(text.splitlines()[BOSTON_HEADER_LINES:]).split()
    if len(tokens) % width:
        logger.warning(f"{len(tokens) % width} trailing values ignored")
    for start in range(0, len(tokens) - width + 1, width):
        yield tokens[start:start + width]


SOURCES = {
    "airfoil": DatasetSource(
        url=f"{UCI}/00291/airfoil_self_noise.dat",
        columns=["frequency", "angle_of_attack", "chord_length", "free_stream_velocity",
                 "suction_side_displacement_thickness", "sound_pressure"],
        target="sound_pressure", train_size=1000, test_size=503, parse=parse_whitespace,
    ),
    "auto_mpg": DatasetSource(
        url=f"{UCI}/auto-mpg/auto-mpg.data",
        columns=["mpg", "cylinders", "displacement", "horsepower", "weight",
                 "acceleration", "model_year", "origin", "car_name"],
        target="mpg", train_size=314, test_size=78, parse=parse_whitespace,
        note="six rows miss horsepower and are dropped on load; car_name is text, so pass --features",
    ),
    "boston": DatasetSource(
        url="http://lib.stat.cmu.edu/datasets/boston",
        columns=["crim", "zn", "indus", "chas", "nox", "rm", "age", "dis", "rad", "tax",
                 "ptratio", "b", "lstat", "medv"],
        target="medv", train_size=400, test_size=106, parse=parse_boston,
    ),
    "ccpp": DatasetSource(
        url=f"{UCI}/00294/CCPP.zip",
        columns=["at", "v", "ap", "rh", "pe"],
        target="pe", train_size=8000, test_size=1568,
        note="save the first sheet of Folds5x2_pp.xlsx as data/ccpp.csv",
    ),
    "ccs": DatasetSource(
        url=f"{UCI}/concrete/compressive/Concrete_Data.xls",
        columns=["cement", "slag", "fly_ash", "water", "superplasticizer", "coarse_aggregate",
                 "fine_aggregate", "age", "strength"],
        target="strength", train_size=750, test_size=280,
        note="save the sheet as data/ccs.csv",
    ),
}


def evaluate_hint(name: str, source: DatasetSource, path: str) -> str:
    return (f"python scripts/fart.py evaluate --data {path} --target {source.target} "
            f"--features {','.join(source.features)} --test-size {source.test_size}")


def fetch(name: str, source: DatasetSource, out_dir: str) -> bool:
    path = os.path.join(out_dir, f"{name}.csv")
    if source.parse is None:
        logger.info(f"{name}: download {source.url} manually; {source.note}, "
                    f"replacing its header with: {','.join(source.columns)}")
        logger.info(f"Then run: {evaluate_hint(name, source, path)}")
        return True

    try:
        response = requests.get(source.url, timeout=30)
        response.raise_for_status()
    except requests.RequestException as e:
        logger.error(f"{name}: download failed: {e}")
        return False

    rows = list(source.parse(response.text, len(source.columns)))
    os.makedirs(out_dir, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(source.columns)
        writer.writerows(rows)

    missing = sum(1 for row in rows if "" in row)
    logger.info(f"{name}: wrote {len(rows)} rows ({missing} with missing cells) to {path}")
    if source.note:
        logger.info(f"{name}: {source.note}")
    logger.info(f"Evaluate with: {evaluate_hint(name, source, path)}")
    return True


def main() -> int:
    parser = argparse.ArgumentParser(description="Fetch the real-data benchmark sets")
    parser.add_argument("datasets", nargs="*", help=f"any of {', '.join(SOURCES)} (default all)")
    parser.add_argument("--out-dir", default=os.path.join(project_root, "data"))
    parser.add_argument("--list", action="store_true", help="show sources and split sizes")
    args = parser.parse_args()

    if args.list:
        for name, source in SOURCES.items():
            print(f"{name:9s} {source.train_size:>5d}/{source.test_size:<5d} target={source.target:15s} {source.url}")
        return 0

    unknown = sorted(set(args.datasets) - set(SOURCES))
    if unknown:
        parser.error(f"unknown dataset(s): {', '.join(unknown)}")
    names = args.datasets or list(SOURCES)
    ok = [fetch(name, SOURCES[name], args.out_dir) for name in names]
    return 0 if all(ok) else 1


if __name__ == "__main__":
    sys.exit(main())
