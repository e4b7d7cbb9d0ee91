"""
Versioned JSON archives of trained forests and fiducial ensembles
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional
import hashlib
import json
import logging
import os

import numpy as np

from src.core.errors import ArchiveParseError, UnsupportedVersionError, ReportWriteError
from src.core.honest_trees import Dataset, ForestParams, HonestForest, HonestTree, TreeStructure
from src.engines.fiducial import FiducialDraw, FiducialEnsemble, FiducialWeights

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass
class ModelArchive:
    """Everything needed to reproduce predictions of a fitted model"""
    forest: HonestForest
    master_seed: int
    ensemble: Optional[FiducialEnsemble] = None
    format_version: int = FORMAT_VERSION

    @property
    def params(self) -> ForestParams:
        return self.forest.params


def dataset_fingerprint(data: Dataset) -> Dict[str, Any]:
    """Row count, column names and a SHA-256 over the numeric content"""
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(data.features, dtype="<f8").tobytes())
    digest.update(np.ascontiguousarray(data.response, dtype="<f8").tobytes())
    digest.update(np.ascontiguousarray(data.row_ids, dtype="<i8").tobytes())
    return {
        "rows": data.n,
        "columns": list(data.feature_names) if data.feature_names else [f"x{j + 1}" for j in range(data.p)],
        "sha256": digest.hexdigest(),
    }


def _tree_to_dict(tree: HonestTree) -> Dict[str, Any]:
    return {
        "structure": tree.structure.to_dict(),
        "leaf_values": tree.leaf_values.tolist(),
        "leaf_counts": tree.leaf_counts.tolist(),
        "grow_rows": tree.grow_rows.tolist(),
        "estimate_rows": tree.estimate_rows.tolist(),
        "sse": float(tree.sse),
        "log_weight": tree.log_weight,
    }


def _tree_from_dict(data: Dict[str, Any]) -> HonestTree:
    return HonestTree(
        structure=TreeStructure.from_dict(data["structure"]),
        leaf_values=np.asarray(data["leaf_values"], dtype=float),
        leaf_counts=np.asarray(data["leaf_counts"], dtype=np.int64),
        grow_rows=np.asarray(data["grow_rows"], dtype=np.int64),
        estimate_rows=np.asarray(data["estimate_rows"], dtype=np.int64),
        sse=float(data["sse"]),
        log_weight=data["log_weight"],
    )


def _ensemble_to_dict(ensemble: FiducialEnsemble) -> Dict[str, Any]:
    return {
        "draws": [
            {"tree_index": d.tree_index, "leaf_values": d.leaf_values.tolist(), "sigma": d.sigma}
            for d in ensemble.draws
        ],
        "weights": {
            "log_weights": ensemble.weights.log_weights.tolist(),
            "weights": ensemble.weights.weights.tolist(),
            "tree_indices": ensemble.weights.tree_indices.tolist(),
        },
        "excluded": {str(k): v for k, v in sorted(ensemble.excluded.items())},
    }


def _ensemble_from_dict(data: Dict[str, Any], forest: HonestForest) -> FiducialEnsemble:
    weights = data["weights"]
    return FiducialEnsemble(
        draws=[FiducialDraw(int(d["tree_index"]), np.asarray(d["leaf_values"], dtype=float), float(d["sigma"]))
               for d in data["draws"]],
        weights=FiducialWeights(
            log_weights=np.asarray(weights["log_weights"], dtype=float),
            weights=np.asarray(weights["weights"], dtype=float),
            tree_indices=np.asarray(weights["tree_indices"], dtype=np.int64),
        ),
        forest=forest,
        excluded={int(k): v for k, v in data["excluded"].items()},
    )


def archive_to_dict(archive: ModelArchive) -> Dict[str, Any]:
    forest = archive.forest
    data = forest.dataset
    return {
        "format_version": archive.format_version,
        "master_seed": int(archive.master_seed),
        "params": forest.params.to_dict(),
        "fingerprint": dataset_fingerprint(data),
        "dataset": {
            "features": data.features.tolist(),
            "response": data.response.tolist(),
            "row_ids": data.row_ids.tolist(),
            "feature_names": data.feature_names,
        },
        "trees": [_tree_to_dict(tree) for tree in forest.trees],
        "ensemble": _ensemble_to_dict(archive.ensemble) if archive.ensemble is not None else None,
    }


def archive_from_dict(doc: Dict[str, Any]) -> ModelArchive:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"archive format_version {version!r} is not supported (expected {FORMAT_VERSION})")

    ds = doc["dataset"]
    dataset = Dataset(
        features=np.asarray(ds["features"], dtype=float),
        response=np.asarray(ds["response"], dtype=float),
        row_ids=np.asarray(ds["row_ids"], dtype=np.int64),
        feature_names=ds["feature_names"],
    )
    if dataset_fingerprint(dataset) != doc["fingerprint"]:
        raise ArchiveParseError("archived dataset does not match its fingerprint")

    forest = HonestForest(
        trees=[_tree_from_dict(t) for t in doc["trees"]],
        dataset=dataset,
        params=ForestParams(**doc["params"]),
    )
    ensemble = _ensemble_from_dict(doc["ensemble"], forest) if doc.get("ensemble") else None
    return ModelArchive(forest=forest, master_seed=int(doc["master_seed"]), ensemble=ensemble,
                        format_version=version)


def save_model(archive: ModelArchive, path: str) -> None:
    """
    Write the archive as JSON

    Floats are written in shortest round-trip form, so loading reproduces
    every value bit-exactly. The file is written to a temporary sibling and
    moved into place.
    """
    doc = archive_to_dict(archive)
    tmp_path = f"{path}.tmp"
    try:
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        with open(tmp_path, "w", encoding="utf-8") as f:
            json.dump(doc, f, allow_nan=False)
        os.replace(tmp_path, path)
    except (OSError, ValueError) as e:
        logger.error(f"Failed to save model to {path}: {e}")
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise ReportWriteError(f"cannot write model archive {path}: {e}") from e
    logger.info(f"Saved model archive with {archive.forest.n_trees} trees to {path}")


def load_model(path: str) -> ModelArchive:
    """Read an archive written by save_model"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as e:
        raise ArchiveParseError(f"cannot read model archive {path}: {e}") from e
    except ValueError as e:
        raise ArchiveParseError(f"model archive {path} is not valid JSON: {e}") from e

    if not isinstance(doc, dict):
        raise ArchiveParseError(f"model archive {path} does not hold a JSON object")
    try:
        archive = archive_from_dict(doc)
    except UnsupportedVersionError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ArchiveParseError(f"model archive {path} is malformed: {e}") from e
    logger.info(f"Loaded model archive with {archive.forest.n_trees} trees from {path}")
    return archive
