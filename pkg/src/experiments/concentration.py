"""
Empirical check that fiducial mass concentrates on the minimal true trees

A fixed family of candidate trees for the AND function is scored on data of
increasing size. The family holds every minimal true tree (the four 0.3
splits in each of the 24 orders, 5 leaves each), true trees refined by
splits on noise features, and wrong trees.
"""

from dataclasses import dataclass, field
from itertools import permutations
from typing import Dict, List, Sequence
import logging

import numpy as np

from src.core.errors import InvalidInputError
from src.core.honest_trees import Dataset, TreeStructure, refit_sse
from src.core.random_streams import make_stream, PHASE_DATA, sample_uniform_array, sample_normal_array
from src.engines.fiducial import log_weight, normalize_weights, sse_floor
from src.experiments.sim_functions import evaluate_function

logger = logging.getLogger(__name__)

AND_THRESHOLD = 0.3
NOISE_THRESHOLD = 0.5
MINIMAL_LEAVES = 5
MIN_SAMPLE_SIZE = 16

KIND_MINIMAL = "minimal"
KIND_SPURIOUS = "spurious"
KIND_WRONG = "wrong"


@dataclass(frozen=True)
class CandidateTree:
    label: str
    kind: str
    structure: TreeStructure


@dataclass
class ConcentrationTrace:
    """Fiducial mass on the minimal true trees at each sample size"""
    sample_sizes: List[int]
    masses: List[float]
    seed: int
    l0: int = MINIMAL_LEAVES
    family: Dict[str, int] = field(default_factory=dict)
    heaviest: List[str] = field(default_factory=list)

    def __post_init__(self):
        for mass in self.masses:
            if not 0.0 <= mass <= 1.0:
                raise InvalidInputError(f"mass {mass} outside [0, 1]")


def _chain(order: Sequence[int], threshold: float = AND_THRESHOLD) -> List[tuple]:
    # Each split refines the right child of the previous one: nodes 0, 2, 4, 6
    return [(2 * depth, feature, threshold) for depth, feature in enumerate(order)]


def and_candidate_family(p: int = 6) -> List[CandidateTree]:
    """
    Hand-built candidate trees for the AND function on p >= 6 features

    In a chain built by `_chain` node 1 is the first zero leaf and node
    2 * len(order) is the leaf where every active feature exceeds 0.3.
    """
    if p < 6:
        raise InvalidInputError(f"the AND candidate family needs p >= 6, got {p}")
    family: List[CandidateTree] = []
    for order in permutations(range(4)):
        label = "".join(str(f) for f in order)
        family.append(CandidateTree(f"minimal-{label}", KIND_MINIMAL,
                                    TreeStructure.from_splits(_chain(order), p)))

    identity = _chain((0, 1, 2, 3))
    reverse = _chain((3, 2, 1, 0))
    spurious = {
        "spurious-x5-in-active": identity + [(8, 4, NOISE_THRESHOLD)],
        "spurious-x6-in-zero": reverse + [(1, 5, NOISE_THRESHOLD)],
        "spurious-x5-x6-in-active": identity + [(8, 4, NOISE_THRESHOLD), (10, 5, NOISE_THRESHOLD)],
    }
    wrong = {
        "wrong-x1-at-0.5": [(0, 0, 0.5)] + identity[1:],
        "wrong-missing-x4": identity[:3],
        "wrong-noise-only": _chain((4, 5, 4, 5), NOISE_THRESHOLD),
    }
    for label, splits in spurious.items():
        family.append(CandidateTree(label, KIND_SPURIOUS, TreeStructure.from_splits(splits, p)))
    for label, splits in wrong.items():
        family.append(CandidateTree(label, KIND_WRONG, TreeStructure.from_splits(splits, p)))
    return family


def candidate_log_weights(family: Sequence[CandidateTree], data: Dataset) -> np.ndarray:
    """Log fiducial weight of each candidate with leaf means fitted on all rows"""
    floor = sse_floor(data.n, data.response)
    out = np.empty(len(family))
    for i, candidate in enumerate(family):
        structure = candidate.structure
        out[i] = log_weight(data.n, structure.leaf_count, refit_sse(structure, data), floor)
    return out


def theorem1_concentration(sample_sizes: Sequence[int],
                           seed: int,
                           sigma: float = 1.0,
                           p: int = 6) -> ConcentrationTrace:
    """
    Total normalized fiducial mass on the minimal true trees for each n

    Data at the i-th sample size come from the stream [PHASE_DATA, i]:
    X ~ U(0,1)^p, y = AND(x) + sigma * z.

    Args:
        sample_sizes: strictly increasing sizes, each >= 16
        seed: master seed
        sigma: noise scale (> 0)
        p: feature dimension

    Returns:
        ConcentrationTrace
    """
    sizes = [int(n) for n in sample_sizes]
    if not sizes:
        raise InvalidInputError("need at least one sample size")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InvalidInputError(f"sample sizes must be strictly increasing, got {sizes}")
    if sizes[0] < MIN_SAMPLE_SIZE:
        raise InvalidInputError(f"sample sizes must be >= {MIN_SAMPLE_SIZE}, got {sizes[0]}")
    if sigma <= 0:
        raise InvalidInputError(f"noise scale must be positive, got {sigma}")

    family = and_candidate_family(p)
    minimal = np.array([c.kind == KIND_MINIMAL for c in family])
    counts = {kind: sum(c.kind == kind for c in family) for kind in (KIND_MINIMAL, KIND_SPURIOUS, KIND_WRONG)}

    masses, heaviest = [], []
    for i, n in enumerate(sizes):
        stream = make_stream(seed, [PHASE_DATA, i])
        X = sample_uniform_array(stream, 0.0, 1.0, (n, p))
        y = evaluate_function("and", X) + sigma * sample_normal_array(stream, n)
        weights = normalize_weights(candidate_log_weights(family, Dataset.from_arrays(X, y)))
        mass = float(np.clip(weights[minimal].sum(), 0.0, 1.0))
        masses.append(mass)
        heaviest.append(family[int(np.argmax(weights))].label)
        logger.info(f"n={n}: mass on minimal true trees {mass:.4f} (heaviest {heaviest[-1]})")

    return ConcentrationTrace(sample_sizes=sizes, masses=masses, seed=int(seed),
                              family=counts, heaviest=heaviest)
