"""
Deterministic, splittable random streams keyed by (master seed, path)

Each stream is a Philox counter-based generator whose key is derived from a
numpy SeedSequence built from the master seed and the path labels, so any
substream can be recreated independently of the order in which work runs.
"""

from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple
import logging

import numpy as np

from src.core.errors import (
    InvalidInputError, InvalidRangeError, InvalidSizeError, InvalidWeightsError, InvalidDofError
)

logger = logging.getLogger(__name__)

MAX_SEED = 2 ** 64
MAX_LABEL = 2 ** 32

# Phase labels used as the first path element by the compute modules
PHASE_DATA = 1
PHASE_FOREST = 2
PHASE_ENSEMBLE = 3
PHASE_INTERVAL = 4
PHASE_SPLIT = 5
PHASE_PROBE = 6

WEIGHT_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class StreamKey:
    """Identity of a random stream"""
    master_seed: int
    path: Tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < MAX_SEED:
            raise InvalidInputError(f"master seed must be a 64-bit unsigned integer, got {self.master_seed}")
        for label in self.path:
            if not 0 <= int(label) < MAX_LABEL:
                raise InvalidInputError(f"stream label must be a 32-bit unsigned integer, got {label}")

    def child(self, *labels: int) -> "StreamKey":
        return StreamKey(self.master_seed, self.path + tuple(int(l) for l in labels))


class RandomStream:
    """
    Single-owner source of variates for one StreamKey

    `counter` counts the variates handed out so far. Replaying the same key
    with the same sequence of calls reproduces every value bit-exactly.
    """

    def __init__(self, key: StreamKey):
        self.key = key
        self.counter = 0
        seed_seq = np.random.SeedSequence(entropy=key.master_seed, spawn_key=key.path)
        self._generator = np.random.Generator(np.random.Philox(seed_seq))

    def spawn(self, *labels: int) -> "RandomStream":
        """Create the substream whose path extends this one by `labels`"""
        return RandomStream(self.key.child(*labels))

    def _advance(self, count: int) -> None:
        self.counter += int(count)

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.key.master_seed}, path={list(self.key.path)}, counter={self.counter})"


def make_stream(master_seed: int, path: Iterable[int] = ()) -> RandomStream:
    """
    Create the stream for (master_seed, path)

    Args:
        master_seed: 64-bit unsigned seed
        path: ordered 32-bit labels, e.g. [phase, tree_index, draw_index]

    Returns:
        A fresh RandomStream with counter 0
    """
    return RandomStream(StreamKey(int(master_seed), tuple(int(l) for l in path)))


def _check_range(lo: float, hi: float) -> None:
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo >= hi:
        raise InvalidRangeError(f"uniform range requires finite lo < hi, got [{lo}, {hi})")


def sample_uniform(stream: RandomStream, lo: float = 0.0, hi: float = 1.0) -> float:
    """Draw one value from U[lo, hi)"""
    _check_range(lo, hi)
    value = lo + (hi - lo) * stream._generator.random()
    stream._advance(1)
    # Rounding can land exactly on hi for wide ranges
    if value >= hi:
        value = float(np.nextafter(hi, lo))
    return float(value)


def sample_uniform_array(stream: RandomStream, lo: float, hi: float, size) -> np.ndarray:
    """Vectorised sample_uniform; advances the counter by the number of values"""
    _check_range(lo, hi)
    values = lo + (hi - lo) * stream._generator.random(size)
    stream._advance(np.prod(size))
    return np.minimum(values, np.nextafter(hi, lo))


def sample_normal(stream: RandomStream) -> float:
    """Draw one standard normal variate"""
    value = stream._generator.standard_normal()
    stream._advance(1)
    return float(value)


def sample_normal_array(stream: RandomStream, size) -> np.ndarray:
    """Vectorised sample_normal"""
    values = stream._generator.standard_normal(size)
    stream._advance(np.prod(size))
    return values


def sample_chi_square(stream: RandomStream, dof: int) -> float:
    """
    Draw a chi-square variate with `dof` degrees of freedom

    Uses the gamma route (2 * Gamma(dof/2)). Zero is redrawn so the result
    is strictly positive.
    """
    if int(dof) != dof or dof < 1:
        raise InvalidDofError(f"chi-square degrees of freedom must be a positive integer, got {dof}")
    while True:
        value = 2.0 * stream._generator.standard_gamma(dof / 2.0)
        stream._advance(1)
        if value > 0.0:
            return float(value)


def sample_without_replacement(stream: RandomStream, population: int, k: int) -> np.ndarray:
    """
    Draw k distinct indices from range(population), every k-subset equally likely

    Returns:
        int64 array of length k, in draw order
    """
    if population < 1:
        raise InvalidSizeError(f"population must be positive, got {population}")
    if k < 0 or k > population:
        raise InvalidSizeError(f"cannot draw {k} items from a population of {population}")
    indices = stream._generator.choice(population, size=k, replace=False).astype(np.int64)
    stream._advance(k)
    assert np.unique(indices).size == k, "duplicate index in sample without replacement"
    return indices


def validate_weights(weights: Sequence[float]) -> np.ndarray:
    """Check a probability vector and return it as a float array"""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise InvalidWeightsError("weights must be a non-empty vector")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InvalidWeightsError(f"weights must be finite and non-negative, got {w}")
    total = w.sum()
    if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
        raise InvalidWeightsError(f"weights must sum to 1 (got {total!r})")
    return w


def _categorical_index(cdf: np.ndarray, u: float) -> int:
    # Intervals are (cdf[i-1], cdf[i]] so boundary ties fall to the lower index
    # and zero-weight entries are never chosen.
    idx = int(np.searchsorted(cdf, 1.0 - u, side="left"))
    return min(idx, cdf.size - 1)


def cumulative_weights(weights: Sequence[float]) -> np.ndarray:
    """Cumulative vector used by categorical sampling, last entry pinned to 1"""
    w = validate_weights(weights)
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    # Trailing zero weights share the final boundary; pin them all to 1
    cdf[cdf >= 1.0] = 1.0
    return cdf


def sample_categorical(stream: RandomStream, weights: Sequence[float]) -> int:
    """
    Draw index i with probability weights[i] by inverse CDF with one uniform
    """
    cdf = cumulative_weights(weights)
    u = stream._generator.random()
    stream._advance(1)
    return _categorical_index(cdf, u)


def sample_categorical_from_cdf(stream: RandomStream, cdf: np.ndarray) -> int:
    """sample_categorical for a precomputed cumulative vector (hot loops)"""
    u = stream._generator.random()
    stream._advance(1)
    return _categorical_index(cdf, u)
