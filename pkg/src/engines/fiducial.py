"""
Generalized fiducial weights and ensembles over an honest random forest

The fiducial probability of a tree is computed in the log domain from its
leaf count and SSE; ensembles are built by repeatedly drawing a tree by
weight, a noise scale from the chi-square law of SSE/sigma^2, and fresh leaf
values from a resample of rows the tree was not grown on.
"""

from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from joblib import Parallel, delayed
from scipy.special import gammaln, logsumexp

from src.core.errors import (
    InvalidInputError, InvalidDofError, DegenerateFitError, NoValidModelError, InsufficientDataError
)
from src.core.honest_trees import (
    Dataset, HonestForest, HonestTree, _check_query, _check_query_matrix, _leaf_means_with_fallback
)
from src.core.random_streams import (
    RandomStream, PHASE_ENSEMBLE, PHASE_INTERVAL,
    cumulative_weights, sample_categorical_from_cdf, sample_chi_square,
    sample_normal_array, sample_without_replacement
)

logger = logging.getLogger(__name__)

SSE_FLOOR_FACTOR = 1e-12
MIN_VARIANCE = 1e-30
DRAW_CHUNK = 64


@dataclass(frozen=True)
class FiducialWeights:
    """Log and normalized fiducial weights of the eligible trees"""
    log_weights: np.ndarray
    weights: np.ndarray
    tree_indices: np.ndarray  # forest index of each eligible tree


@dataclass
class FiducialDraw:
    """One (tree, resampled leaf values, sigma) sample"""
    tree_index: int
    leaf_values: np.ndarray
    sigma: float

    def __post_init__(self):
        self.leaf_values = np.asarray(self.leaf_values, dtype=float)
        if not np.all(np.isfinite(self.leaf_values)):
            raise InvalidInputError(f"draw for tree {self.tree_index} has non-finite leaf values")
        if not math.isfinite(self.sigma) or self.sigma < 0:
            raise InvalidInputError(f"draw sigma must be finite and non-negative, got {self.sigma}")


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float
    level: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise InvalidInputError(f"interval lower {self.lower} exceeds upper {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass
class FiducialEnsemble:
    """M fiducial draws plus the weights they were drawn from"""
    draws: List[FiducialDraw]
    weights: FiducialWeights
    forest: HonestForest
    excluded: Dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.draws:
            raise InvalidInputError("an ensemble needs at least one draw")
        for draw in self.draws:
            if not 0 <= draw.tree_index < self.forest.n_trees:
                raise InvalidInputError(f"draw references unknown tree {draw.tree_index}")
            expected = self.forest.trees[draw.tree_index].leaf_count
            if draw.leaf_values.shape[0] != expected:
                raise InvalidInputError(f"draw for tree {draw.tree_index} has {draw.leaf_values.shape[0]} "
                                        f"leaf values, tree has {expected} leaves")

    @property
    def M(self) -> int:
        return len(self.draws)

    @property
    def sigma_samples(self) -> np.ndarray:
        return np.array([draw.sigma for draw in self.draws])

    @property
    def n_features(self) -> int:
        return self.forest.dataset.p

    def predict_draws(self, X: np.ndarray) -> np.ndarray:
        """
        Matrix of fiducial tree predictions

        Returns:
            (M, q) array; entry [i, k] is draw i's tree with its resampled
            leaf values evaluated at row k of X
        """
        X = _check_query_matrix(X, self.n_features)
        out = np.empty((self.M, X.shape[0]))
        by_tree: Dict[int, List[int]] = defaultdict(list)
        for i, draw in enumerate(self.draws):
            by_tree[draw.tree_index].append(i)
        for tree_index, members in by_tree.items():
            leaves = self.forest.trees[tree_index].structure.apply(X)
            block = np.vstack([self.draws[i].leaf_values for i in members])
            out[members] = block[:, leaves]
        return out


def sse_floor(n: int, response: np.ndarray) -> float:
    """SSE below which a fit is treated as degenerate"""
    return SSE_FLOOR_FACTOR * n * max(float(np.var(response)), MIN_VARIANCE)


def log_weight(n: int, l: int, sse: float, floor: float = 0.0) -> float:
    """
    Unnormalized log fiducial weight of a tree

    log R(T) = lgamma((n-l-1)/2) - (l/2) log n - ((n-l)/2 - 1) log SSE - ((n-l)/2) log pi

    Args:
        n: number of training rows
        l: number of leaves
        sse: sum of squared errors over the training rows
        floor: SSE at or below which the fit is degenerate

    Returns:
        log R(T)
    """
    if n - l - 1 < 2:
        raise InvalidDofError(f"log weight needs n - l - 1 >= 2, got n={n}, l={l}")
    if not math.isfinite(sse) or sse <= floor or sse <= 0.0:
        raise DegenerateFitError(f"SSE {sse!r} is at or below the degenerate-fit floor {floor!r}")
    residual_dof = n - l
    return float(gammaln((residual_dof - 1) / 2.0)
                 - 0.5 * l * math.log(n)
                 - (residual_dof / 2.0 - 1.0) * math.log(sse)
                 - (residual_dof / 2.0) * math.log(math.pi))


def normalize_weights(log_weights: Sequence[float]) -> np.ndarray:
    """Softmax of log weights via log-sum-exp"""
    lw = np.asarray(log_weights, dtype=float)
    if lw.ndim != 1 or lw.size == 0:
        raise InvalidInputError("cannot normalize an empty weight vector")
    if not np.all(np.isfinite(lw)):
        raise InvalidInputError("log weights must be finite")
    weights = np.exp(lw - logsumexp(lw))
    return weights / weights.sum()


def compute_weights(forest: HonestForest, data: Optional[Dataset] = None) -> Tuple[FiducialWeights, Dict[int, str]]:
    """
    Fiducial weights of every eligible tree in the forest

    Trees whose fit is degenerate or that leave too few residual degrees of
    freedom are excluded with a warning. The forest is not modified; see
    with_log_weights.

    Returns:
        (FiducialWeights over eligible trees, {tree index: exclusion reason})
    """
    data = data if data is not None else forest.dataset
    n = data.n
    floor = sse_floor(n, data.response)

    eligible: List[int] = []
    log_weights: List[float] = []
    excluded: Dict[int, str] = {}
    for j, tree in enumerate(forest.trees):
        try:
            lw = log_weight(n, tree.leaf_count, tree.sse, floor)
            if n - tree.leaf_count < 3:
                raise InvalidDofError(f"sigma draw needs n - l >= 3, got n={n}, l={tree.leaf_count}")
        except (InvalidDofError, DegenerateFitError) as e:
            excluded[j] = str(e)
            logger.warning(f"Excluding tree {j} from the fiducial ensemble: {e}")
            continue
        eligible.append(j)
        log_weights.append(lw)

    if not eligible:
        raise NoValidModelError(f"all {forest.n_trees} trees were excluded from the fiducial ensemble")

    lw = np.asarray(log_weights)
    weights = FiducialWeights(log_weights=lw, weights=normalize_weights(lw),
                              tree_indices=np.asarray(eligible, dtype=np.int64))
    return weights, excluded


def with_log_weights(forest: HonestForest, weights: FiducialWeights) -> HonestForest:
    """Copy of the forest whose trees carry their log weight (None when excluded)"""
    by_tree = dict(zip(weights.tree_indices.tolist(), weights.log_weights.tolist()))
    trees = [replace(tree, log_weight=by_tree.get(j)) for j, tree in enumerate(forest.trees)]
    return HonestForest(trees=trees, dataset=forest.dataset, params=forest.params)


def draw_sigma(stream: RandomStream, sse: float, n: int, l: int) -> float:
    """Draw sigma with SSE / sigma^2 ~ chi-square(n - l)"""
    if n - l < 3:
        raise InvalidDofError(f"sigma draw needs n - l >= 3, got n={n}, l={l}")
    if not math.isfinite(sse) or sse <= 0.0:
        raise DegenerateFitError(f"sigma draw needs a positive SSE, got {sse!r}")
    chi2 = sample_chi_square(stream, n - l)
    return math.sqrt(sse / chi2)


def resample_pool(tree: HonestTree, n: int) -> np.ndarray:
    """Row positions not used to grow the tree"""
    return np.setdiff1d(np.arange(n), tree.grow_rows, assume_unique=True)


def resample_leaves(tree: HonestTree,
                    data: Dataset,
                    sigma: float,
                    stream: RandomStream,
                    pool: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Fresh leaf values for one fiducial draw

    floor(n/4) rows are drawn without replacement from the pool; each leaf
    gets the mean of the drawn responses routed to it (ancestor fallback
    when it receives none) plus its own sigma * z.
    """
    if pool is None:
        pool = resample_pool(tree, data.n)
    else:
        pool = np.asarray(pool, dtype=np.int64)
        if np.intersect1d(pool, tree.grow_rows).size:
            raise InvalidInputError("resample pool must exclude the tree's grow rows")
    k = data.n // 4
    if pool.size < k or k < 1:
        raise InsufficientDataError(f"resample pool has {pool.size} rows, need {k}")

    drawn = pool[sample_without_replacement(stream, pool.size, k)]
    structure = tree.structure
    means, _ = _leaf_means_with_fallback(structure, structure.apply(data.features[drawn]), data.response[drawn])
    return means + sigma * sample_normal_array(stream, structure.leaf_count)


def _draw_chunk(forest: HonestForest,
                data: Dataset,
                weights: FiducialWeights,
                cdf: np.ndarray,
                stream: RandomStream,
                indices: range) -> List[FiducialDraw]:
    draws = []
    for i in indices:
        draw_stream = stream.spawn(PHASE_ENSEMBLE, i)
        tree_index = int(weights.tree_indices[sample_categorical_from_cdf(draw_stream, cdf)])
        tree = forest.trees[tree_index]
        sigma = draw_sigma(draw_stream, tree.sse, data.n, tree.leaf_count)
        leaf_values = resample_leaves(tree, data, sigma, draw_stream)
        draws.append(FiducialDraw(tree_index, leaf_values, sigma))
    return draws


def generate_ensemble(forest: HonestForest,
                      data: Dataset,
                      M: int,
                      stream: RandomStream,
                      n_jobs: int = 1) -> FiducialEnsemble:
    """
    Generate M fiducial draws from a trained honest forest

    Draw i uses the substream [PHASE_ENSEMBLE, i] for the tree choice, the
    sigma draw, the row resample and the leaf noise, so the ensemble does not
    depend on n_jobs.

    Args:
        forest: honest forest trained on `data`
        data: training dataset
        M: number of draws
        stream: parent stream
        n_jobs: joblib worker count

    Returns:
        FiducialEnsemble over a copy of the forest with log weights filled
    """
    if M < 1:
        raise InvalidInputError(f"draw count must be >= 1, got {M}")
    weights, excluded = compute_weights(forest, data)
    cdf = cumulative_weights(weights.weights)
    if excluded:
        logger.warning(f"{len(excluded)} of {forest.n_trees} trees excluded from the ensemble")
    logger.info(f"Generating {M} fiducial draws from {weights.tree_indices.size} eligible trees "
                f"(max weight {weights.weights.max():.4f})")

    chunks = [range(start, min(start + DRAW_CHUNK, M)) for start in range(0, M, DRAW_CHUNK)]
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_draw_chunk)(forest, data, weights, cdf, stream, chunk) for chunk in chunks
    )
    draws = [draw for chunk in results for draw in chunk]
    return FiducialEnsemble(draws=draws, weights=weights, forest=with_log_weights(forest, weights),
                            excluded=excluded)


def point_estimate(ensemble: FiducialEnsemble, x: np.ndarray) -> float:
    """Average of the fiducial tree predictions at x"""
    x = _check_query(x, ensemble.n_features)
    return float(ensemble.predict_draws(x.reshape(1, -1))[:, 0].mean())


def point_estimates(ensemble: FiducialEnsemble, X: np.ndarray) -> np.ndarray:
    return ensemble.predict_draws(X).mean(axis=0)


def _check_q(q: float) -> None:
    if not 0.0 <= q <= 1.0:
        raise InvalidInputError(f"percentile position must be in [0, 1], got {q}")


def _type7(sorted_values: np.ndarray, q: float):
    # 1-based rank h = (m-1)q + 1, applied along axis 0
    m = sorted_values.shape[0]
    h = (m - 1) * q + 1
    k = int(math.floor(h))
    if k >= m:
        return sorted_values[m - 1]
    return sorted_values[k - 1] + (h - k) * (sorted_values[k] - sorted_values[k - 1])


def percentile(values: Sequence[float], q: float) -> float:
    """
    Sample quantile by the type-7 rule

    With sorted values v_1..v_m and h = (m-1)q + 1, returns
    v_floor(h) + (h - floor(h)) (v_floor(h)+1 - v_floor(h)).
    """
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise InvalidInputError("percentile of an empty vector")
    _check_q(q)
    return float(_type7(v, q))


def _check_level(level: float) -> None:
    if not 0.0 < level < 1.0:
        raise InvalidInputError(f"interval level must be in (0, 1), got {level}")


def _tail_positions(level: float) -> Tuple[float, float]:
    alpha = 1.0 - level
    return alpha / 2.0, 1.0 - alpha / 2.0


def _intervals_from_samples(samples: np.ndarray, level: float) -> List[Interval]:
    """Column-wise type-7 intervals of an (M, q) sample matrix"""
    ordered = np.sort(samples, axis=0)
    q_lo, q_hi = _tail_positions(level)
    lower = np.atleast_1d(_type7(ordered, q_lo))
    upper = np.atleast_1d(_type7(ordered, q_hi))
    return [Interval(float(lo), float(hi), level) for lo, hi in zip(lower, upper)]


def confidence_interval(ensemble: FiducialEnsemble, x: np.ndarray, level: float) -> Interval:
    """Percentile interval for f(x) from the fiducial tree predictions"""
    _check_level(level)
    x = _check_query(x, ensemble.n_features)
    return _intervals_from_samples(ensemble.predict_draws(x.reshape(1, -1)), level)[0]


def confidence_intervals(ensemble: FiducialEnsemble, X: np.ndarray, level: float) -> List[Interval]:
    _check_level(level)
    return _intervals_from_samples(ensemble.predict_draws(X), level)


def prediction_interval(ensemble: FiducialEnsemble,
                        x: np.ndarray,
                        level: float,
                        stream: RandomStream) -> Interval:
    """
    Percentile interval for a future response at x: T~(x) + sigma~ z with fresh z per draw

    Same as row 0 of prediction_intervals with the same stream.
    """
    x = _check_query(x, ensemble.n_features)
    return prediction_intervals(ensemble, x.reshape(1, -1), level, stream)[0]


def prediction_intervals(ensemble: FiducialEnsemble,
                         X: np.ndarray,
                         level: float,
                         stream: RandomStream) -> List[Interval]:
    """prediction_interval for every row of X; row k uses substream [PHASE_INTERVAL, k]"""
    _check_level(level)
    predictions = ensemble.predict_draws(X)
    sigmas = ensemble.sigma_samples
    noisy = np.empty_like(predictions)
    for k in range(predictions.shape[1]):
        z = sample_normal_array(stream.spawn(PHASE_INTERVAL, k), ensemble.M)
        noisy[:, k] = predictions[:, k] + sigmas * z
    return _intervals_from_samples(noisy, level)


def sigma_interval(ensemble: FiducialEnsemble, level: float) -> Interval:
    """Percentile interval for the noise scale from the sigma~ sample"""
    _check_level(level)
    return _intervals_from_samples(ensemble.sigma_samples.reshape(-1, 1), level)[0]
