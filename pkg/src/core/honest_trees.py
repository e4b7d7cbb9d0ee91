"""
Greedy regression trees, honest leaf estimation and honest random forests
"""

from dataclasses import dataclass, field, replace
from typing import Dict, Any, List, Optional, Sequence, Tuple
import heapq
import logging
import math

import numpy as np
from joblib import Parallel, delayed

from src.core.errors import InvalidInputError, InsufficientDataError
from src.core.random_streams import RandomStream, PHASE_FOREST, sample_without_replacement

logger = logging.getLogger(__name__)

MIN_TRAINING_ROWS = 8
# Keeps n - l(T) - 1 >= 3 so the weight's gamma argument and the sigma dof stay valid
RESIDUAL_DOF_MARGIN = 4

# Per-tree SSE: within-leaf means refit on all n rows, or the honest leaf values
SSE_REFIT = "refit"
SSE_HONEST = "honest"
SSE_METHODS = (SSE_REFIT, SSE_HONEST)


@dataclass
class Dataset:
    """Numeric feature matrix plus response with stable row identities"""
    features: np.ndarray
    response: np.ndarray
    row_ids: np.ndarray
    feature_names: Optional[List[str]] = None

    def __post_init__(self):
        self.features = np.asfortranarray(np.asarray(self.features, dtype=float))
        self.response = np.asarray(self.response, dtype=float).ravel()
        self.row_ids = np.asarray(self.row_ids, dtype=np.int64).ravel()

        if self.features.ndim != 2:
            raise InvalidInputError(f"features must be a 2-D matrix, got shape {self.features.shape}")
        n, p = self.features.shape
        if n < 1 or p < 1:
            raise InvalidInputError(f"dataset needs n >= 1 and p >= 1, got n={n}, p={p}")
        if self.response.shape[0] != n or self.row_ids.shape[0] != n:
            raise InvalidInputError("features, response and row_ids must have the same number of rows")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.response))):
            raise InvalidInputError("dataset entries must all be finite")
        if np.unique(self.row_ids).size != n:
            raise InvalidInputError("row_ids must be unique")
        if self.feature_names is not None and len(self.feature_names) != p:
            raise InvalidInputError(f"expected {p} feature names, got {len(self.feature_names)}")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @classmethod
    def from_arrays(cls, features, response, row_ids=None, feature_names=None) -> "Dataset":
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        if row_ids is None:
            row_ids = np.arange(features.shape[0])
        return cls(features, response, row_ids, feature_names)

    def subset(self, rows: Sequence[int]) -> "Dataset":
        """Dataset restricted to the given row positions (identities kept)"""
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.features[rows], self.response[rows], self.row_ids[rows], self.feature_names)


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    value: float
    loss_reduction: float


@dataclass(frozen=True, eq=False)
class TreeStructure:
    """
    Array-encoded binary tree

    Node 0 is the root and every child id is larger than its parent's.
    Leaves have feature == -1; `leaf_index` maps node -> leaf number and
    `leaf_nodes` maps leaf number -> node. Routing goes left iff
    x[feature] <= threshold.
    """
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    parent: np.ndarray
    n_features: int
    leaf_index: np.ndarray = field(init=False)
    leaf_nodes: np.ndarray = field(init=False)

    def __post_init__(self):
        n_nodes = len(self.feature)
        if n_nodes == 0 or self.parent[0] != -1:
            raise InvalidInputError("tree must have a root at node 0")
        seen_as_child = np.zeros(n_nodes, dtype=int)
        for node in range(n_nodes):
            if self.feature[node] >= 0:
                if self.feature[node] >= self.n_features:
                    raise InvalidInputError(f"node {node} splits on feature {self.feature[node]} >= p")
                for child in (self.left[node], self.right[node]):
                    if not node < child < n_nodes or self.parent[child] != node:
                        raise InvalidInputError(f"node {node} has an invalid child {child}")
                    seen_as_child[child] += 1
            elif self.left[node] != -1 or self.right[node] != -1:
                raise InvalidInputError(f"leaf node {node} must not have children")
        if seen_as_child[0] != 0 or np.any(seen_as_child[1:] != 1):
            raise InvalidInputError("nodes do not form a single rooted binary tree")

        leaf_nodes = np.flatnonzero(self.feature < 0)
        leaf_index = np.full(n_nodes, -1, dtype=np.int64)
        leaf_index[leaf_nodes] = np.arange(leaf_nodes.size)
        object.__setattr__(self, "leaf_nodes", leaf_nodes)
        object.__setattr__(self, "leaf_index", leaf_index)

    @property
    def leaf_count(self) -> int:
        return int(self.leaf_nodes.size)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @classmethod
    def single_leaf(cls, n_features: int) -> "TreeStructure":
        return _TreeBuilder(n_features).freeze()

    @classmethod
    def from_splits(cls, splits: Sequence[Tuple[int, int, float]], n_features: int) -> "TreeStructure":
        """
        Build a tree from explicit splits applied in order

        Each split is (node_id, feature, value). The root is node 0 and each
        split appends its left then right child, so the first split creates
        nodes 1 and 2, the second 3 and 4, and so on.
        """
        builder = _TreeBuilder(n_features)
        for node, feature, value in splits:
            builder.split(int(node), int(feature), float(value))
        return builder.freeze()

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf number reached by every row of X"""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            current = node[active]
            go_left = X[active, self.feature[current]] <= self.threshold[current]
            node[active] = np.where(go_left, self.left[current], self.right[current])
            active = active[self.feature[node[active]] >= 0]
        return self.leaf_index[node]

    def route(self, x: np.ndarray) -> int:
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return int(self.leaf_index[node])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "feature": self.feature.tolist(),
            "threshold": [None if math.isnan(v) else float(v) for v in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "parent": self.parent.tolist(),
            "n_features": int(self.n_features),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TreeStructure":
        return cls(
            feature=np.asarray(data["feature"], dtype=np.int64),
            threshold=np.asarray([np.nan if v is None else v for v in data["threshold"]], dtype=float),
            left=np.asarray(data["left"], dtype=np.int64),
            right=np.asarray(data["right"], dtype=np.int64),
            parent=np.asarray(data["parent"], dtype=np.int64),
            n_features=int(data["n_features"]),
        )


class _TreeBuilder:
    """Mutable node lists that freeze into a TreeStructure"""

    def __init__(self, n_features: int):
        self.n_features = n_features
        self.feature = [-1]
        self.threshold = [np.nan]
        self.left = [-1]
        self.right = [-1]
        self.parent = [-1]
        self.leaf_count = 1

    def _add(self, parent: int) -> int:
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.parent.append(parent)
        return len(self.feature) - 1

    def split(self, node: int, feature: int, value: float) -> Tuple[int, int]:
        if self.feature[node] >= 0:
            raise InvalidInputError(f"node {node} is already split")
        left = self._add(node)
        right = self._add(node)
        self.feature[node] = feature
        self.threshold[node] = value
        self.left[node] = left
        self.right[node] = right
        self.leaf_count += 1
        return left, right

    def freeze(self) -> TreeStructure:
        return TreeStructure(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=float),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            parent=np.asarray(self.parent, dtype=np.int64),
            n_features=self.n_features,
        )


@dataclass(frozen=True)
class ForestParams:
    """Honest random forest hyperparameters"""
    n_trees: int = 1000
    min_node_size: int = 5
    mtry: Optional[int] = None
    max_leaves: Optional[int] = None
    sse: str = SSE_REFIT

    def __post_init__(self):
        if self.sse not in SSE_METHODS:
            raise InvalidInputError(f"sse must be one of {SSE_METHODS}, got '{self.sse}'")
        if self.n_trees < 1:
            raise InvalidInputError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.min_node_size < 1:
            raise InvalidInputError(f"min_node_size must be >= 1, got {self.min_node_size}")
        if self.mtry is not None and self.mtry < 1:
            raise InvalidInputError(f"mtry must be >= 1, got {self.mtry}")
        if self.max_leaves is not None and self.max_leaves < 1:
            raise InvalidInputError(f"max_leaves must be >= 1, got {self.max_leaves}")

    @classmethod
    def from_config(cls, config: Dict[str, Any], n_trees_key: str = "n_trees") -> "ForestParams":
        return cls(
            n_trees=int(config[n_trees_key]),
            min_node_size=int(config["min_node_size"]),
            mtry=config.get("mtry"),
            max_leaves=config.get("max_leaves"),
            sse=config.get("sse") or SSE_REFIT,
        )

    def resolve(self, n: int, p: int) -> "ForestParams":
        """Fill data-dependent defaults: mtry = ceil(sqrt(p)), max_leaves = floor(n/10)+1 capped at n-4"""
        mtry = self.mtry if self.mtry is not None else int(math.ceil(math.sqrt(p)))
        if mtry > p:
            raise InvalidInputError(f"mtry must be <= p ({p}), got {mtry}")
        max_leaves = self.max_leaves if self.max_leaves is not None else n // 10 + 1
        max_leaves = max(1, min(max_leaves, n - RESIDUAL_DOF_MARGIN))
        return replace(self, mtry=mtry, max_leaves=max_leaves)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_trees": self.n_trees,
            "min_node_size": self.min_node_size,
            "mtry": self.mtry,
            "max_leaves": self.max_leaves,
            "sse": self.sse,
        }


@dataclass
class HonestTree:
    """
    Tree structure with honest leaf estimates

    grow_rows and estimate_rows are disjoint row positions in the training
    Dataset (identities via dataset.row_ids[...]). sse is over all n rows,
    from refit leaf means or the honest leaf values per ForestParams.sse.
    """
    structure: TreeStructure
    leaf_values: np.ndarray
    leaf_counts: np.ndarray
    grow_rows: np.ndarray
    estimate_rows: np.ndarray
    sse: float = 0.0
    log_weight: Optional[float] = None

    @property
    def leaf_count(self) -> int:
        return self.structure.leaf_count


@dataclass
class HonestForest:
    """Honest trees sharing one training dataset and hyperparameters"""
    trees: List[HonestTree]
    dataset: Dataset
    params: ForestParams

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def _split_tolerance(parent_sse: float) -> float:
    return 1e-12 * parent_sse


def _best_split_arrays(X: np.ndarray,
                       y: np.ndarray,
                       candidate_features: Sequence[int],
                       min_node_size: int) -> Optional[SplitCandidate]:
    """best_split on raw arrays; X holds the node's rows"""
    m = y.shape[0]
    if m < 2 or m < 2 * min_node_size:
        return None

    # Centering keeps the sum-of-squares identity well conditioned
    yc = y - y.mean()
    parent_sse = float(yc @ yc)
    if parent_sse <= 0.0:
        return None
    tol = _split_tolerance(parent_sse)

    left_sizes = np.arange(1, m, dtype=float)
    right_sizes = m - left_sizes
    size_ok = (left_sizes >= min_node_size) & (right_sizes >= min_node_size)

    best: Optional[SplitCandidate] = None
    for feature in sorted(int(f) for f in candidate_features):
        order = np.argsort(X[:, feature], kind="mergesort")
        xs = X[order, feature]
        csum = np.cumsum(yc[order])
        total = csum[-1]
        left_sum = csum[:-1]
        right_sum = total - left_sum
        gain = left_sum ** 2 / left_sizes + right_sum ** 2 / right_sizes - total ** 2 / m

        valid = size_ok & (xs[:-1] < xs[1:])
        if not valid.any():
            continue
        gain = np.where(valid, gain, -np.inf)
        top = gain.max()
        # Smallest split value among (numerical) ties
        i = int(np.flatnonzero(gain >= top - tol)[0])
        if best is not None and gain[i] <= best.loss_reduction + tol:
            continue
        value = 0.5 * (xs[i] + xs[i + 1])
        if value >= xs[i + 1]:
            value = xs[i]
        best = SplitCandidate(feature, float(value), float(gain[i]))

    if best is None or best.loss_reduction <= tol:
        return None
    return best


def best_split(data: Dataset,
               rows: Sequence[int],
               candidate_features: Sequence[int],
               min_node_size: int) -> Optional[SplitCandidate]:
    """
    Find the squared-error split over candidate features

    Candidates are midpoints between consecutive distinct sorted values.
    Ties go to the lowest feature index, then the smallest split value.

    Args:
        data: training dataset
        rows: row positions in the node
        candidate_features: column indices to search
        min_node_size: minimum rows in each child

    Returns:
        SplitCandidate, or None when no admissible split reduces the loss
    """
    rows = np.asarray(rows, dtype=np.int64)
    return _best_split_arrays(data.features[rows], data.response[rows], candidate_features, min_node_size)


def grow_tree(data: Dataset,
              grow_rows: Sequence[int],
              params: ForestParams,
              stream: RandomStream) -> TreeStructure:
    """
    Grow a tree greedily on grow_rows

    Nodes are expanded best-first by loss reduction until no node can be
    split or max_leaves is reached. Each evaluated node draws mtry candidate
    features from the stream.
    """
    grow_rows = np.asarray(grow_rows, dtype=np.int64)
    if grow_rows.size < 1:
        raise InsufficientDataError("grow_tree needs at least one row")
    params = params.resolve(data.n, data.p) if params.mtry is None or params.max_leaves is None else params

    X, y = data.features, data.response
    builder = _TreeBuilder(data.p)
    heap: list = []

    def consider(node: int, rows: np.ndarray) -> None:
        if rows.size < max(2, 2 * params.min_node_size):
            return
        features = sample_without_replacement(stream, data.p, params.mtry)
        split = _best_split_arrays(X[rows], y[rows], features, params.min_node_size)
        if split is not None:
            # node id breaks ties so rows arrays are never compared
            heapq.heappush(heap, (-split.loss_reduction, node, split, rows))

    consider(0, grow_rows)
    while heap and builder.leaf_count < params.max_leaves:
        _, node, split, rows = heapq.heappop(heap)
        goes_left = X[rows, split.feature] <= split.value
        left, right = builder.split(node, split.feature, split.value)
        consider(left, rows[goes_left])
        consider(right, rows[~goes_left])

    return builder.freeze()


def _leaf_means_with_fallback(structure: TreeStructure,
                              leaves: np.ndarray,
                              response: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-leaf means; empty leaves take the mean of their nearest non-empty ancestor"""
    n_leaves = structure.leaf_count
    counts = np.bincount(leaves, minlength=n_leaves)
    sums = np.bincount(leaves, weights=response, minlength=n_leaves)

    node_counts = np.zeros(structure.n_nodes)
    node_sums = np.zeros(structure.n_nodes)
    node_counts[structure.leaf_nodes] = counts
    node_sums[structure.leaf_nodes] = sums
    # Children always have larger ids, so one reverse pass aggregates subtrees
    for node in range(structure.n_nodes - 1, 0, -1):
        parent = structure.parent[node]
        node_counts[parent] += node_counts[node]
        node_sums[parent] += node_sums[node]

    if node_counts[0] == 0:
        raise InsufficientDataError("no estimation rows reached the root")

    values = np.empty(n_leaves)
    for j, node in enumerate(structure.leaf_nodes):
        while node_counts[node] == 0:
            node = structure.parent[node]
        values[j] = node_sums[node] / node_counts[node]
    return values, counts.astype(np.int64)


def estimate_leaves(structure: TreeStructure,
                    data: Dataset,
                    rows: Optional[Sequence[int]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Honest leaf estimates from the estimation rows

    Args:
        structure: grown tree
        data: training dataset
        rows: estimation row positions (all rows when None)

    Returns:
        (leaf_values, leaf_counts); a leaf without estimation rows takes the
        mean of its nearest ancestor that has some, and its count is 0
    """
    if rows is None:
        X, y = data.features, data.response
    else:
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size < 1:
            raise InsufficientDataError("estimate_leaves needs at least one row")
        X, y = data.features[rows], data.response[rows]
    return _leaf_means_with_fallback(structure, structure.apply(X), y)


def _check_query(x: np.ndarray, n_features: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != n_features:
        raise InvalidInputError(f"expected a feature vector of length {n_features}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("feature vector contains non-finite entries")
    return x


def _check_query_matrix(X: np.ndarray, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != n_features:
        raise InvalidInputError(f"expected {n_features} feature columns, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("feature matrix contains non-finite entries")
    return X


def predict(tree: HonestTree, x: np.ndarray) -> float:
    """Leaf value of the leaf containing x"""
    x = _check_query(x, tree.structure.n_features)
    return float(tree.leaf_values[tree.structure.route(x)])


def predict_many(tree: HonestTree, X: np.ndarray) -> np.ndarray:
    X = _check_query_matrix(X, tree.structure.n_features)
    return tree.leaf_values[tree.structure.apply(X)]


def tree_sse(tree: HonestTree, data: Dataset) -> float:
    """Sum of squared errors of the honest predictions over every training row"""
    residual = data.response - tree.leaf_values[tree.structure.apply(data.features)]
    return float(residual @ residual)


def refit_sse(structure: TreeStructure, data: Dataset) -> float:
    """
    Sum of squared errors around within-leaf means refit on every training row

    This is the residual sum of squares of projecting the response onto the
    tree's leaf indicators, so it never exceeds tree_sse for the same structure.
    """
    leaves = structure.apply(data.features)
    means, _ = _leaf_means_with_fallback(structure, leaves, data.response)
    residual = data.response - means[leaves]
    return float(residual @ residual)


def _build_honest_tree(data: Dataset, params: ForestParams, stream: RandomStream, half: int) -> HonestTree:
    rows = sample_without_replacement(stream, data.n, 2 * half)
    grow_rows = np.sort(rows[:half])
    estimate_rows = np.sort(rows[half:])
    structure = grow_tree(data, grow_rows, params, stream)
    leaf_values, leaf_counts = estimate_leaves(structure, data, estimate_rows)
    tree = HonestTree(structure, leaf_values, leaf_counts, grow_rows, estimate_rows)
    if params.sse == SSE_REFIT:
        tree.sse = refit_sse(structure, data)
    else:
        tree.sse = tree_sse(tree, data)
    return tree


def train_forest(data: Dataset,
                 params: ForestParams,
                 stream: RandomStream,
                 n_jobs: int = 1) -> HonestForest:
    """
    Train an honest random forest

    Tree j uses the substream [PHASE_FOREST, j] of `stream` to draw disjoint
    grow and estimation subsamples of floor(n/4) rows each and to pick
    candidate features, so the forest does not depend on n_jobs.

    Args:
        data: training dataset (n >= 8)
        params: forest hyperparameters
        stream: parent stream
        n_jobs: joblib worker count

    Returns:
        HonestForest with sse filled for every tree (refit_sse or tree_sse)
    """
    if data.n < MIN_TRAINING_ROWS:
        raise InsufficientDataError(f"honest forests need n >= {MIN_TRAINING_ROWS}, got {data.n}")
    params = params.resolve(data.n, data.p)
    half = data.n // 4
    logger.info(f"Training {params.n_trees} honest trees on n={data.n}, p={data.p} "
                f"(subsample {half}, mtry {params.mtry}, min_node_size {params.min_node_size}, "
                f"max_leaves {params.max_leaves}, sse {params.sse})")

    trees = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_build_honest_tree)(data, params, stream.spawn(PHASE_FOREST, j), half)
        for j in range(params.n_trees)
    )

    for tree in trees:
        assert np.intersect1d(tree.grow_rows, tree.estimate_rows).size == 0, "grow/estimate overlap"

    return HonestForest(trees=list(trees), dataset=data, params=params)


def forest_predict(forest: HonestForest, x: np.ndarray) -> float:
    """Equal-weight average of the trees' honest predictions"""
    if not forest.trees:
        raise InvalidInputError("forest has no trees")
    return float(np.mean([predict(tree, x) for tree in forest.trees]))


def forest_predict_many(forest: HonestForest, X: np.ndarray) -> np.ndarray:
    if not forest.trees:
        raise InvalidInputError("forest has no trees")
    return np.mean([predict_many(tree, X) for tree in forest.trees], axis=0)
