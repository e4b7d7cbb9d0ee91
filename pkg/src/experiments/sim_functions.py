"""
Synthetic regression functions used by the coverage studies
"""

from typing import Callable, Dict, Tuple

import numpy as np

from src.core.errors import InvalidInputError


def _cosine(X: np.ndarray) -> np.ndarray:
    return 3.0 * np.cos(np.pi * (X[:, 0] + X[:, 1]))


def _xor(X: np.ndarray) -> np.ndarray:
    high = X[:, :4] > 0.6
    return 5.0 * (high[:, 0] ^ high[:, 1]) + 1.0 * (high[:, 2] ^ high[:, 3])


def _and(X: np.ndarray) -> np.ndarray:
    return 10.0 * np.all(X[:, :4] > 0.3, axis=1)


# name -> (active dimension, vectorised function)
SIM_FUNCTIONS: Dict[str, Tuple[int, Callable[[np.ndarray], np.ndarray]]] = {
    "cosine": (2, _cosine),
    "xor": (4, _xor),
    "and": (4, _and),
}


def active_dimension(name: str) -> int:
    """Number of leading features the function depends on"""
    if name not in SIM_FUNCTIONS:
        raise InvalidInputError(f"unknown test function '{name}', expected one of {sorted(SIM_FUNCTIONS)}")
    return SIM_FUNCTIONS[name][0]


def evaluate_function(name: str, X: np.ndarray) -> np.ndarray:
    """Evaluate a test function on every row of X"""
    dim = active_dimension(name)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] < dim:
        raise InvalidInputError(f"'{name}' needs at least {dim} features, got {X.shape[1]}")
    return SIM_FUNCTIONS[name][1](X).astype(float)


def test_function(name: str, x: np.ndarray) -> float:
    """Evaluate a test function at one feature vector"""
    return float(evaluate_function(name, np.asarray(x, dtype=float).reshape(1, -1))[0])


# Keep pytest from collecting the function when tests import it
test_function.__test__ = False
