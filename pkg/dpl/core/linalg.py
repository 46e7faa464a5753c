"""
dpl/core/linalg.py

Dense numeric primitives: validated vector/matrix construction, softmax,
Euclidean distance, L2 normalisation and a central finite-difference oracle.
All arithmetic is float64.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from dpl.core.errors import DegenerateInputError, DimensionError, NumericError

DenseVector = np.ndarray
DenseMatrix = np.ndarray


def as_vector(values: Iterable[float]) -> DenseVector:
    """Build a finite 1-D float64 vector."""
    vec = np.asarray(list(values) if not isinstance(values, np.ndarray) else values,
                     dtype=np.float64)
    if vec.ndim != 1:
        raise DimensionError(f"Expected a vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise NumericError("Vector contains non-finite entries")
    return vec


def as_matrix(values: Sequence[float] | np.ndarray, rows: int, cols: int) -> DenseMatrix:
    """Build a finite row-major float64 matrix of shape (rows, cols)."""
    flat = np.asarray(values, dtype=np.float64).reshape(-1)
    if flat.size != rows * cols:
        raise DimensionError(
            f"Matrix needs {rows}x{cols}={rows * cols} values, got {flat.size}")
    if not np.all(np.isfinite(flat)):
        raise NumericError("Matrix contains non-finite entries")
    return flat.reshape(rows, cols).copy()


def softmax(v: DenseVector) -> DenseVector:
    """Softmax over the last axis with max-subtraction."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0 or v.shape[-1] == 0:
        raise DimensionError("softmax of an empty vector")
    shifted = v - np.max(v, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(v: DenseVector) -> DenseVector:
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0 or v.shape[-1] == 0:
        raise DimensionError("log_softmax of an empty vector")
    shifted = v - np.max(v, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def euclidean_distance(u: DenseVector, v: DenseVector) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionError(f"Dimension mismatch: {u.shape} vs {v.shape}")
    return float(np.linalg.norm(u - v))


def l2_normalize(v: DenseVector) -> DenseVector:
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise DegenerateInputError("Cannot normalise a zero vector")
    return v / norm


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x), stable for large |x|."""
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Derivative of softplus."""
    return np.exp(-np.logaddexp(0.0, -x))


def finite_diff_grad(f: Callable[[DenseVector], float], x: DenseVector,
                     h: float = 1e-5) -> DenseVector:
    """
    Central finite-difference gradient of a scalar function.

    Args:
        f: Scalar function of a parameter vector
        x: Evaluation point (not modified)
        h: Step size, > 0

    Returns:
        (f(x + h e_i) - f(x - h e_i)) / (2h) for every coordinate i

    Raises:
        NumericError: If any evaluation of f is non-finite
    """
    if h <= 0:
        raise ValueError(f"Step size must be positive, got {h}")
    x = np.asarray(x, dtype=np.float64)
    point = x.astype(np.float64).reshape(-1).copy()
    grad = np.zeros_like(point)
    for i in range(point.size):
        original = point[i]
        point[i] = original + h
        f_plus = f(point.reshape(x.shape))
        point[i] = original - h
        f_minus = f(point.reshape(x.shape))
        point[i] = original
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"Non-finite function value at coordinate {i}")
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad.reshape(x.shape)
