"""Small dense linear-algebra kernel shared by the solvers and problems.

Points of the upper-level space are plain ``numpy`` arrays (vectors or
matrices); the shape of the array is the shape descriptor.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class ShapeMismatchError(ValueError):
    pass


def as_point(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


def _check_shapes(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")


def inner(a, b) -> float:
    """Euclidean / Frobenius inner product of two points of equal shape."""
    a, b = as_point(a), as_point(b)
    _check_shapes(a, b)
    return float(np.dot(a.ravel(), b.ravel()))


def axpy(alpha: float, a, b) -> np.ndarray:
    """Return ``alpha * a + b``."""
    a, b = as_point(a), as_point(b)
    _check_shapes(a, b)
    return alpha * a + b


def norm(a) -> float:
    return float(np.linalg.norm(as_point(a).ravel()))


@dataclass(frozen=True)
class SingularTriple:
    sigma: float
    u: np.ndarray
    v: np.ndarray
    converged: bool
    iterations: int


def top_singular_triple(C, tol: float = 1e-9, max_iters: int = 1000,
                        seed: int = 0) -> SingularTriple:
    """Leading singular triple of ``C`` by power iteration on ``C^T C``.

    The start vector comes from ``numpy.random.default_rng(seed)`` so the
    result is a deterministic function of ``(C, tol, max_iters, seed)``.
    Iteration stops once the relative change of sigma drops below ``tol``.

    Raises
    ------
    ValueError
        If ``C`` is all zeros or contains non-finite entries.
    """
    C = as_point(C)
    if C.ndim != 2:
        raise ValueError("top_singular_triple expects a matrix")
    if not np.all(np.isfinite(C)):
        raise ValueError("matrix has non-finite entries")
    if not np.any(C):
        raise ValueError("matrix is identically zero")
    if tol <= 0 or max_iters < 1:
        raise ValueError("need tol > 0 and max_iters >= 1")

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(C.shape[1])
    v /= np.linalg.norm(v)
    Cv = C @ v
    sigma = np.linalg.norm(Cv)
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        z = C.T @ Cv
        nz = np.linalg.norm(z)
        if nz == 0.0:
            # start vector landed in the null space; restart along a row of C
            z = C[np.argmax(np.abs(C).sum(axis=1))].copy()
            nz = np.linalg.norm(z)
        v = z / nz
        Cv = C @ v
        new_sigma = np.linalg.norm(Cv)
        if abs(new_sigma - sigma) <= tol * new_sigma:
            sigma = new_sigma
            converged = True
            break
        sigma = new_sigma
    u = Cv / sigma
    return SingularTriple(float(sigma), u, v, converged, it)


def finite_diff_grad(fn: Callable[[np.ndarray], float], x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function, same shape as ``x``."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = as_point(x)
    flat = x.ravel().copy()
    grad = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(flat.reshape(x.shape))
        flat[i] = orig - h
        fm = fn(flat.reshape(x.shape))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value at coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(x.shape)


def finite_diff_jvp(fn: Callable[[np.ndarray], np.ndarray], x, direction,
                    h: float = 1e-6) -> np.ndarray:
    """Central-difference directional derivative of a vector-valued map."""
    x, d = as_point(x), as_point(direction)
    _check_shapes(x, d)
    fp = as_point(fn(x + h * d))
    fm = as_point(fn(x - h * d))
    return (fp - fm) / (2.0 * h)
