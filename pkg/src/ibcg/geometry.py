"""Feasible sets with linear minimization and Euclidean projection oracles.

Every set exposes ``lmo(c)`` (a minimizer of ``<c, s>`` over the set),
``project(z)`` and its diameter ``D_X``.  Ties in argmin/argmax are broken
toward the smallest index so that traces are reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import as_point, inner, top_singular_triple


def project_simplex(z, radius: float = 1.0) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum(x) = radius}``.

    Sort-based: with ``u`` sorted descending, take the largest ``j`` with
    ``u_j - (sum_{i<=j} u_i - radius) / j > 0`` and clip at that threshold.
    """
    z = as_point(z)
    u = np.sort(z)[::-1]
    css = np.cumsum(u) - radius
    idx = np.arange(1, z.size + 1)
    cond = u - css / idx > 0
    j = idx[cond][-1]
    tau = css[j - 1] / j
    return np.maximum(z - tau, 0.0)


def project_l1_ball(z, radius: float) -> np.ndarray:
    z = as_point(z)
    if np.abs(z).sum() <= radius:
        return z.copy()
    return np.sign(z) * project_simplex(np.abs(z), radius)


class FeasibleSet:
    shape: tuple
    diameter: float

    def lmo(self, c, seed: int = 0) -> np.ndarray:
        raise NotImplementedError

    def project(self, z) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x, tol: float = 1e-9) -> bool:
        raise NotImplementedError

    def default_point(self) -> np.ndarray:
        raise NotImplementedError

    def random_point(self, rng) -> np.ndarray:
        """A feasible point obtained by projecting a Gaussian sample."""
        return self.project(rng.standard_normal(self.shape))

    def _check(self, c):
        c = as_point(c)
        if c.shape != self.shape:
            raise ValueError(f"expected shape {self.shape}, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("direction has non-finite entries")
        return c


@dataclass(frozen=True)
class Simplex(FeasibleSet):
    dim: int

    @property
    def shape(self):
        return (self.dim,)

    @property
    def diameter(self) -> float:
        return math.sqrt(2.0)

    def lmo(self, c, seed: int = 0):
        c = self._check(c)
        s = np.zeros(self.dim)
        s[int(np.argmin(c))] = 1.0
        return s

    def project(self, z):
        return project_simplex(self._check(z))

    def contains(self, x, tol=1e-9):
        x = as_point(x)
        return bool(np.all(x >= -tol) and abs(x.sum() - 1.0) <= tol)

    def default_point(self):
        return np.full(self.dim, 1.0 / self.dim)

    def random_point(self, rng):
        return rng.dirichlet(np.ones(self.dim))


@dataclass(frozen=True)
class L1Ball(FeasibleSet):
    dim: int
    radius: float

    @property
    def shape(self):
        return (self.dim,)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def lmo(self, c, seed: int = 0):
        c = self._check(c)
        j = int(np.argmax(np.abs(c)))
        s = np.zeros(self.dim)
        s[j] = -self.radius * (1.0 if c[j] >= 0 else -1.0)
        return s

    def project(self, z):
        return project_l1_ball(self._check(z), self.radius)

    def contains(self, x, tol=1e-9):
        return bool(np.abs(as_point(x)).sum() <= self.radius + tol)

    def default_point(self):
        return np.zeros(self.dim)


@dataclass(frozen=True, eq=False)
class Box(FeasibleSet):
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, hi = as_point(self.lower), as_point(self.upper)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box needs lower <= upper with matching shapes")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def shape(self):
        return self.lower.shape

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def lmo(self, c, seed: int = 0):
        c = self._check(c)
        return np.where(c > 0, self.lower, self.upper)

    def project(self, z):
        return np.clip(self._check(z), self.lower, self.upper)

    def contains(self, x, tol=1e-9):
        x = as_point(x)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def default_point(self):
        return 0.5 * (self.lower + self.upper)


@dataclass(frozen=True)
class NuclearBall(FeasibleSet):
    """``{S : ||S||_* <= radius}``; the diameter is taken in Frobenius norm."""

    rows: int
    cols: int
    radius: float
    power_tol: float = 1e-9
    power_max_iters: int = 1000

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def lmo(self, c, seed: int = 0):
        c = self._check(c)
        if not np.any(c):
            return np.zeros(self.shape)
        t = top_singular_triple(c, self.power_tol, self.power_max_iters, seed)
        return -self.radius * np.outer(t.u, t.v)

    def project(self, z):
        z = self._check(z)
        U, s, Vt = np.linalg.svd(z, full_matrices=False)
        if s.sum() <= self.radius:
            return z.copy()
        s = project_l1_ball(s, self.radius)
        return (U * s) @ Vt

    def contains(self, x, tol=1e-6):
        return bool(nuclear_norm(x) <= self.radius + tol)

    def default_point(self):
        return np.zeros(self.shape)


def nuclear_norm(x) -> float:
    return float(np.linalg.svd(as_point(x), compute_uv=False).sum())


def lmo(feasible_set: FeasibleSet, c, seed: int = 0) -> np.ndarray:
    return feasible_set.lmo(c, seed)


def project(feasible_set: FeasibleSet, z) -> np.ndarray:
    return feasible_set.project(z)


def fw_gap(feasible_set: FeasibleSet, x, grad, seed: int = 0) -> float:
    """Frank-Wolfe gap ``max_{s in X} <grad, x - s>``."""
    s = feasible_set.lmo(grad, seed)
    return inner(grad, x) - inner(grad, s)
