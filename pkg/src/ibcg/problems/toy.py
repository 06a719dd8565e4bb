"""Planar coreset toy problem.

Find the point of the convex hull of four planar points, seen through a
linear map ``A``, that is closest to a target ``x0``::

    min_{lam in simplex(4)}  1/2 ||theta(lam) - x0||^2
    theta(lam) = argmin_theta 1/2 ||A theta - X lam||^2

Everything is available in closed form, which makes this the reference
instance for the hypergradient and tracking checks.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ..geometry import Simplex
from ..oracle import BilevelOracle, ProblemConstants

PUBLISHED_X = np.array([[1.0, 0.0, -1.0, 0.0],
                        [0.0, 1.0, 0.0, -1.0]])
DEFAULT_TARGET = np.array([2.0, 2.0])


def _random_orthogonal(rng, n=2):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


class ToyCoresetProblem(BilevelOracle):
    has_closed_form = True

    def __init__(self, A, X, target=DEFAULT_TARGET):
        self.A = np.asarray(A, dtype=float)
        self.X = np.asarray(X, dtype=float)
        self.target = np.asarray(target, dtype=float)
        if self.A.shape != (2, 2) or self.X.shape != (2, 4) or self.target.shape != (2,):
            raise ValueError("toy problem needs A (2x2), X (2x4), target (2,)")
        self.H = self.A.T @ self.A
        eig = np.linalg.eigvalsh(self.H)
        if eig[0] <= 0:
            raise ValueError("A must have full rank")
        self.mu_g, self.L_g = float(eig[0]), float(eig[-1])
        self._chol = cho_factor(self.H)
        self.AtX = self.A.T @ self.X
        self.feasible_set = Simplex(4)
        self.y_dim = 2

    # objectives --------------------------------------------------------
    def upper_value(self, x, y):
        d = np.asarray(y) - self.target
        return 0.5 * float(d @ d)

    def lower_value(self, x, y):
        r = self.A @ y - self.X @ x
        return 0.5 * float(r @ r)

    def grad_f_x(self, x, y):
        return np.zeros(4)

    def grad_f_y(self, x, y):
        return np.asarray(y, dtype=float) - self.target

    def grad_g_y(self, x, y):
        return self.A.T @ (self.A @ y - self.X @ x)

    def hvp_gyy(self, x, y, v):
        return self.H @ v

    def jvp_gyx(self, x, y, w):
        return -(self.AtX.T @ w)

    # closed forms ------------------------------------------------------
    def inner_argmin(self, x):
        return cho_solve(self._chol, self.AtX @ x)

    def tracking_target(self, x):
        """Solution ``v(x)`` of the quadratic ``H v = grad_y f(x, y*(x))``."""
        return cho_solve(self._chol, self.grad_f_y(x, self.inner_argmin(x)))

    def true_hypergradient(self, x):
        return self.AtX.T @ self.tracking_target(x)

    def ell(self, x) -> float:
        return self.upper_value(x, self.inner_argmin(x))

    def reduced_map(self) -> np.ndarray:
        """The 2x4 matrix ``B`` with ``theta*(lam) = B lam``."""
        return cho_solve(self._chol, self.AtX)

    def constants(self) -> ProblemConstants:
        B = self.reduced_map()
        c_y_f = max(np.linalg.norm(B[:, i] - self.target) for i in range(4))
        return ProblemConstants(
            mu_g=self.mu_g, L_g=self.L_g, D_X=self.feasible_set.diameter,
            C_yx_g=float(np.linalg.norm(self.AtX, 2)),
            L_yy_g=0.0, L_yx_g=0.0,
            L_xx_f=0.0, L_xy_f=0.0, L_yx_f=0.0, L_yy_f=1.0,
            C_y_f=float(c_y_f),
        )


def toy_make(mu_g: float = 1.0, L_g: float = 1.0, seed: int = 0,
             layout: str = "random", target=DEFAULT_TARGET) -> ToyCoresetProblem:
    """Build a toy instance whose ``A^T A`` has spectrum ``{mu_g, L_g}``.

    ``A = Q diag(sqrt(mu_g), sqrt(L_g)) P^T``.  With ``layout="published"``
    ``Q = P = I`` and ``X`` is the fixed diamond ``[e1, e2, -e1, -e2]``;
    with ``layout="random"`` ``Q``, ``P`` and the columns of ``X`` come from
    ``numpy.random.default_rng(seed)``.
    """
    if not 0 < mu_g <= L_g:
        raise ValueError("need 0 < mu_g <= L_g")
    D = np.diag([np.sqrt(mu_g), np.sqrt(L_g)])
    if layout == "published":
        return ToyCoresetProblem(D, PUBLISHED_X, target)
    if layout != "random":
        raise ValueError(f"unknown layout {layout!r}")
    rng = np.random.default_rng(seed)
    Q, P = _random_orthogonal(rng), _random_orthogonal(rng)
    X = rng.standard_normal((2, 4))
    return ToyCoresetProblem(Q @ D @ P.T, X, target)


def toy_inner_argmin(p: ToyCoresetProblem, lam) -> np.ndarray:
    return p.inner_argmin(lam)


def toy_true_hypergradient(p: ToyCoresetProblem, lam) -> np.ndarray:
    return p.true_hypergradient(lam)


def face_enumeration_optimum(p: ToyCoresetProblem):
    """Minimize the reduced quadratic over the 4-simplex by visiting faces.

    For every nonempty support ``S`` the affine-constrained minimizer of
    ``1/2 ||B lam - x0||^2`` over ``{lam_S summing to 1}`` is computed by
    least squares; feasible candidates are compared.  Returns
    ``(lam*, ell*)``.
    """
    B = p.reduced_map()
    best_val, best_lam = np.inf, None
    for size in range(1, 5):
        for S in itertools.combinations(range(4), size):
            S = list(S)
            BS = B[:, S]
            # minimize ||BS mu - x0|| s.t. sum(mu) = 1 via the KKT system
            K = np.zeros((size + 1, size + 1))
            K[:size, :size] = BS.T @ BS
            K[:size, size] = 1.0
            K[size, :size] = 1.0
            rhs = np.concatenate([BS.T @ p.target, [1.0]])
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            mu = sol[:size]
            if np.any(mu < -1e-12):
                continue
            lam = np.zeros(4)
            lam[S] = np.maximum(mu, 0.0)
            lam /= lam.sum()
            val = p.ell(lam)
            if val < best_val:
                best_val, best_lam = val, lam
    return best_lam, float(best_val)
