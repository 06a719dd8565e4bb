"""Matrix completion with denoising.

Upper level: fit the observed entries of the denoised matrix ``V`` with a
matrix ``X`` inside a nuclear-norm ball.  Lower level: denoise the noisy
observations ``M`` with a pseudo-Huber penalty while staying close to
``X``::

    f(X, V) = 1/|O| sum_O (X_ij - V_ij)^2
    g(X, V) = 1/|O| sum_O (V_ij - M_ij)^2 + lam1 R(V) + lam2 ||X - V||_F^2
    R(V)    = sum_ij delta^2 (sqrt(1 + (V_ij / delta)^2) - 1)

The same observation set ``O`` is used in both levels.  The lower variable
is the flattened ``V`` (length ``n*n``), the upper variable the ``n x n``
matrix ``X``.  ``g`` is separable over entries, so its Hessian in ``V`` is
diagonal and the cross block is ``-2 lam2 I``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..geometry import NuclearBall, nuclear_norm
from ..oracle import BilevelOracle, ProblemConstants

# max |d^3/dv^3 of delta^2 (sqrt(1 + (v/delta)^2) - 1)| * delta, attained at v = delta/2
_HUBER_THIRD = 3 * 0.5 * 1.25 ** -2.5


def pseudo_huber(V, delta: float) -> float:
    return float(np.sum(delta**2 * (np.sqrt(1.0 + (V / delta) ** 2) - 1.0)))


def pseudo_huber_grad(V, delta: float) -> np.ndarray:
    return V / np.sqrt(1.0 + (V / delta) ** 2)


def pseudo_huber_curvature(V, delta: float) -> np.ndarray:
    return (1.0 + (V / delta) ** 2) ** -1.5


@dataclass(eq=False)
class MatrixCompletionProblem(BilevelOracle):
    M: np.ndarray
    mask: np.ndarray
    Xhat: np.ndarray
    alpha: float
    lambda1: float = 0.05
    lambda2: float = 0.05
    delta: float = 0.9
    # provenance, carried into the serialized header
    r: int = 0
    noise: float = 0.0
    obs_prob: float = 1.0
    seed: int = 0

    has_closed_form = True

    def __post_init__(self):
        self.M = np.asarray(self.M, dtype=float)
        self.Xhat = np.asarray(self.Xhat, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        n = self.M.shape[0]
        if self.M.shape != (n, n) or self.mask.shape != (n, n) or self.Xhat.shape != (n, n):
            raise ValueError("M, mask and Xhat must be n x n")
        if not self.lambda2 > 0:
            raise ValueError("lambda2 must be positive for a strongly convex lower level")
        self.n = n
        self.omega_count = int(self.mask.sum())
        if self.omega_count == 0:
            raise ValueError("observation set is empty")
        self._w = self.mask.astype(float) * (2.0 / self.omega_count)
        self.feasible_set = NuclearBall(n, n, float(self.alpha))
        self.y_dim = n * n

    def _V(self, y):
        return np.asarray(y, dtype=float).reshape(self.n, self.n)

    # objectives --------------------------------------------------------
    def upper_value(self, x, y):
        D = (x - self._V(y))[self.mask]
        return float(D @ D) / self.omega_count

    def lower_value(self, x, y):
        V = self._V(y)
        R = (V - self.M)[self.mask]
        return (float(R @ R) / self.omega_count
                + self.lambda1 * pseudo_huber(V, self.delta)
                + self.lambda2 * float(np.sum((x - V) ** 2)))

    def grad_f_x(self, x, y):
        return self._w * (x - self._V(y))

    def grad_f_y(self, x, y):
        return -self.grad_f_x(x, y).ravel()

    def grad_g_y(self, x, y):
        V = self._V(y)
        G = (self._w * (V - self.M)
             + self.lambda1 * pseudo_huber_grad(V, self.delta)
             - 2.0 * self.lambda2 * (x - V))
        return G.ravel()

    def hessian_diag(self, y) -> np.ndarray:
        V = self._V(y)
        d = self._w + self.lambda1 * pseudo_huber_curvature(V, self.delta) + 2.0 * self.lambda2
        return d.ravel()

    def hvp_gyy(self, x, y, v):
        return self.hessian_diag(y) * np.asarray(v, dtype=float)

    def jvp_gyx(self, x, y, w):
        return -2.0 * self.lambda2 * np.asarray(w, dtype=float).reshape(self.n, self.n)

    # closed forms ------------------------------------------------------
    def inner_argmin(self, x, tol: float = 1e-13, max_iters: int = 10_000):
        """Entrywise minimizer of the separable, strongly convex lower level."""
        c = self.constants_basic()
        step = 2.0 / (c.mu_g + c.L_g)
        y = np.asarray(x, dtype=float).ravel().copy()
        for _ in range(max_iters):
            g = self.grad_g_y(x, y)
            if np.max(np.abs(g)) <= tol * c.L_g:
                break
            y -= step * g
        # Newton polish; the Hessian is diagonal
        for _ in range(3):
            y -= self.grad_g_y(x, y) / self.hessian_diag(y)
        return y

    def true_hypergradient(self, x):
        y = self.inner_argmin(x)
        v = self.grad_f_y(x, y) / self.hessian_diag(y)
        return self.grad_f_x(x, y) - self.jvp_gyx(x, y, v)

    def ell(self, x) -> float:
        return self.upper_value(x, self.inner_argmin(x))

    def normalized_error(self, X) -> float:
        return mc_normalized_error(self, X)

    def constants_basic(self) -> ProblemConstants:
        mu = 2.0 * self.lambda2
        L = 2.0 / self.omega_count + self.lambda1 + 2.0 * self.lambda2
        return ProblemConstants(mu_g=mu, L_g=L, D_X=self.feasible_set.diameter)

    def constants(self) -> ProblemConstants:
        base = self.constants_basic()
        a2 = 2.0 / self.omega_count
        C_yx = 2.0 * self.lambda2
        L_y = C_yx / base.mu_g
        # sup of ||grad_y f(x, y*(x))|| over the ball, by Lipschitz continuity from x = 0
        x0 = np.zeros((self.n, self.n))
        g0 = float(np.linalg.norm(self.grad_f_y(x0, self.inner_argmin(x0))))
        C_y_f = (a2 + a2 * L_y) * self.alpha + g0
        return ProblemConstants(
            mu_g=base.mu_g, L_g=base.L_g, D_X=base.D_X,
            C_yx_g=C_yx, L_yy_g=self.lambda1 * _HUBER_THIRD / self.delta, L_yx_g=0.0,
            L_xx_f=a2, L_xy_f=a2, L_yx_f=a2, L_yy_f=a2, C_y_f=C_y_f,
        )


def mc_generate(n: int = 250, r: int = 10, noise: float = 0.5, obs_prob: float = 0.8,
                seed: int = 0, lambda1: float = 0.05, lambda2: float = 0.05,
                delta: float = 0.9) -> MatrixCompletionProblem:
    """Synthetic low-rank-plus-noise instance.

    ``Xhat = W W^T`` with ``W`` an ``n x r`` standard normal matrix,
    ``M = Xhat + noise (L + L^T)`` with ``L`` standard normal, and every
    entry observed independently with probability ``obs_prob``.  The
    nuclear radius is ``||Xhat||_*``.
    """
    if not 0 < obs_prob <= 1:
        raise ValueError("obs_prob must lie in (0, 1]")
    if not 1 <= r <= n:
        raise ValueError("need 1 <= r <= n")
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((n, r))
    Xhat = W @ W.T
    L = rng.standard_normal((n, n))
    M = Xhat + noise * (L + L.T)
    mask = rng.random((n, n)) < obs_prob
    if obs_prob == 1:
        mask[:] = True
    return MatrixCompletionProblem(
        M=M, mask=mask, Xhat=Xhat, alpha=nuclear_norm(Xhat),
        lambda1=lambda1, lambda2=lambda2, delta=delta,
        r=r, noise=noise, obs_prob=obs_prob, seed=seed)


def mc_oracle(p: MatrixCompletionProblem) -> MatrixCompletionProblem:
    return p


def mc_normalized_error(p: MatrixCompletionProblem, X) -> float:
    """Observed-entry squared error relative to the ground truth."""
    if p.omega_count == 0:
        raise ValueError("observation set is empty")
    D = (np.asarray(X) - p.Xhat)[p.mask]
    T = p.Xhat[p.mask]
    return float(D @ D) / float(T @ T)


# serialization ---------------------------------------------------------

def save_problem(p: MatrixCompletionProblem, stem) -> tuple[Path, Path]:
    """Write ``<stem>.json`` (header) and ``<stem>.bin`` (raw float64 LE blob).

    The blob holds ``M``, ``Xhat`` and the 0/1 observation mask, each
    ``n*n`` values in row-major order.
    """
    stem = Path(stem)
    blob = np.concatenate([p.M.ravel(), p.Xhat.ravel(), p.mask.ravel().astype(float)])
    raw = blob.astype("<f8").tobytes()
    header = {
        "format": "ibcg-matrix-completion/1",
        "n": p.n, "r": p.r, "noise": p.noise, "obs_prob": p.obs_prob, "seed": p.seed,
        "omega_count": p.omega_count, "alpha": p.alpha,
        "lambda1": p.lambda1, "lambda2": p.lambda2, "delta": p.delta,
        "layout": ["M", "Xhat", "mask"], "dtype": "<f8",
        "sha256": hashlib.sha256(raw).hexdigest(),
    }
    hdr_path, bin_path = stem.with_suffix(".json"), stem.with_suffix(".bin")
    hdr_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    bin_path.write_bytes(raw)
    return hdr_path, bin_path


def load_problem(stem) -> MatrixCompletionProblem:
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    raw = stem.with_suffix(".bin").read_bytes()
    if hashlib.sha256(raw).hexdigest() != header["sha256"]:
        raise ValueError(f"checksum mismatch for {stem}.bin")
    n = header["n"]
    blob = np.frombuffer(raw, dtype="<f8").astype(float)
    if blob.size != 3 * n * n:
        raise ValueError("blob size does not match header")
    M, Xhat, mask = (blob[i * n * n:(i + 1) * n * n].reshape(n, n) for i in range(3))
    p = MatrixCompletionProblem(
        M=M, mask=mask > 0.5, Xhat=Xhat, alpha=header["alpha"],
        lambda1=header["lambda1"], lambda2=header["lambda2"], delta=header["delta"],
        r=header["r"], noise=header["noise"], obs_prob=header["obs_prob"], seed=header["seed"])
    if p.omega_count != header["omega_count"]:
        raise ValueError("observation count does not match header")
    return p
