"""Bilevel problem contract, problem constants and an oracle self-check.

A problem ``min_{x in X} f(x, y*(x))`` with ``y*(x) = argmin_y g(x, y)``
is described to the solvers by first- and second-order oracles.  Second
order information is only ever needed as matrix-vector products:

* ``hvp_gyy(x, y, v)`` is ``grad_yy g(x, y) @ v`` (a vector in R^m);
* ``jvp_gyx(x, y, w)`` is the n-by-m cross block ``grad_yx g(x, y)``
  applied to a vector ``w`` in R^m, so the result lives in the upper space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .linalg import finite_diff_grad, inner, norm


class BilevelOracle:
    """Base class for bilevel problems.

    Subclasses implement the six required oracles.  ``inner_argmin`` and
    ``true_hypergradient`` are optional; :attr:`has_closed_form` tells
    callers whether they are available.
    """

    has_closed_form = False

    def upper_value(self, x, y) -> float:
        raise NotImplementedError

    def lower_value(self, x, y) -> float:
        raise NotImplementedError

    def grad_f_x(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def grad_f_y(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def grad_g_y(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def hvp_gyy(self, x, y, v) -> np.ndarray:
        raise NotImplementedError

    def jvp_gyx(self, x, y, w) -> np.ndarray:
        raise NotImplementedError

    def inner_argmin(self, x) -> np.ndarray:
        raise NotImplementedError

    def true_hypergradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def constants(self) -> "ProblemConstants":
        raise NotImplementedError


class CountingOracle(BilevelOracle):
    """Transparent wrapper that counts oracle calls by name."""

    def __init__(self, oracle: BilevelOracle):
        self.wrapped = oracle
        self.has_closed_form = oracle.has_closed_form
        self.y_dim = getattr(oracle, "y_dim", None)
        self.counts: dict[str, int] = {}

    def count(self, name: str) -> int:
        return self.counts.get(name, 0)

    def _bump(self, name):
        self.counts[name] = self.counts.get(name, 0) + 1

    def upper_value(self, x, y):
        self._bump("upper_value")
        return self.wrapped.upper_value(x, y)

    def lower_value(self, x, y):
        self._bump("lower_value")
        return self.wrapped.lower_value(x, y)

    def grad_f_x(self, x, y):
        self._bump("grad_f_x")
        return self.wrapped.grad_f_x(x, y)

    def grad_f_y(self, x, y):
        self._bump("grad_f_y")
        return self.wrapped.grad_f_y(x, y)

    def grad_g_y(self, x, y):
        self._bump("grad_g_y")
        return self.wrapped.grad_g_y(x, y)

    def hvp_gyy(self, x, y, v):
        self._bump("hvp_gyy")
        return self.wrapped.hvp_gyy(x, y, v)

    def jvp_gyx(self, x, y, w):
        self._bump("jvp_gyx")
        return self.wrapped.jvp_gyx(x, y, w)

    def inner_argmin(self, x):
        self._bump("inner_argmin")
        return self.wrapped.inner_argmin(x)

    def true_hypergradient(self, x):
        self._bump("true_hypergradient")
        return self.wrapped.true_hypergradient(x)

    def constants(self):
        return self.wrapped.constants()


@dataclass(frozen=True)
class ProblemConstants:
    """Regularity constants of a bilevel problem.

    Only ``mu_g``, ``L_g`` and ``D_X`` are needed by the solvers.  The rest
    are optional and feed the error-bound diagnostics; ``None`` marks a
    constant that is unknown.  ``C_yx_g`` doubles as the Lipschitz constant
    of ``grad_y g`` in ``x`` and as the bound on ``||grad_yx g||``.
    """

    mu_g: float
    L_g: float
    D_X: float
    C_yx_g: Optional[float] = None
    L_yy_g: Optional[float] = None
    L_yx_g: Optional[float] = None
    L_xx_f: Optional[float] = None
    L_xy_f: Optional[float] = None
    L_yx_f: Optional[float] = None
    L_yy_f: Optional[float] = None
    C_y_f: Optional[float] = None
    # derived by derived_lipschitz_bundle
    L_y_cap: Optional[float] = None
    L_ell: Optional[float] = None
    C_v: Optional[float] = None
    C_1: Optional[float] = None
    C_2: Optional[float] = None

    def __post_init__(self):
        if not self.mu_g > 0:
            raise ValueError(f"mu_g must be positive, got {self.mu_g}")
        if self.L_g < self.mu_g:
            raise ValueError(f"L_g={self.L_g} is smaller than mu_g={self.mu_g}")
        if not self.D_X > 0:
            raise ValueError(f"D_X must be positive, got {self.D_X}")
        for f in fields(self):
            val = getattr(self, f.name)
            if val is not None and val < 0:
                raise ValueError(f"{f.name} must be nonnegative, got {val}")

    @property
    def beta(self) -> float:
        return (self.L_g - self.mu_g) / (self.L_g + self.mu_g)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _have(*vals) -> bool:
    return all(v is not None for v in vals)


def derived_lipschitz_bundle(c: ProblemConstants) -> ProblemConstants:
    """Fill in the derived constants that the supplied ones allow.

    * ``L_y_cap = C_yx_g / mu_g`` (Lipschitz constant of ``y*``);
    * ``C_v`` (Lipschitz constant of ``v(x)``);
    * ``L_ell`` (Lipschitz constant of the hypergradient);
    * ``C_1``, ``C_2`` (coefficients of the hypergradient error bound).

    Anything whose inputs are missing stays ``None``.
    """
    mu = c.mu_g
    L_y = c.C_yx_g / mu if _have(c.C_yx_g) else None
    C_v = None
    if _have(L_y, c.L_yx_f, c.L_yy_f, c.C_y_f, c.L_yy_g):
        C_v = (c.L_yx_f + c.L_yy_f * L_y) / mu + c.C_y_f * c.L_yy_g / mu**2 * (1 + L_y)
    L_ell = None
    if _have(C_v, c.L_xx_f, c.L_xy_f, c.L_yx_g):
        L_ell = (c.L_xx_f + c.L_xy_f * L_y + c.C_yx_g * C_v
                 + c.C_y_f / mu * c.L_yx_g * (1 + L_y))
    C_1 = c.L_yy_g * c.C_y_f / mu + c.L_yy_f if _have(c.L_yy_g, c.C_y_f, c.L_yy_f) else None
    C_2 = c.L_xy_f + c.L_yx_g * c.C_y_f / mu if _have(c.L_xy_f, c.L_yx_g, c.C_y_f) else None
    return replace(c, L_y_cap=L_y, C_v=C_v, L_ell=L_ell, C_1=C_1, C_2=C_2)


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self) -> str:
        return "\n".join(
            f"{'PASS' if c.passed else 'FAIL'} {c.name}: worst={c.worst:.3e} tol={c.tolerance:.1e}"
            for c in self.checks)


class OracleEvaluationError(RuntimeError):
    pass


def _rel_err(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(norm(a), norm(b))
    diff = norm(a - b)
    # absolute floor for gradients that vanish identically
    return 0.0 if diff <= 1e-9 else diff / scale


def validate_oracle(oracle: BilevelOracle, c: ProblemConstants, feasible_set,
                    seed: int = 0, trials: int = 50, h: float = 1e-6,
                    fd_tol: float = 1e-4, sym_tol: float = 1e-10,
                    n_directions: int = 3) -> ValidationReport:
    """Check the smoothness assumptions of a problem at random points.

    At each of ``trials`` random pairs (x feasible, y Gaussian) this checks

    * symmetry of ``hvp_gyy``;
    * Rayleigh quotients of ``hvp_gyy`` inside ``[mu_g, L_g]``;
    * ``grad_f_x`` / ``grad_f_y`` against finite differences of
      ``upper_value`` (coordinate-wise for small dimensions, along random
      directions otherwise);
    * ``hvp_gyy`` against finite differences of ``grad_g_y`` in y;
    * ``jvp_gyx`` against finite differences of ``grad_g_y`` in x.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = {"hvp_symmetry": 0.0, "spectral_bounds": 0.0, "grad_f_x": 0.0,
             "grad_f_y": 0.0, "hvp_gyy": 0.0, "jvp_gyx": 0.0}
    spec_tol = 1e-10 * max(1.0, c.L_g)

    for t in range(trials):
        x = feasible_set.random_point(rng)
        m = oracle.y_dim
        y = rng.standard_normal(m)
        try:
            u, v = rng.standard_normal(m), rng.standard_normal(m)
            Hu, Hv = oracle.hvp_gyy(x, y, u), oracle.hvp_gyy(x, y, v)
            a, b = inner(Hu, v), inner(Hv, u)
            sym = abs(a - b) / max(abs(a), abs(b), 1e-300)
            worst["hvp_symmetry"] = max(worst["hvp_symmetry"], sym)

            for vec, Hvec in ((u, Hu), (v, Hv)):
                q = inner(Hvec, vec) / inner(vec, vec)
                viol = max(c.mu_g - q, q - c.L_g, 0.0)
                worst["spectral_bounds"] = max(worst["spectral_bounds"], viol)

            gx, gy = oracle.grad_f_x(x, y), oracle.grad_f_y(x, y)
            worst["grad_f_x"] = max(worst["grad_f_x"], _grad_check(
                lambda xx: oracle.upper_value(xx, y), x, gx, rng, h, n_directions))
            worst["grad_f_y"] = max(worst["grad_f_y"], _grad_check(
                lambda yy: oracle.upper_value(x, yy), y, gy, rng, h, n_directions))

            d = rng.standard_normal(m)
            fd = (oracle.grad_g_y(x, y + h * d) - oracle.grad_g_y(x, y - h * d)) / (2 * h)
            worst["hvp_gyy"] = max(worst["hvp_gyy"], _rel_err(oracle.hvp_gyy(x, y, d), fd))

            w = rng.standard_normal(m)
            jw = oracle.jvp_gyx(x, y, w)
            for _ in range(n_directions):
                dx = rng.standard_normal(np.shape(x))
                fd = (inner(oracle.grad_g_y(x + h * dx, y), w)
                      - inner(oracle.grad_g_y(x - h * dx, y), w)) / (2 * h)
                worst["jvp_gyx"] = max(worst["jvp_gyx"], _rel_err(inner(jw, dx), fd))
        except Exception as exc:  # noqa: BLE001 - re-raised with the sampled point
            raise OracleEvaluationError(
                f"oracle failed at trial {t} (x={np.ravel(x)[:4]}..., y={y[:4]}...): {exc}"
            ) from exc

    report = ValidationReport()
    report.checks.append(CheckResult("hvp_symmetry", worst["hvp_symmetry"] <= sym_tol,
                                     worst["hvp_symmetry"], sym_tol))
    report.checks.append(CheckResult("spectral_bounds", worst["spectral_bounds"] <= spec_tol,
                                     worst["spectral_bounds"], spec_tol,
                                     f"Rayleigh quotients must lie in [{c.mu_g}, {c.L_g}]"))
    for name in ("grad_f_x", "grad_f_y", "hvp_gyy", "jvp_gyx"):
        report.checks.append(CheckResult(name, worst[name] <= fd_tol, worst[name], fd_tol))
    return report


def _grad_check(fn, x, grad, rng, h, n_directions, full_max: int = 64) -> float:
    x = np.asarray(x, dtype=float)
    if x.size <= full_max:
        return _rel_err(grad, finite_diff_grad(fn, x, h))
    worst = 0.0
    for _ in range(n_directions):
        d = rng.standard_normal(x.shape)
        d /= norm(d)
        fd = (fn(x + h * d) - fn(x - h * d)) / (2 * h)
        worst = max(worst, _rel_err(inner(grad, d), fd))
    return worst if math.isfinite(worst) else math.inf
