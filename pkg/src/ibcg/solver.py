"""Inexact bilevel conditional gradient (IBCG).

Each iteration takes one gradient step on the lower-level problem, one
gradient step on the quadratic whose minimizer is ``v(x) = H^{-1} grad_y f``
(``H = grad_yy g``), and a Frank-Wolfe step on the upper level along the
resulting hypergradient surrogate::

    w+ = w - eta (H(x, y) w - grad_y f(x, y))
    F  = grad_x f(x, y) - grad_yx g(x, y) w+
    s  = argmin_{s in X} <F, s>
    x+ = (1 - gamma) x + gamma s
    y+ = y - alpha grad_y g(x+, y)

Only one Hessian-vector product and one cross-Jacobian product are spent
per iteration.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import FeasibleSet
from .linalg import inner
from .oracle import BilevelOracle, ProblemConstants


class SolverError(RuntimeError):
    def __init__(self, message, k=None, component=None):
        super().__init__(message)
        self.k = k
        self.component = component


@dataclass(frozen=True)
class GammaPolicy:
    """Upper-level step size rule.

    ``kind`` is one of ``constant`` (``gamma = value``), ``convex``
    (``log(K)/K``), ``nonconvex`` (``1/sqrt(K)``) or ``scaled``
    (``value/sqrt(K)``).
    """

    kind: str
    value: float = 1.0

    KINDS = ("constant", "convex", "nonconvex", "scaled")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown gamma policy {self.kind!r}")

    @classmethod
    def constant(cls, gamma: float) -> "GammaPolicy":
        return cls("constant", gamma)

    @classmethod
    def convex(cls) -> "GammaPolicy":
        return cls("convex")

    @classmethod
    def nonconvex(cls) -> "GammaPolicy":
        return cls("nonconvex")

    @classmethod
    def scaled(cls, factor: float) -> "GammaPolicy":
        return cls("scaled", factor)

    @classmethod
    def parse(cls, text: str) -> "GammaPolicy":
        """Parse ``convex``, ``nonconvex``, ``constant:0.1`` or ``scaled:0.25``."""
        kind, _, val = text.strip().partition(":")
        if kind in ("constant", "scaled"):
            if not val:
                raise ValueError(f"gamma policy {kind!r} needs a value, e.g. {kind}:0.25")
            return cls(kind, float(val))
        if val:
            raise ValueError(f"gamma policy {kind!r} takes no value")
        return cls(kind)

    def __str__(self):
        return f"{self.kind}:{self.value!r}" if self.kind in ("constant", "scaled") else self.kind

    def gamma(self, K: int) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind == "convex":
            return math.log(K) / K
        if self.kind == "nonconvex":
            return 1.0 / math.sqrt(K)
        return self.value / math.sqrt(K)


@dataclass(frozen=True)
class StepSchedule:
    gamma: float
    alpha: float
    eta: float
    K: int
    mu_g: float
    beta: float
    policy: GammaPolicy = GammaPolicy.convex()

    @property
    def rho(self) -> float:
        return 1.0 - self.eta * self.mu_g


def resolve_schedule(c: ProblemConstants, K: int, gamma_policy: GammaPolicy | str = "convex",
                     eta_fraction: float = 0.5) -> StepSchedule:
    """Step sizes from the problem constants.

    ``alpha = 2/(mu_g + L_g)`` and ``eta = eta_fraction (1 - beta)/mu_g`` with
    ``beta = (L_g - mu_g)/(L_g + mu_g)``; ``gamma`` follows the policy.
    """
    if isinstance(gamma_policy, str):
        gamma_policy = GammaPolicy.parse(gamma_policy)
    if not 0 < eta_fraction < 1:
        raise ValueError("eta_fraction must lie in (0, 1)")
    if K < 1:
        raise ValueError("K must be >= 1")
    if not c.mu_g > 0 or c.L_g < c.mu_g:
        raise ValueError("need mu_g > 0 and L_g >= mu_g")
    beta = c.beta
    gamma = gamma_policy.gamma(K)
    if not 0 <= gamma <= 1:
        raise ValueError(f"gamma={gamma} outside [0, 1]")
    return StepSchedule(gamma=gamma, alpha=2.0 / (c.mu_g + c.L_g),
                        eta=eta_fraction * (1.0 - beta) / c.mu_g, K=K,
                        mu_g=c.mu_g, beta=beta, policy=gamma_policy)


@dataclass(frozen=True)
class IbcgState:
    k: int
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    last_F: Optional[np.ndarray] = None
    last_s: Optional[np.ndarray] = None


def initial_state(x0, y0) -> IbcgState:
    y0 = np.asarray(y0, dtype=float)
    return IbcgState(0, np.asarray(x0, dtype=float), y0, y0.copy())


def hypergradient_surrogate(oracle: BilevelOracle, sched: StepSchedule, x, y, w):
    """Tracking update of ``w`` and the surrogate ``F``; returns ``(w+, F)``."""
    w_new = w - sched.eta * (oracle.hvp_gyy(x, y, w) - oracle.grad_f_y(x, y))
    F = oracle.grad_f_x(x, y) - oracle.jvp_gyx(x, y, w_new)
    return w_new, F


def ibcg_step(oracle: BilevelOracle, feasible_set: FeasibleSet, sched: StepSchedule,
              state: IbcgState, seed: int = 0) -> IbcgState:
    x, y, w = state.x, state.y, state.w
    w_new, F = hypergradient_surrogate(oracle, sched, x, y, w)
    if not np.all(np.isfinite(F)):
        bad = np.flatnonzero(~np.isfinite(np.ravel(F)))[0]
        raise SolverError(f"non-finite hypergradient surrogate at k={state.k}, entry {bad}",
                          k=state.k, component=int(bad))
    s = feasible_set.lmo(F, seed)
    g = sched.gamma
    x_new = (1.0 - g) * x + g * s
    y_new = y - sched.alpha * oracle.grad_g_y(x_new, y)
    return IbcgState(state.k + 1, x_new, y_new, w_new, F, s)


Hook = Callable[[int, IbcgState, np.ndarray, np.ndarray, float], None]


@dataclass
class IbcgResult:
    state: IbcgState
    iterations: int
    best_k: Optional[int]
    best_gap: float
    best_x: np.ndarray
    gaps: list = field(default_factory=list)
    stopped_by_time: bool = False


def run_ibcg(oracle: BilevelOracle, feasible_set: FeasibleSet, sched: StepSchedule,
             x0=None, y0=None, K: Optional[int] = None, hooks: Sequence[Hook] = (),
             seed: int = 0, time_limit_s: Optional[float] = None) -> IbcgResult:
    """Run ``K`` IBCG iterations from ``(x0, y0)`` with ``w0 = y0``.

    Every hook is called after each iteration as
    ``hook(k, state_k, F_k, s_k, elapsed)`` where ``state_k`` holds the
    iterate the step started from.  The result records the iterate with the
    smallest Frank-Wolfe gap measured with the surrogate ``F_k``.
    """
    K = sched.K if K is None else K
    x0 = feasible_set.default_point() if x0 is None else np.asarray(x0, dtype=float)
    if y0 is None:
        y0 = np.zeros(oracle.y_dim)
    state = initial_state(x0, y0)
    best_k, best_gap, best_x = None, math.inf, state.x
    gaps = []
    start = time.monotonic()
    stopped = False
    for k in range(K):
        if time_limit_s is not None and time.monotonic() - start >= time_limit_s:
            stopped = True
            break
        new = ibcg_step(oracle, feasible_set, sched, state, seed)
        gap = inner(new.last_F, state.x) - inner(new.last_F, new.last_s)
        gaps.append(gap)
        if gap < best_gap:
            best_k, best_gap, best_x = k, gap, state.x
        elapsed = time.monotonic() - start
        for hook in hooks:
            hook(k, state, new.last_F, new.last_s, elapsed)
        state = new
    return IbcgResult(state, state.k, best_k, best_gap, best_x, gaps, stopped)


def lemma2_bound(c: ProblemConstants, sched: StepSchedule, k: int, D0y: float,
                 w0_err: float, corrected: bool = False) -> Optional[float]:
    """Upper bound on ``||grad ell(x_k) - F_k||`` for constant step sizes.

    ``D0y = ||y0 - y*(x0)||`` and ``w0_err = ||w0 - v(x0)||``.  Needs the
    completed constant bundle (see ``derived_lipschitz_bundle``); returns
    ``None`` when a constant is missing.

    The ``D0y`` tracking term carries ``rho**(k+2)``.  Unrolling the ``w``
    recursion gives ``rho**(k+1)`` instead; the two differ by a factor
    ``rho`` and the smaller one can be beaten at ``k = 0`` when ``beta = 0``.
    ``corrected=True`` uses ``rho**(k+1)``.
    """
    need = (c.C_2, c.C_1, c.C_v, c.L_y_cap, c.C_yx_g)
    if any(v is None for v in need):
        return None
    beta, rho, eta, gamma, D = sched.beta, sched.rho, sched.eta, sched.gamma, c.D_X
    mu = c.mu_g
    gap = rho - beta
    if gap < 1e-12:
        # only reachable with a hand-made eta; the resolver keeps rho > beta
        warnings.warn(f"rho - beta = {gap:.3e} <= 1e-12; bound evaluated with 1e-12",
                      RuntimeWarning, stacklevel=2)
        gap = 1e-12
    power = k + 1 if corrected else k + 2
    lower = c.C_2 * (beta**k * D0y + gamma * beta * c.L_y_cap * D / (1 - beta))
    track = (rho ** (k + 1) * w0_err
             + gamma * rho * c.C_v * D / (1 - rho)
             + eta * c.C_1 * rho ** power * D0y / gap
             + gamma * beta * c.C_1 * c.L_y_cap * D / ((1 - rho) * mu))
    return lower + c.C_yx_g * track


def with_gamma(sched: StepSchedule, gamma: float) -> StepSchedule:
    return replace(sched, gamma=gamma, policy=GammaPolicy.constant(gamma))
