"""Comparison methods: SBFW (projection-free) and TTSA (projected).

Both approximate ``[grad_yy g]^{-1} grad_y f`` with a randomly truncated
Neumann series built from Hessian-vector products, so their per-iteration
cost grows with the truncation length.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import FeasibleSet
from .oracle import BilevelOracle, ProblemConstants


# Neumann-series inverse-Hessian estimators -------------------------------

def ttsa_t_max(k: int, L_g: float, mu_g: float) -> int:
    """Series length ``floor((L_g/mu_g) log(k+1))``."""
    return int(math.floor(L_g / mu_g * math.log(k + 1)))


def draw_truncation(rng: np.random.Generator, k: int, mode: str = "sbfw",
                    L_g: Optional[float] = None, mu_g: Optional[float] = None) -> int:
    """Random truncation length: ``l ~ U{1..k}`` (sbfw) or ``p ~ U{0..t_max-1}`` (ttsa)."""
    if mode == "sbfw":
        if k < 1:
            raise ValueError("SBFW truncation needs k >= 1")
        return int(rng.integers(1, k + 1))
    if mode == "ttsa":
        t_max = ttsa_t_max(k, L_g, mu_g)
        return int(rng.integers(0, t_max)) if t_max > 0 else 0
    raise ValueError(f"unknown mode {mode!r}")


def neumann_inverse_apply(oracle: BilevelOracle, x, y, rhs, k: int, L_g: float,
                          length: int, mode: str = "sbfw", mu_g: Optional[float] = None,
                          c_h: float = 1.0) -> np.ndarray:
    """Truncated Neumann estimate of ``[grad_yy g(x, y)]^{-1} rhs``.

    sbfw: ``(k/L_g) (I - H/L_g)^length rhs``.
    ttsa: ``(t_max c_h/L_g) (I - c_h H/L_g)^length rhs`` with
    ``t_max = floor((L_g/mu_g) log(k+1))``; zero when ``t_max == 0``.
    """
    out = np.array(rhs, dtype=float)
    if mode == "sbfw":
        scale, step = k / L_g, 1.0 / L_g
    elif mode == "ttsa":
        if mu_g is None:
            raise ValueError("ttsa mode needs mu_g")
        t_max = ttsa_t_max(k, L_g, mu_g)
        if t_max == 0:
            return np.zeros_like(out)
        scale, step = t_max * c_h / L_g, c_h / L_g
    else:
        raise ValueError(f"unknown mode {mode!r}")
    for _ in range(length):
        out = out - step * oracle.hvp_gyy(x, y, out)
    return scale * out


def dense_hessian(oracle: BilevelOracle, x, y) -> np.ndarray:
    """Materialize ``grad_yy g`` column by column (test-scale problems only)."""
    m = np.asarray(y).size
    eye = np.eye(m)
    return np.column_stack([oracle.hvp_gyy(x, y, eye[:, j]) for j in range(m)])


def exact_inverse_apply(oracle: BilevelOracle, x, y, rhs) -> np.ndarray:
    H = dense_hessian(oracle, x, y)
    try:
        return np.linalg.solve(H, rhs)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"lower-level Hessian is singular: {exc}") from exc


# SBFW -------------------------------------------------------------------

@dataclass(frozen=True)
class SbfwSchedule:
    """Step-size rules; the scale factors implement hand tuning."""

    mu_g: float
    L_g: float
    delta_scale: float = 1.0
    eta_scale: float = 1.0

    @property
    def a0(self) -> float:
        return min(2.0 / (3.0 * self.mu_g), self.mu_g / (2.0 * self.L_g**2))

    def delta(self, k: int) -> float:
        return self.delta_scale * self.a0 / math.sqrt(k)

    def eta(self, k: int) -> float:
        # 2/(k+1)^(3/4) exceeds 1 at k = 1; clipped to keep x feasible
        return min(1.0, self.eta_scale * 2.0 / (k + 1) ** 0.75)

    @staticmethod
    def rho(k: int) -> float:
        return min(1.0, 2.0 / math.sqrt(k))


@dataclass(frozen=True)
class SbfwState:
    k: int
    x: np.ndarray
    y: np.ndarray
    d: Optional[np.ndarray]
    prev_h: Optional[np.ndarray]
    x_prev: np.ndarray
    last_s: Optional[np.ndarray] = None
    last_length: Optional[int] = None


def sbfw_init(x0, y0) -> SbfwState:
    x0 = np.asarray(x0, dtype=float)
    return SbfwState(1, x0, np.asarray(y0, dtype=float), None, None, x0)


def _sbfw_update(oracle, feasible_set, state, sched, h, length, seed):
    k = state.k
    rho = sched.rho(k)
    if state.d is None or rho >= 1.0:
        d = h
    else:
        d = (1.0 - rho) * (state.d - state.prev_h) + h
    s = feasible_set.lmo(d, seed)
    eta = sched.eta(k)
    x_new = (1.0 - eta) * state.x + eta * s
    return d, s, x_new


def sbfw_step(oracle: BilevelOracle, feasible_set: FeasibleSet, state: SbfwState,
              sched: SbfwSchedule, rng: np.random.Generator, seed: int = 0) -> SbfwState:
    k = state.k
    if k < 1:
        raise ValueError("SBFW iterations are numbered from k = 1")
    y = state.y - sched.delta(k) * oracle.grad_g_y(state.x_prev, state.y)
    x = state.x
    length = draw_truncation(rng, k, "sbfw")
    z = neumann_inverse_apply(oracle, x, y, oracle.grad_f_y(x, y), k, sched.L_g, length, "sbfw")
    h = oracle.grad_f_x(x, y) - oracle.jvp_gyx(x, y, z)
    d, s, x_new = _sbfw_update(oracle, feasible_set, state, sched, h, length, seed)
    return SbfwState(k + 1, x_new, y, d, h, x, s, length)


def sbfw_exact_hessian_step(oracle: BilevelOracle, feasible_set: FeasibleSet,
                            state: SbfwState, sched: SbfwSchedule,
                            rng: Optional[np.random.Generator] = None,
                            seed: int = 0) -> SbfwState:
    """SBFW with the inverse Hessian applied exactly by a dense solve."""
    k = state.k
    if k < 1:
        raise ValueError("SBFW iterations are numbered from k = 1")
    y = state.y - sched.delta(k) * oracle.grad_g_y(state.x_prev, state.y)
    x = state.x
    z = exact_inverse_apply(oracle, x, y, oracle.grad_f_y(x, y))
    h = oracle.grad_f_x(x, y) - oracle.jvp_gyx(x, y, z)
    d, s, x_new = _sbfw_update(oracle, feasible_set, state, sched, h, None, seed)
    return SbfwState(k + 1, x_new, y, d, h, x, s, None)


# TTSA -------------------------------------------------------------------

@dataclass(frozen=True)
class TtsaParams:
    alpha: float
    beta: float
    mu_g: float
    L_g: float
    c_h: float = 1.0
    K: int = 1


def ttsa_params(c: ProblemConstants, K: int, beta_scale: float = 1.0,
                alpha_scale: float = 1.0, c_h: float = 1.0) -> TtsaParams:
    """Theory-driven TTSA step sizes; needs the full constant bundle.

    ``L = L_x^f + L_y^f C_yx/mu + C_y^f (L_yx^g/mu + L_yy^g C_yx/mu^2)`` with
    ``L_x^f = L_xx_f + L_xy_f`` and ``L_y^f = L_yx_f + L_yy_f``.
    """
    need = dict(C_yx_g=c.C_yx_g, L_yy_g=c.L_yy_g, L_yx_g=c.L_yx_g, L_xx_f=c.L_xx_f,
                L_xy_f=c.L_xy_f, L_yx_f=c.L_yx_f, L_yy_f=c.L_yy_f, C_y_f=c.C_y_f)
    missing = [k for k, v in need.items() if v is None]
    if missing:
        raise ValueError(f"TTSA needs the constants {missing}")
    if not 0 < c_h <= 1:
        raise ValueError("c_h must lie in (0, 1]")
    mu, Lg = c.mu_g, c.L_g
    Lx_f = c.L_xx_f + c.L_xy_f
    Ly_f = c.L_yx_f + c.L_yy_f
    L = Lx_f + Ly_f * c.C_yx_g / mu + c.C_y_f * (c.L_yx_g / mu + c.L_yy_g * c.C_yx_g / mu**2)
    L_y = c.C_yx_g / mu
    if L * L_y == 0:
        raise ValueError("TTSA step size undefined: L * L_y == 0")
    alpha = min(mu**2 / (8 * L_y * L * Lg**2), K ** -0.6 / (4 * L_y * L))
    beta = min(mu / Lg**2, 2.0 / mu * K ** -0.4)
    return TtsaParams(alpha * alpha_scale, beta * beta_scale, mu, Lg, c_h, K)


@dataclass(frozen=True)
class TtsaState:
    k: int
    x: np.ndarray
    y: np.ndarray
    last_direction: Optional[np.ndarray] = None
    last_length: Optional[int] = None


def ttsa_init(x0, y0) -> TtsaState:
    return TtsaState(0, np.asarray(x0, dtype=float), np.asarray(y0, dtype=float))


def ttsa_step(oracle: BilevelOracle, feasible_set: FeasibleSet, state: TtsaState,
              params: TtsaParams, rng: np.random.Generator) -> TtsaState:
    k, x, y = state.k, state.x, state.y
    hg = oracle.grad_g_y(x, y)
    length = draw_truncation(rng, k, "ttsa", params.L_g, params.mu_g)
    z = neumann_inverse_apply(oracle, x, y, oracle.grad_f_y(x, y), k, params.L_g, length,
                              "ttsa", mu_g=params.mu_g, c_h=params.c_h)
    hf = oracle.grad_f_x(x, y) - oracle.jvp_gyx(x, y, z)
    y_new = y - params.beta * hg
    x_new = feasible_set.project(x - params.alpha * hf)
    return TtsaState(k + 1, x_new, y_new, hf, length)


# drivers ----------------------------------------------------------------

Hook = Callable[[int, object, np.ndarray, Optional[np.ndarray], float], None]


@dataclass
class BaselineResult:
    state: object
    iterations: int
    truncations: list = field(default_factory=list)
    stopped_by_time: bool = False


def _drive(step, state, K, hooks, time_limit_s):
    truncations = []
    solver_time = 0.0
    stopped = False
    for k in range(K):
        if time_limit_s is not None and solver_time >= time_limit_s:
            stopped = True
            break
        t0 = time.monotonic()
        new = step(state)
        solver_time += time.monotonic() - t0
        truncations.append(new.last_length)
        direction = getattr(new, "d", None)
        if direction is None:
            direction = new.last_direction
        for hook in hooks:
            hook(k, state, direction, getattr(new, "last_s", None), solver_time)
        state = new
    return BaselineResult(state, len(truncations), truncations, stopped)


def run_sbfw(oracle: BilevelOracle, feasible_set: FeasibleSet, sched: SbfwSchedule,
             x0, y0, K: int, rng: np.random.Generator, exact_hessian: bool = False,
             hooks: Sequence[Hook] = (), seed: int = 0,
             time_limit_s: Optional[float] = None) -> BaselineResult:
    step_fn = sbfw_exact_hessian_step if exact_hessian else sbfw_step
    return _drive(lambda st: step_fn(oracle, feasible_set, st, sched, rng, seed),
                  sbfw_init(x0, y0), K, hooks, time_limit_s)


def run_ttsa(oracle: BilevelOracle, feasible_set: FeasibleSet, params: TtsaParams,
             x0, y0, K: int, rng: np.random.Generator, hooks: Sequence[Hook] = (),
             time_limit_s: Optional[float] = None) -> BaselineResult:
    return _drive(lambda st: ttsa_step(oracle, feasible_set, st, params, rng),
                  ttsa_init(x0, y0), K, hooks, time_limit_s)
