"""Experiment runner: builds a problem, runs one solver, records metrics.

Metrics are computed with the bare problem oracle, never the counting
wrapper, so the per-run oracle counts reflect the solver alone.
"""
from __future__ import annotations

import json
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import baselines as bl
from .config import RunConfig, load_config
from .geometry import fw_gap
from .linalg import norm
from .oracle import CountingOracle, derived_lipschitz_bundle
from .problems.completion import mc_generate
from .problems.toy import ToyCoresetProblem, face_enumeration_optimum, toy_make
from .solver import (GammaPolicy, SolverError, hypergradient_surrogate, lemma2_bound,
                     resolve_schedule, run_ibcg)
from .trace import TraceRecord, write_trace

STREAMS = ("data", "solver", "truncation")


def derive_seed(master: int, label: str) -> int:
    """Independent 32-bit seed for the component ``label`` of a run."""
    ss = np.random.SeedSequence([int(master), zlib.crc32(label.encode())])
    return int(ss.generate_state(1)[0])


def run_seeds(cfg: RunConfig) -> dict:
    seeds = {s: derive_seed(cfg.master_seed, s) for s in STREAMS}
    if cfg.problem_seed is not None:
        seeds["data"] = cfg.problem_seed
    return seeds


def build_problem(cfg: RunConfig, seed: int):
    if cfg.problem == "toy":
        return toy_make(cfg.mu_g, cfg.L_g, seed)
    return mc_generate(cfg.n, cfg.r, cfg.noise, cfg.obs_prob, seed,
                       cfg.lambda1, cfg.lambda2, cfg.delta)


def initial_point(problem):
    """Barycenter/zero upper start and zero lower start."""
    return problem.feasible_set.default_point(), np.zeros(problem.y_dim)


# reference optimum -----------------------------------------------------

def toy_reference_optimum(p: ToyCoresetProblem, max_iters: int = 1_000_000,
                          gap_tol: float = 1e-10, agree_tol: float = 1e-9):
    """Minimize ``ell`` over the simplex; returns ``(lam*, ell*)``.

    A pairwise Frank-Wolfe run with the exact hypergradient and exact line
    search (``ell`` is a quadratic in ``lam``) is cross-checked against the
    enumeration of all face-restricted minimizers.  The pairwise variant
    moves weight from the worst active vertex to the best one; unlike plain
    Frank-Wolfe it converges linearly when the optimum lies inside a face.
    """
    B = p.reduced_map()
    Q = B.T @ B
    lam = p.feasible_set.default_point()
    for _ in range(max_iters):
        grad = B.T @ (B @ lam - p.target)
        gap = float(grad @ lam - grad.min())
        if gap <= gap_tol:
            break
        # on the simplex the vertex weights are the coordinates themselves
        i = int(np.argmin(grad))
        active = np.flatnonzero(lam > 0)
        j = int(active[np.argmax(grad[active])])
        d = np.zeros_like(lam)
        d[i], d[j] = 1.0, -1.0
        slope = -float(grad @ d)
        curv = float(d @ Q @ d)
        step = lam[j] if curv <= 0 else min(lam[j], slope / curv)
        drop = step >= lam[j]
        lam = lam + step * d
        if drop:
            lam[j] = 0.0
    fw_val = p.ell(lam)
    enum_lam, enum_val = face_enumeration_optimum(p)
    if abs(fw_val - enum_val) > agree_tol * max(1.0, abs(enum_val)):
        raise ArithmeticError(
            f"reference optimum mismatch: Frank-Wolfe {fw_val!r} vs enumeration {enum_val!r}")
    return (enum_lam, enum_val) if enum_val <= fw_val else (lam, fw_val)


# rate check ------------------------------------------------------------

@dataclass
class RateFit:
    slope: float
    passed: bool
    law: str
    Ks: list
    values: list


def rate_check(Ks: Sequence[int], values: Sequence[float], law: str = "logK_over_K",
               threshold: float = -0.8) -> RateFit:
    """Least-squares slope of ``log(metric)`` against ``log(K/log K)`` or ``log(sqrt K)``."""
    Ks = np.asarray(Ks, dtype=float)
    vals = np.asarray(values, dtype=float)
    if Ks.size < 3 or len(set(Ks.tolist())) < 3:
        raise ValueError("rate_check needs at least 3 distinct values of K")
    if np.log10(Ks.max() / Ks.min()) < 2 - 1e-12:
        raise ValueError("the K grid must span at least two decades")
    if np.any(vals <= 0):
        raise ValueError("metric values must be positive for a log-log fit")
    if law == "logK_over_K":
        t = np.log(Ks / np.log(Ks))
    elif law == "inv_sqrtK":
        t = 0.5 * np.log(Ks)
    else:
        raise ValueError(f"unknown law {law!r}")
    slope = float(np.polyfit(t, np.log(vals), 1)[0])
    return RateFit(slope, slope <= threshold, law, Ks.astype(int).tolist(), vals.tolist())


# a single run ----------------------------------------------------------

@dataclass
class RunResult:
    config: RunConfig
    records: list
    summary: dict
    trace_path: Optional[Path] = None
    summary_path: Optional[Path] = None
    iterates: list = field(default_factory=list)


class _Recorder:
    def __init__(self, cfg, problem, seeds):
        self.cfg, self.p, self.seed = cfg, problem, seeds["solver"]
        self.records = []
        self.iterates = []
        self.is_toy = isinstance(problem, ToyCoresetProblem)
        self.f_star = toy_reference_optimum(problem)[1] if self.is_toy else None
        self.bundle = derived_lipschitz_bundle(problem.constants()) if self.is_toy else None

    def record(self, k, x, y, direction, elapsed, lemma=None):
        p = self.p
        exact = p.true_hypergradient(x)
        gap_p = None if direction is None else fw_gap(p.feasible_set, x, direction, self.seed)
        sub = p.ell(x) - self.f_star if self.is_toy else None
        ne = None if self.is_toy else p.normalized_error(x)
        m_meas = m_bound = None
        if lemma is not None:
            m_meas, m_bound = lemma(k, exact, direction)
        rec = TraceRecord(
            k=k, wall_time_s=elapsed if self.cfg.timing else None,
            upper_value=p.upper_value(x, y), fw_gap_practical=gap_p,
            fw_gap_exact=fw_gap(p.feasible_set, x, exact, self.seed), suboptimality=sub,
            lower_grad_norm=norm(p.grad_g_y(x, y)), normalized_error=ne,
            lemma2_measured=m_meas, lemma2_bound=m_bound)
        self.records.append(rec)
        self.iterates.append(k)
        return rec


def _due(k, every):
    return k % every == 0


def run_experiment(cfg: RunConfig, out_dir=None, write: bool = True) -> RunResult:
    """Run ``cfg`` and write ``<out_dir>/<output>.csv`` plus a JSON summary."""
    try:
        return _run(cfg, out_dir, write)
    except SolverError as exc:
        raise SolverError(f"{cfg.problem}/{cfg.solver} (output {cfg.output!r}, "
                          f"master_seed {cfg.master_seed}): {exc}", exc.k, exc.component) from exc
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        raise SolverError(f"{cfg.problem}/{cfg.solver} (output {cfg.output!r}, "
                          f"master_seed {cfg.master_seed}): {exc}") from exc


def _run(cfg: RunConfig, out_dir, write: bool) -> RunResult:
    seeds = run_seeds(cfg)
    problem = build_problem(cfg, seeds["data"])
    oracle = CountingOracle(problem)
    fs = problem.feasible_set
    x0, y0 = initial_point(problem)
    rec = _Recorder(cfg, problem, seeds)
    extra = {}
    t_start = time.monotonic()

    if cfg.solver == "ibcg":
        c = problem.constants() if rec.is_toy else problem.constants_basic()
        sched = resolve_schedule(c, cfg.K, GammaPolicy.parse(cfg.gamma_policy), cfg.eta_fraction)
        lemma = None
        if rec.is_toy:
            D0y = norm(y0 - problem.inner_argmin(x0))
            w0_err = norm(y0 - problem.tracking_target(x0))

            def lemma(k, exact, F):
                return norm(exact - F), lemma2_bound(rec.bundle, sched, k, D0y, w0_err)
        step_times = []

        def hook(k, state, F, s, elapsed):
            step_times.append(elapsed)
            if _due(k, cfg.trace_every):
                rec.record(k, state.x, state.y, F, elapsed, lemma)

        res = run_ibcg(oracle, fs, sched, x0, y0, hooks=(hook,), seed=seeds["solver"],
                       time_limit_s=cfg.time_limit_s)
        st = res.state
        # F at the final iterate, evaluated off the books
        _, F_last = hypergradient_surrogate(problem, sched, st.x, st.y, st.w)
        rec.record(st.k, st.x, st.y, F_last, step_times[-1] if step_times else 0.0, lemma)
        extra.update(best_k=res.best_k, best_gap=res.best_gap, gamma=sched.gamma,
                     alpha=sched.alpha, eta=sched.eta)
        iterations, stopped = res.iterations, res.stopped_by_time
    else:
        rng = np.random.default_rng(seeds["truncation"])
        gaps = []
        times = []

        def hook(k, state, direction, s, elapsed):
            times.append(elapsed)
            gap = fw_gap(fs, state.x, direction, seeds["solver"])
            gaps.append(gap)
            if _due(k, cfg.trace_every):
                rec.record(k, state.x, state.y, direction, elapsed)

        if cfg.solver == "ttsa":
            c = problem.constants()
            params = bl.ttsa_params(c, cfg.K, cfg.beta_scale, cfg.alpha_scale, cfg.c_h)
            res = bl.run_ttsa(oracle, fs, params, x0, y0, cfg.K, rng, hooks=(hook,),
                              time_limit_s=cfg.time_limit_s)
            extra.update(alpha=params.alpha, beta=params.beta)
        else:
            c = problem.constants() if rec.is_toy else problem.constants_basic()
            sched = bl.SbfwSchedule(c.mu_g, c.L_g, cfg.delta_scale, cfg.eta_scale)
            res = bl.run_sbfw(oracle, fs, sched, x0, y0, cfg.K, rng,
                              exact_hessian=cfg.solver == "sbfw-exact-hessian",
                              hooks=(hook,), seed=seeds["solver"],
                              time_limit_s=cfg.time_limit_s)
        st = res.state
        rec.record(res.iterations, st.x, st.y, None, times[-1] if times else 0.0)
        best = int(np.argmin(gaps)) if gaps else None
        extra.update(best_k=best, best_gap=gaps[best] if gaps else None,
                     truncations=res.truncations)
        iterations, stopped = res.iterations, res.stopped_by_time

    total = time.monotonic() - t_start
    final = rec.records[-1].as_dict()
    summary = {
        "config": cfg.as_dict(),
        "seeds": seeds,
        "iterations": iterations,
        "stopped_by_time": stopped,
        "final": final,
        "oracle_counts": dict(sorted(oracle.counts.items())),
        "wall_time_total_s": total,
        "reference_optimum": rec.f_star,
        **extra,
    }
    result = RunResult(cfg, rec.records, summary, iterates=rec.iterates)
    if write:
        out = Path(out_dir or ".")
        out.mkdir(parents=True, exist_ok=True)
        stem = cfg.output or f"{cfg.problem}-{cfg.solver}"
        result.trace_path = write_trace(out / f"{stem}.csv", rec.records)
        result.summary_path = out / f"{stem}.json"
        result.summary_path.write_text(json.dumps(_jsonable(summary), indent=2) + "\n")
    return result


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


# suites ----------------------------------------------------------------

def _run_path(args):
    path, out_dir = args
    res = run_experiment(load_config(path), out_dir)
    return str(res.trace_path)


def run_suite(config_dir, out_dir, jobs: int = 1) -> list:
    """Run every ``*.ini`` in ``config_dir``; independent runs go to worker processes."""
    paths = sorted(Path(config_dir).glob("*.ini"))
    if not paths:
        raise FileNotFoundError(f"no *.ini configs in {config_dir}")
    for p in paths:
        load_config(p)  # fail fast on config errors before spawning workers
    work = [(p, out_dir) for p in paths]
    if jobs <= 1:
        return [_run_path(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_run_path, work))


def rate_runs(cfg: RunConfig, Ks: Sequence[int] = (100, 1000, 10_000),
              law: Optional[str] = None) -> RateFit:
    """Rerun ``cfg`` for every ``K`` and fit the decay of the final metric.

    ``logK_over_K`` fits the final suboptimality (toy only); ``inv_sqrtK``
    fits the smallest practical Frank-Wolfe gap of the run.
    """
    from dataclasses import replace
    if law is None:
        law = "logK_over_K" if GammaPolicy.parse(cfg.gamma_policy).kind == "convex" else "inv_sqrtK"
    vals = []
    for K in Ks:
        res = run_experiment(replace(cfg, K=int(K), trace_every=int(K)), write=False)
        if law == "logK_over_K":
            vals.append(res.records[-1].suboptimality)
        else:
            vals.append(res.summary["best_gap"])
    return rate_check(Ks, vals, law)
