"""Acceptance suite: numbered end-to-end checks with pass/fail lines.

Each check returns a :class:`CriterionResult`; the wall-clock budget of a
criterion is part of its pass condition.  Used by ``ibcg check`` and by the
test suite.
"""
from __future__ import annotations

import tempfile
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from .config import PRESETS, TOY_SEED
from .geometry import L1Ball, NuclearBall, Simplex, nuclear_norm
from .harness import build_problem, initial_point, rate_runs, run_experiment, run_seeds
from .linalg import finite_diff_grad, norm
from .oracle import CountingOracle, derived_lipschitz_bundle, validate_oracle
from .problems.completion import mc_generate
from .problems.toy import toy_make
from .solver import GammaPolicy, resolve_schedule, run_ibcg, lemma2_bound


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float
    budget_s: Optional[float] = None

    def line(self) -> str:
        budget = f" (budget {self.budget_s:g} s)" if self.budget_s else ""
        return (f"[{'PASS' if self.passed else 'FAIL'}] {self.number:>2}. {self.title}: "
                f"{self.detail} [{self.seconds:.2f} s{budget}]")


def _contraction_instance():
    # kappa = 10 so that beta = 9/11 is far from 0 and 1
    return toy_make(1.0, 10.0, TOY_SEED)


def check_hypergradient(trials: int = 50, seed: int = 0):
    p = _contraction_instance()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        lam = rng.dirichlet(np.ones(4))
        fd = finite_diff_grad(p.ell, lam, 1e-6)
        worst = max(worst, norm(p.true_hypergradient(lam) - fd) / norm(fd))
    return worst <= 1e-5, f"max relative error {worst:.2e} over {trials} points (tol 1e-5)"


def check_lower_contraction(steps: int = 50, seed: int = 0):
    p = _contraction_instance()
    c = p.constants()
    lam = np.random.default_rng(seed).dirichlet(np.ones(4))
    ystar = p.inner_argmin(lam)
    alpha, beta = 2.0 / (c.mu_g + c.L_g), c.beta
    y = np.zeros(2)
    worst = 0.0
    for _ in range(steps):
        y_new = y - alpha * p.grad_g_y(lam, y)
        worst = max(worst, abs(norm(y_new - ystar) / norm(y - ystar) - beta))
        y = y_new
    return worst <= 1e-8, f"max |ratio - beta| = {worst:.2e} over {steps} steps (beta={beta:.4f})"


def check_tracking_contraction(steps: int = 50, seed: int = 0):
    p = _contraction_instance()
    c = p.constants()
    sched = resolve_schedule(c, 100, "convex")
    lam = np.random.default_rng(seed).dirichlet(np.ones(4))
    y = p.inner_argmin(lam)
    H = np.column_stack([p.hvp_gyy(lam, y, e) for e in np.eye(2)])
    v = np.linalg.solve(H, p.grad_f_y(lam, y))
    w = np.zeros(2)
    worst = -np.inf
    for _ in range(steps):
        w_new = w - sched.eta * (p.hvp_gyy(lam, y, w) - p.grad_f_y(lam, y))
        worst = max(worst, norm(w_new - v) - sched.rho * norm(w - v))
        w = w_new
    return worst <= 1e-10, f"max excess over rho-contraction {worst:.2e} (rho={sched.rho:.4f}, tol 1e-10)"


def check_lemma2(K: int = 200):
    details, ok = [], True
    for label, p in (("fig1", toy_make(1.0, 1.0, TOY_SEED)), ("kappa10", _contraction_instance())):
        c = derived_lipschitz_bundle(p.constants())
        sched = resolve_schedule(c, K, "convex")
        x0, y0 = initial_point(p)
        D0y = norm(y0 - p.inner_argmin(x0))
        w0_err = norm(y0 - p.tracking_target(x0))
        ratios = []

        def hook(k, st, F, s, el):
            ratios.append(norm(p.true_hypergradient(st.x) - F) / lemma2_bound(c, sched, k, D0y, w0_err))

        run_ibcg(p, p.feasible_set, sched, x0, y0, hooks=(hook,))
        ok &= max(ratios) <= 1.0
        details.append(f"{label}: max measured/bound {max(ratios):.3f}")
    return ok, "; ".join(details) + f" over {K} iterations"


def check_lmo(seed: int = 0):
    rng = np.random.default_rng(seed)
    mism = 0
    for _ in range(100):
        n = int(rng.integers(1, 11))
        c = rng.standard_normal(n)
        simplex_vertices = np.eye(n)
        l1_vertices = np.vstack([np.eye(n), -np.eye(n)]) * 2.5
        for fs, verts in ((Simplex(n), simplex_vertices), (L1Ball(n, 2.5), l1_vertices)):
            best = min(verts @ c)
            if fs.lmo(c) @ c != best:
                mism += 1
    worst = 0.0
    for _ in range(20):
        m, n = (int(v) for v in rng.integers(1, 21, size=2))
        C = rng.standard_normal((m, n))
        S = NuclearBall(m, n, 3.0).lmo(C)
        ref = -3.0 * np.linalg.svd(C, compute_uv=False)[0]
        worst = max(worst, abs(float(np.sum(C * S)) - ref) / abs(ref))
    ok = mism == 0 and worst <= 1e-6
    return ok, f"vertex mismatches {mism}/200; nuclear max relative error {worst:.2e} (tol 1e-6)"


def check_oracle_budget():
    details, ok = [], True
    for label, p, K, pol in (("toy", toy_make(1.0, 1.0, TOY_SEED), 137, "convex"),
                             ("mc-desk", mc_generate(50, 5, seed=0), 50, "scaled:0.25")):
        c = p.constants() if label == "toy" else p.constants_basic()
        o = CountingOracle(p)
        sched = resolve_schedule(c, K, pol)
        run_ibcg(o, p.feasible_set, sched)
        h, j = o.count("hvp_gyy"), o.count("jvp_gyx")
        ok &= h == K and j == K
        details.append(f"{label}: K={K} hvp={h} jvp={j}")
    return ok, "; ".join(details)


GRID = (100, 1000, 10_000)


def check_convex_rate():
    cfg = PRESETS["toy-fig1"]
    fit = rate_runs(replace(cfg, gamma_policy="convex"), GRID, "logK_over_K")
    res = run_experiment(replace(cfg, K=1, trace_every=1), write=False)
    init = res.records[0].suboptimality
    ratio = fit.values[-1] / init
    ok = fit.passed and ratio <= 1e-4
    return ok, (f"slope {fit.slope:.3f} (need <= -0.8); suboptimality at K=1e4 / initial "
                f"= {ratio:.2e} (need <= 1e-4); values {[f'{v:.2e}' for v in fit.values]}")


def check_nonconvex_rate():
    cfg = replace(PRESETS["toy-fig1"], gamma_policy="nonconvex")
    fit = rate_runs(cfg, GRID, "inv_sqrtK")
    return fit.passed, (f"slope {fit.slope:.3f} (need <= -0.8); min gaps "
                        f"{[f'{v:.2e}' for v in fit.values]}")


def _final_sub(cfg):
    return run_experiment(cfg, write=False).records[-1].suboptimality


def check_fig1():
    f1 = PRESETS["toy-fig1"]
    ib1 = _final_sub(f1)
    sb1 = _final_sub(replace(f1, solver="sbfw"))
    e = PRESETS["toy-appendixE"]
    theory = replace(e, delta_scale=1.0, eta_scale=1.0)
    ibE = _final_sub(theory)
    sbE = _final_sub(replace(theory, solver="sbfw"))
    exE = _final_sub(replace(e, solver="sbfw-exact-hessian"))
    parts = [
        (ib1 <= 1e-2, f"mu=1 K=100 IBCG {ib1:.2e} (<= 1e-2)"),
        (10 * ib1 <= sb1, f"SBFW {sb1:.2e} (>= 10x)"),
        (10 * ibE <= sbE, f"mu=0.1 K=1e3 IBCG {ibE:.2e} vs SBFW {sbE:.2e} (>= 10x)"),
        (exE <= 1e-2, f"tuned exact-Hessian SBFW {exE:.2e} (<= 1e-2)"),
    ]
    return all(ok for ok, _ in parts), "; ".join(
        ("" if ok else "FAILED ") + txt for ok, txt in parts)


def check_fig2(K: int = 2000):
    base = replace(PRESETS["mc-desk"], K=K, trace_every=K)
    runs = {s: run_experiment(replace(base, solver=s), write=False)
            for s in ("ibcg", "sbfw", "ttsa")}
    ib = runs["ibcg"].records
    e0, eK = ib[0].normalized_error, ib[-1].normalized_error
    lg = {s: r.records[-1].lower_grad_norm for s, r in runs.items()}
    # feasibility of every IBCG iterate, re-run with a hook
    p = build_problem(base, run_seeds(base)["data"])
    sched = resolve_schedule(p.constants_basic(), K, GammaPolicy.parse(base.gamma_policy))
    worst = [-np.inf]

    def hook(k, st, F, s, el):
        worst[0] = max(worst[0], nuclear_norm(st.x) - p.alpha)

    res = run_ibcg(p, p.feasible_set, sched, *initial_point(p), hooks=(hook,),
                   seed=run_seeds(base)["solver"])
    worst[0] = max(worst[0], nuclear_norm(res.state.x) - p.alpha)
    parts = [
        (eK < 0.5 * e0, f"(a) IBCG e: {e0:.4f} -> {eK:.4f} (need < {0.5 * e0:.4f})"),
        (lg["ibcg"] < lg["sbfw"] and lg["ibcg"] < lg["ttsa"],
         f"(b) final ||grad_y g||: IBCG {lg['ibcg']:.3e}, SBFW {lg['sbfw']:.3e}, TTSA {lg['ttsa']:.3e}"),
        (worst[0] <= 1e-6, f"(c) max ||X_k||_* - alpha = {worst[0]:.2e} (<= 1e-6)"),
    ]
    return all(ok for ok, _ in parts), "; ".join(
        ("" if ok else "FAILED ") + txt for ok, txt in parts)


def check_determinism():
    same, names = True, []
    with tempfile.TemporaryDirectory() as tmp:
        for cfg in (PRESETS["toy-fig1"],
                    replace(PRESETS["toy-appendixE"], solver="sbfw", K=200),
                    replace(PRESETS["mc-desk"], solver="ttsa", K=100),
                    replace(PRESETS["mc-desk"], K=100)):
            blobs = []
            for rep in range(2):
                r = run_experiment(cfg, Path(tmp) / str(rep))
                blobs.append(r.trace_path.read_bytes())
            same &= blobs[0] == blobs[1]
            names.append(f"{cfg.output}/{cfg.solver}")
    return same, f"byte-identical traces for {', '.join(names)}"


def check_oracle_validation():
    details, ok = [], True
    for label, p in (("toy", toy_make(1.0, 10.0, TOY_SEED)), ("mc-desk", mc_generate(50, 5, seed=0))):
        c = p.constants() if label == "toy" else p.constants_basic()
        rep = validate_oracle(p, c, p.feasible_set, seed=0, trials=50)
        ok &= rep.passed
        failing = [ch.name for ch in rep.checks if not ch.passed]
        details.append(f"{label}: {'all checks pass' if rep.passed else 'failing ' + ','.join(failing)}")
    return ok, "; ".join(details)


CRITERIA: list[tuple[int, str, Callable, float]] = [
    (1, "hypergradient vs finite differences", check_hypergradient, 5),
    (2, "lower-level contraction ratio = beta", check_lower_contraction, 1),
    (3, "tracking contraction by rho", check_tracking_contraction, 1),
    (4, "hypergradient error bound", check_lemma2, 2),
    (5, "LMO equivalence", check_lmo, 5),
    (6, "two matrix-vector products per iteration", check_oracle_budget, None),
    (7, "convex rate", check_convex_rate, 30),
    (8, "non-convex gap rate", check_nonconvex_rate, 30),
    (9, "toy comparison with SBFW", check_fig1, 10),
    (10, "matrix completion at desk scale", check_fig2, 180),
    (11, "determinism", check_determinism, None),
    (12, "oracle validation", check_oracle_validation, 10),
]


def run_criterion(number: int) -> CriterionResult:
    _, title, fn, budget = next(c for c in CRITERIA if c[0] == number)
    t0 = time.monotonic()
    try:
        ok, detail = fn()
    except Exception as exc:  # noqa: BLE001 - reported as a failing criterion
        ok, detail = False, f"error: {type(exc).__name__}: {exc}"
    dt = time.monotonic() - t0
    if budget is not None and dt > budget:
        ok, detail = False, detail + f"; over the {budget:g} s budget"
    return CriterionResult(number, title, bool(ok), detail, dt, budget)


def run_acceptance(numbers: Optional[Iterable[int]] = None, report=print) -> list[CriterionResult]:
    numbers = [c[0] for c in CRITERIA] if numbers is None else list(numbers)
    results = []
    for n in numbers:
        r = run_criterion(n)
        if report is not None:
            report(r.line())
        results.append(r)
    return results
