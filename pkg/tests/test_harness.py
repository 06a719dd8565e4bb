import json
import math
from dataclasses import replace

import numpy as np
import pytest

from ibcg.config import RunConfig, preset
from ibcg.harness import (derive_seed, rate_check, run_experiment, run_seeds, run_suite,
                          toy_reference_optimum)
from ibcg.problems import ToyCoresetProblem, face_enumeration_optimum, toy_make
from ibcg.solver import SolverError
from ibcg.trace import read_trace

DIAMOND = np.array([[1.0, 0.0, -1.0, 0.0], [0.0, 1.0, 0.0, -1.0]])


def toy_cfg(**kw):
    base = dict(problem="toy", problem_seed=8, solver="ibcg", gamma_policy="convex", K=20,
                trace_every=1, output="t")
    base.update(kw)
    return RunConfig(**base)


def test_seeds_are_stable_and_distinct():
    assert derive_seed(0, "data") == derive_seed(0, "data")
    seeds = {derive_seed(m, s) for m in range(5) for s in ("data", "solver", "truncation")}
    assert len(seeds) == 15
    assert run_seeds(toy_cfg())["data"] == 8
    assert run_seeds(toy_cfg(problem_seed=None))["data"] == derive_seed(0, "data")


def test_single_iteration_gives_two_rows(tmp_path):
    res = run_experiment(toy_cfg(K=1), tmp_path)
    assert [r.k for r in res.records] == [0, 1]
    assert [r.k for r in read_trace(res.trace_path)] == [0, 1]


def test_trace_rows_follow_trace_every():
    res = run_experiment(toy_cfg(K=25, trace_every=10), write=False)
    assert [r.k for r in res.records] == [0, 10, 20, 25]


@pytest.mark.parametrize("solver", ["ibcg", "sbfw", "sbfw-exact-hessian", "ttsa"])
def test_identical_configs_give_identical_bytes(tmp_path, solver):
    cfg = toy_cfg(solver=solver, K=40, gamma_policy="nonconvex")
    a = run_experiment(cfg, tmp_path / "a")
    b = run_experiment(cfg, tmp_path / "b")
    assert a.trace_path.read_bytes() == b.trace_path.read_bytes()
    assert all(r.wall_time_s is None for r in a.records)


def test_timing_column_is_opt_in():
    res = run_experiment(toy_cfg(K=5, timing=True), write=False)
    times = [r.wall_time_s for r in res.records]
    assert all(t is not None for t in times) and times == sorted(times)


def test_summary_contents(tmp_path):
    res = run_experiment(toy_cfg(K=30), tmp_path)
    s = json.loads(res.summary_path.read_text())
    assert s["iterations"] == 30 and s["stopped_by_time"] is False
    assert s["oracle_counts"]["hvp_gyy"] == 30 and s["oracle_counts"]["jvp_gyx"] == 30
    assert s["config"]["K"] == 30 and s["seeds"]["data"] == 8
    assert s["final"]["k"] == 30
    assert 0 <= s["best_k"] < 30 and math.isfinite(s["reference_optimum"])


def test_toy_metrics_are_consistent():
    res = run_experiment(toy_cfg(K=200, trace_every=5), write=False)
    for r in res.records:
        assert r.fw_gap_exact >= -1e-9
        assert r.suboptimality >= -1e-12
        assert r.lemma2_measured <= r.lemma2_bound
        assert r.normalized_error is None
    assert res.records[-1].suboptimality < res.records[0].suboptimality


def test_baseline_rows():
    res = run_experiment(toy_cfg(solver="sbfw", K=10), write=False)
    assert res.records[-1].fw_gap_practical is None
    assert all(r.lemma2_bound is None for r in res.records)
    assert len(res.summary["truncations"]) == 10


def test_matrix_completion_run():
    cfg = RunConfig(n=12, r=3, K=30, trace_every=10, master_seed=3)
    res = run_experiment(cfg, write=False)
    assert res.records[0].normalized_error == pytest.approx(1.0)
    assert all(r.suboptimality is None for r in res.records)
    assert res.summary["reference_optimum"] is None


def test_time_limit_is_reported():
    res = run_experiment(toy_cfg(K=10**7, trace_every=10**6, time_limit_s=0.2), write=False)
    assert res.summary["stopped_by_time"] and res.summary["iterations"] < 10**7


def test_solver_errors_carry_run_context(monkeypatch):
    import ibcg.harness as h

    def boom(*a, **k):
        raise SolverError("non-finite hypergradient surrogate at k=3, entry 1", 3, 1)

    monkeypatch.setattr(h, "run_ibcg", boom)
    with pytest.raises(SolverError, match="toy/ibcg .*master_seed 0.*k=3") as err:
        run_experiment(toy_cfg(), write=False)
    assert err.value.k == 3


# reference optimum ------------------------------------------------------

def test_reference_optimum_reachable_target():
    p = ToyCoresetProblem(np.eye(2), DIAMOND, target=[0.2, 0.1])
    lam, f_star = toy_reference_optimum(p)
    assert f_star == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(p.inner_argmin(lam), [0.2, 0.1], atol=1e-6)


def test_reference_optimum_at_a_vertex():
    p = ToyCoresetProblem(np.eye(2), DIAMOND, target=[5.0, 0.1])
    lam, f_star = toy_reference_optimum(p)
    vertex_best = min(p.ell(e) for e in np.eye(4))
    assert f_star == pytest.approx(vertex_best, rel=1e-12)
    assert f_star == pytest.approx(0.5 * (16.0 + 0.01))
    np.testing.assert_allclose(lam, [1.0, 0.0, 0.0, 0.0], atol=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_reference_optimum_two_routes_agree(seed):
    p = toy_make(1.0, 10.0, seed)
    _, f_ref = toy_reference_optimum(p)
    _, f_enum = face_enumeration_optimum(p)
    assert abs(f_ref - f_enum) <= 1e-9


# rate check -------------------------------------------------------------

def test_rate_check_exact_law():
    Ks = [100, 1000, 10_000]
    fit = rate_check(Ks, [3.0 * math.log(K) / K for K in Ks], "logK_over_K")
    assert fit.slope == pytest.approx(-1.0, abs=1e-12) and fit.passed
    fit = rate_check(Ks, [2.0 / math.sqrt(K) for K in Ks], "inv_sqrtK")
    assert fit.slope == pytest.approx(-1.0, abs=1e-12) and fit.passed


def test_rate_check_constant_metric_fails():
    fit = rate_check([100, 1000, 10_000], [0.5, 0.5, 0.5])
    assert fit.slope == pytest.approx(0.0, abs=1e-12) and not fit.passed


@pytest.mark.parametrize("Ks,vals", [([100, 1000], [1.0, 0.1]),
                                     ([100, 200, 1000], [1.0, 0.5, 0.1]),
                                     ([100, 1000, 10_000], [1.0, 0.0, 0.1])])
def test_rate_check_rejects_bad_grids(Ks, vals):
    with pytest.raises(ValueError):
        rate_check(Ks, vals)


# suites -----------------------------------------------------------------

def test_suite_runs_every_config_in_parallel(tmp_path):
    cfgs = tmp_path / "cfgs"
    cfgs.mkdir()
    for name, solver in (("a", "ibcg"), ("b", "sbfw"), ("c", "ttsa")):
        (cfgs / f"{name}.ini").write_text(
            f"[problem]\nkind = toy\nseed = 8\n[solver]\nname = {solver}\n"
            f"[run]\nK = 15\ntrace_every = 5\n")
    out = run_suite(cfgs, tmp_path / "out", jobs=2)
    assert sorted(p.rsplit("/", 1)[-1] for p in out) == ["a.csv", "b.csv", "c.csv"]
    serial = run_suite(cfgs, tmp_path / "serial", jobs=1)
    for p, q in zip(out, serial):
        assert open(p, "rb").read() == open(q, "rb").read()


def test_preset_run_fig1(tmp_path):
    res = run_experiment(replace(preset("toy-fig1")), tmp_path)
    assert len(res.records) == 101
    assert res.records[-1].suboptimality <= 1e-2


def test_convex_rate_constant_carries_over():
    # C fitted at K = 100 bounds the K = 10^4 suboptimality by C log K / K
    sub = {}
    for K in (100, 10_000):
        res = run_experiment(toy_cfg(K=K, trace_every=K), write=False)
        sub[K] = res.records[-1].suboptimality
    C = sub[100] / (math.log(100) / 100)
    assert sub[10_000] <= C * math.log(10_000) / 10_000
