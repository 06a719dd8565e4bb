from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from ibcg.config import (PRESETS, TOY_SEED, ConfigError, RunConfig, format_config,
                         load_config, parse_config, preset)


def test_defaults_are_the_full_size_run():
    cfg = parse_config("")
    assert (cfg.problem, cfg.n, cfg.r, cfg.K, cfg.time_limit_s) == (
        "matrix-completion", 250, 10, 10_000, 200.0)
    assert (cfg.lambda1, cfg.lambda2, cfg.delta, cfg.noise, cfg.obs_prob) == (
        0.05, 0.05, 0.9, 0.5, 0.8)
    assert cfg.gamma_policy == "scaled:0.25" and cfg.timing is False


def test_parse_sections():
    cfg = parse_config("""
[problem]
kind = toy
seed = 8
mu_g = 0.1
L_g = 0.1   ; condition number one

[solver]
name = sbfw
delta_scale = 5
eta_scale = 0.1

[run]
K = 1e3
timing = yes
""")
    assert cfg.problem == "toy" and cfg.problem_seed == 8
    assert cfg.solver == "sbfw" and cfg.delta_scale == 5.0
    assert cfg.K == 1000 and cfg.timing is True


@pytest.mark.parametrize("text,line,field", [
    ("[run]\nK = 0\n", 2, "K"),
    ("[run]\ntrace_every = 1\nK = 2.5\n", 3, "K"),
    ("[solver]\n\nname = adam\n", 3, "solver"),
    ("[solver]\ngamma_policy = scaled\n", 2, "gamma_policy"),
    ("[problem]\nkind = toy\nmu_g = 3\nL_g = 1\n", 3, "mu_g"),
    ("[run]\nspeed = 3\n", 2, "speed"),
    ("[run]\ntiming = maybe\n", 2, "timing"),
])
def test_errors_carry_line_and_field(text, line, field):
    with pytest.raises(ConfigError) as err:
        parse_config(text, source="x.ini")
    assert err.value.line == line
    assert err.value.field == field
    assert str(err.value).startswith(f"x.ini:{line}: ")


def test_unknown_section_and_syntax():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[plot]\nx = 1\n")
    with pytest.raises(ConfigError):
        parse_config("K = 3\n")


def test_direct_construction_validates():
    with pytest.raises(ConfigError):
        RunConfig(time_limit_s=0)
    with pytest.raises(ConfigError):
        RunConfig(c_h=1.5)


def test_presets():
    assert set(PRESETS) == {"toy-fig1", "toy-appendixE", "mc-paper", "mc-desk"}
    fig1 = preset("toy-fig1")
    assert (fig1.problem_seed, fig1.mu_g, fig1.K, fig1.gamma_policy) == (TOY_SEED, 1.0, 100,
                                                                         "convex")
    e = preset("toy-appendixE")
    assert (e.mu_g, e.delta_scale, e.eta_scale) == (0.1, 5.0, 0.1)
    desk = preset("mc-desk")
    assert (desk.n, desk.r, desk.eta_scale, desk.beta_scale) == (50, 5, 0.8, 0.25)
    with pytest.raises(ConfigError):
        preset("nope")


def test_load_uses_file_stem_and_base(tmp_path):
    path = tmp_path / "my-run.ini"
    path.write_text("[run]\nK = 7\n")
    cfg = load_config(path, preset("toy-fig1"))
    assert cfg.output == "my-run" and cfg.K == 7 and cfg.problem == "toy"
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.ini")


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(sorted(PRESETS)), st.integers(0, 2**31), st.floats(0.01, 10.0),
       st.one_of(st.none(), st.integers(0, 1000)), st.booleans())
def test_format_parse_roundtrip(name, seed, scale, pseed, timing):
    cfg = replace(preset(name), master_seed=seed, eta_scale=scale, problem_seed=pseed,
                  timing=timing)
    assert parse_config(format_config(cfg)) == cfg
