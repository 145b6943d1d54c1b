from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import kolmogorov

from mbmhurst.core import DomainError, constant_theta
from mbmhurst.estimators import EstimatorParams, IntegratedCurve, VarCurve
from mbmhurst.hypotests import (DegenerateVarianceError, FunctionClass, MCSettings, cusum_statistic,
                                gof_statistic, mc_quantile_cusum, mc_quantile_sup, mc_sup_samples, test_constancy,
                                test_gof)
from mbmhurst.simulate import FbmConfig, simulate_fbm

U = np.linspace(0.0, 1.0, 1001)


def _curve(y, u=U, origin=0.0):
    return IntegratedCurve(u, np.asarray(y, dtype=float), origin=origin)


def _linear_var(c=1.0, n=512):
    u = np.linspace(0.0, 1.0, n + 1)
    return VarCurve(u, c * u)


def _sup_abs_bm_quantile(p):
    # P(sup_[0,1] |W| < x) = (4/pi) sum_k (-1)^k/(2k+1) exp(-(2k+1)^2 pi^2 / (8 x^2))
    from scipy.optimize import brentq
    k = np.arange(200)

    def cdf(x):
        return 4 / math.pi * np.sum((-1.0) ** k / (2 * k + 1) * np.exp(-(2 * k + 1) ** 2 * math.pi ** 2 / (8 * x * x)))

    return brentq(lambda x: cdf(x) - p, 0.5, 5.0)


def test_cusum_of_line_vanishes():
    assert cusum_statistic(_curve(0.37 * U)) == pytest.approx(0.0, abs=1e-15)


def test_cusum_of_square():
    assert cusum_statistic(_curve(U ** 2)) == pytest.approx(0.25, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.integers(0, 2 ** 31))
def test_cusum_invariant_to_added_slope(slope, seed):
    y = np.cumsum(np.random.default_rng(seed).standard_normal(U.size)) / 30
    assert cusum_statistic(_curve(y + slope * U)) == pytest.approx(cusum_statistic(_curve(y)), abs=1e-12)


def test_cusum_rejects_empty_or_short_curves():
    with pytest.raises(DomainError):
        cusum_statistic(_curve([], u=np.array([])))
    with pytest.raises(DomainError):
        cusum_statistic(_curve([0.0, 0.1], u=np.array([0.0, 0.5])))


def test_kolmogorov_anchor():
    q = mc_quantile_cusum(_linear_var(), 0.05, reps=100_000, grid_size=512, seed=1)
    assert q == pytest.approx(1.358, abs=0.03)
    assert kolmogorov(1.358) == pytest.approx(0.05, abs=1e-3)  # the anchor itself


def test_sup_abs_brownian_anchor():
    ref = _sup_abs_bm_quantile(0.95)
    assert ref == pytest.approx(2.2414, abs=1e-3)
    q = mc_quantile_sup(_linear_var(), 0.05, reps=100_000, grid_size=512, seed=2)
    assert q == pytest.approx(2.24, abs=0.04)


@pytest.mark.parametrize("c", [0.25, 3.0])
def test_quantile_brownian_scaling(c):
    # common random numbers make the scaling exact, not only in distribution
    q1 = mc_quantile_cusum(_linear_var(), reps=5000, seed=7)
    qc = mc_quantile_cusum(_linear_var(c), reps=5000, seed=7)
    assert qc / q1 == pytest.approx(math.sqrt(c), rel=1e-12)
    # independent seeds: agreement within Monte-Carlo error
    qi = mc_quantile_cusum(_linear_var(c), reps=20_000, seed=8)
    assert qi / q1 == pytest.approx(math.sqrt(c), rel=0.05)


def test_quantile_monotone_in_alpha():
    v = _linear_var()
    assert mc_quantile_cusum(v, 0.5, reps=5000) < mc_quantile_cusum(v, 0.05, reps=5000)
    assert mc_quantile_sup(v, 0.5, reps=5000) < mc_quantile_sup(v, 0.05, reps=5000)


def test_quantile_deterministic_given_seed():
    v = VarCurve(np.linspace(0, 1, 300), np.linspace(0, 1, 300) ** 1.5)
    assert mc_quantile_cusum(v, seed=3) == mc_quantile_cusum(v, seed=3)
    assert mc_quantile_cusum(v, seed=3) != mc_quantile_cusum(v, seed=4)


def test_degenerate_variance():
    with pytest.raises(DegenerateVarianceError):
        mc_quantile_cusum(VarCurve(U, np.zeros(U.size)))


def test_quantile_argument_checks():
    with pytest.raises(DomainError):
        mc_quantile_cusum(_linear_var(), reps=999)
    with pytest.raises(DomainError):
        mc_quantile_sup(_linear_var(), alpha=1.0)
    with pytest.raises(DomainError):
        mc_sup_samples(_linear_var(), "median", 10, 64, 0)


def test_continuity_correction_reduces_grid_bias():
    # on a coarse grid the raw supremum is biased low; the correction recovers the continuous quantile
    raw = mc_quantile_cusum(_linear_var(n=64), reps=50_000, grid_size=64, seed=5, continuity_correction=False)
    fixed = mc_quantile_cusum(_linear_var(n=64), reps=50_000, grid_size=64, seed=5)
    assert raw < 1.32
    assert abs(fixed - 1.3581) < abs(raw - 1.3581)


def test_gof_singleton_exact_member():
    cls = FunctionClass.singleton(lambda v: 0.3 + 0.4 * v)
    stat, arg = gof_statistic(_curve(0.3 * U + 0.2 * U ** 2), cls)
    assert stat == pytest.approx(0.0, abs=1e-9) and arg == {"index": 0}


def test_gof_singleton_from_samples():
    cls = FunctionClass.singleton(np.full(11, 0.6))
    stat, _ = gof_statistic(_curve(0.5 * U), cls)
    assert stat == pytest.approx(0.1, abs=1e-12)


def test_gof_constant_family_exact_member():
    stat, arg = gof_statistic(_curve(0.5 * U), FunctionClass.constant_family())
    assert stat == pytest.approx(0.0, abs=1e-9)
    assert arg["c"] == pytest.approx(0.5, abs=1e-8)


def test_gof_constant_family_closed_form():
    # inf_c sup_u |u^2 - c u| = 3 - 2 sqrt(2) at c = 2 sqrt(2) - 2
    stat, arg = gof_statistic(_curve(U ** 2), FunctionClass.constant_family())
    assert stat == pytest.approx(3 - 2 * math.sqrt(2), abs=1e-6)
    assert arg["c"] == pytest.approx(2 * math.sqrt(2) - 2, abs=1e-4)


def test_gof_constant_family_boundary_minimiser():
    stat, arg = gof_statistic(_curve(0.995 * U), FunctionClass.constant_family())
    assert arg["c"] == 0.99 and stat == pytest.approx(0.005, abs=1e-12)


def _brute_linear(y, u, margin=0.01, m=200):
    grid = np.linspace(margin, 1 - margin, m)
    best = math.inf
    for b in grid:
        a = grid - b
        r = y[None, :] - a[:, None] * u[None, :] ** 2 / 2 - b * u[None, :]
        best = min(best, float(np.max(np.abs(r), axis=1).min()))
    return best


def test_gof_linear_matches_brute_force():
    brute = _brute_linear(U ** 2, U)
    grid, arg = gof_statistic(_curve(U ** 2), FunctionClass.linear_family())
    lp, arg_lp = gof_statistic(_curve(U ** 2), FunctionClass.linear_family(), linear_method="lp")
    assert grid == pytest.approx(brute, abs=1e-3)
    assert lp <= brute + 1e-12 and lp <= grid + 1e-12
    assert 0.01 - 1e-9 <= arg["b"] and arg["a"] + arg["b"] <= 0.99 + 1e-9


def test_gof_linear_exact_member():
    y = 0.2 * U + 0.5 * 0.6 * U ** 2  # H(v) = 0.2 + 0.6 v
    stat, arg = gof_statistic(_curve(y), FunctionClass.linear_family(), linear_method="lp")
    assert stat == pytest.approx(0.0, abs=1e-9)
    assert arg["a"] == pytest.approx(0.6, abs=1e-6) and arg["b"] == pytest.approx(0.2, abs=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_nesting_constant_in_linear(seed):
    rng = np.random.default_rng(seed)
    y = np.cumsum(0.5 + 0.2 * rng.standard_normal(U.size)) / U.size
    cur = _curve(y)
    const, _ = gof_statistic(cur, FunctionClass.constant_family())
    lin_lp, _ = gof_statistic(cur, FunctionClass.linear_family(), linear_method="lp")
    lin_grid, _ = gof_statistic(cur, FunctionClass.linear_family())
    assert lin_lp <= const + 1e-9
    assert lin_grid <= const + 1e-3  # nested grids certify the inf to this tolerance


def test_dominance_over_members():
    y = np.cumsum(0.45 + 0.1 * np.sin(6 * U)) / U.size
    members = [lambda v, c=c: np.full_like(v, c) for c in (0.3, 0.45, 0.6)]
    cur = _curve(y)
    best, arg = gof_statistic(cur, FunctionClass.sampled_grid(members))
    singles = [gof_statistic(cur, FunctionClass.singleton(m))[0] for m in members]
    assert best == min(singles) and arg["index"] == int(np.argmin(singles))


def test_gof_respects_origin():
    u = np.linspace(0, 1, 2049)
    origin = 0.1
    y = 0.4 * np.clip(u - origin, 0, None)
    stat, _ = gof_statistic(IntegratedCurve(u, y, origin=origin), FunctionClass.singleton(lambda v: 0.4 + 0 * v))
    assert stat == pytest.approx(0.0, abs=1e-12)


def test_function_class_validation():
    with pytest.raises(DomainError):
        FunctionClass("cubic_family")
    with pytest.raises(DomainError):
        FunctionClass.sampled_grid([])
    with pytest.raises(DomainError):
        FunctionClass.singleton([0.5, 1.0])
    with pytest.raises(DomainError):
        FunctionClass.constant_family(0.0, 0.5)


@pytest.mark.parametrize("which", ["cusum", "gof"])
def test_sup_grid_refinement_stability(which):
    n = 8192
    u = np.arange(n + 1) / n
    y = 0.5 * u + 0.02 * np.sin(2 * np.pi * u) + 0.01 * u ** 3
    cur = IntegratedCurve(u, y)
    if which == "cusum":
        a, b = cusum_statistic(cur, 512), cusum_statistic(cur, 1024)
    else:
        cls = FunctionClass.constant_family()
        a, b = gof_statistic(cur, cls, 512)[0], gof_statistic(cur, cls, 1024)[0]
    assert abs(a - b) <= 0.02 * b


@pytest.fixture(scope="module")
def fbm_path():
    return simulate_fbm(FbmConfig(H=0.5, n=2048, seed=123))


def test_constancy_report_fields(fbm_path):
    rep = test_constancy(fbm_path, EstimatorParams(), 0.05, MCSettings(reps=1000, seed=1))
    assert rep.test == "cusum" and rep.mc_reps == 1000
    assert 0 < rep.p_value <= 1
    assert (rep.decision == "reject") == (rep.statistic > rep.quantile)
    d = json.loads(rep.to_json())
    assert set(d) == {"test", "statistic", "quantile", "alpha", "p_value", "decision", "mc_reps", "diagnostics"}
    assert d["diagnostics"]["lag"] == EstimatorParams().lag_for(2048)
    assert "cusum" in rep.summary()
    assert test_constancy(fbm_path, EstimatorParams(), 0.05, MCSettings(reps=1000, seed=1)).to_dict() == rep.to_dict()


def test_gof_report_fields(fbm_path):
    rep = test_gof(fbm_path, FunctionClass.constant_family(), EstimatorParams(), 0.05, MCSettings(reps=1000))
    assert rep.test == "gof" and 0.0 < rep.diagnostics["minimiser"]["c"] < 1.0
    assert (rep.decision == "reject") == (rep.statistic > rep.quantile)
    json.loads(rep.to_json())


def test_p_value_formula(fbm_path):
    mc = MCSettings(reps=1000, seed=9)
    rep = test_constancy(fbm_path, EstimatorParams(), 0.05, mc)
    from mbmhurst.estimators import increments, integrated_hurst, plugin_hurst, variance_curve
    p = EstimatorParams().left_sided()
    inc = increments(fbm_path)
    var = variance_curve(plugin_hurst(inc, p), p, n=inc.n)
    samples = mc_sup_samples(var, "bridge", mc.reps, mc.grid_size, mc.seed)
    assert rep.p_value == (1 + np.sum(samples >= rep.statistic)) / (mc.reps + 1)
    assert rep.statistic == pytest.approx(math.sqrt(inc.n) * cusum_statistic(integrated_hurst(inc, p)), rel=1e-12)


def test_constancy_on_constant_theta_mbm_runs():
    from mbmhurst.simulate import MbmConfig, simulate_mbm
    path = simulate_mbm(MbmConfig(theta=constant_theta(0.4), n=1024, seed=2))
    rep = test_constancy(path, mc=MCSettings(reps=1000))
    assert math.isfinite(rep.statistic) and rep.quantile > 0
