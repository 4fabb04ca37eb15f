import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasibalance.fit import (FitError, fit_alpha, fit_lognormal_mid, fit_pareto, fit_tent, fit_tent_points,
                              hill_estimate, ols_line, TentFit)
from quasibalance.histogram import (BinnedDensity, GrowthRateDensity, PROFITS_GRID,
                                    conditional_growth_density, default_r_edges, empirical_density)
from quasibalance.panel import PairedPanel
from quasibalance.synth import GeneratorSpec, gen_panel, sample_kernel
from quasibalance.theory import TentKernelParams


def test_pareto_exact_ccdf():
    x = np.logspace(0, 4, 30)
    f = fit_pareto((x, 1.0 / x), (1.0, 1e4))
    assert f.mu == pytest.approx(1.0, abs=1e-12)
    assert f.residual_rms < 1e-12 and f.n_points == 30 and f.method == "ccdf"


def test_pareto_samples_and_hill():
    x = 1.0 / np.random.default_rng(0).uniform(size=100_000)
    f = fit_pareto(x, (1.0, math.inf))
    assert f.mu == pytest.approx(1.0, abs=0.05)
    assert f.mu_hill == pytest.approx(1.0, abs=0.02) and f.n_tail == 100_000
    assert hill_estimate(x, 10.0)[0] == pytest.approx(1.0, abs=0.05)


def test_pareto_round_trip_machine_precision():
    f0 = fit_pareto((np.logspace(1, 3, 10), 3.0 * np.logspace(1, 3, 10) ** -1.4), (10.0, 1e3))
    x = np.logspace(1.2, 2.8, 17)
    f1 = fit_pareto((x, f0.ccdf(x)), (10.0, 1e3))
    assert f1.mu == pytest.approx(f0.mu, rel=1e-13)
    assert f1.c_const == pytest.approx(f0.c_const, rel=1e-11)


def test_pareto_on_density_and_errors():
    edges = np.logspace(0, 3, 16)
    c = np.sqrt(edges[:-1] * edges[1:])
    dens = BinnedDensity(edges, np.ones(15, int), 2.0 * c ** -2.5, 15)
    assert fit_pareto(dens, (1.0, 1e3)).mu == pytest.approx(1.5)
    with pytest.raises(FitError):
        fit_pareto((np.array([1.0, 2.0]), np.array([1.0, 0.5])), (1.0, 10.0))
    with pytest.raises(FitError):
        fit_pareto(np.ones(10), (-1.0, 10.0))
    neg = fit_pareto((np.logspace(0, 1, 5), np.logspace(0, 1, 5) ** 0.5), (1.0, 10.0))
    assert neg.suspicious


def _lognormal_binned(sigma, xbar, width=0.1):
    edges = xbar * 10 ** np.arange(-3, 3.0001, width)
    c = np.sqrt(edges[:-1] * edges[1:])
    y = np.log(c / xbar)
    dens = np.exp(-y ** 2 / (2 * sigma ** 2)) / (c * math.sqrt(2 * math.pi) * sigma)
    return BinnedDensity(edges, np.full(c.size, 1000), dens, 1000 * c.size)


def test_lognormal_exact():
    f = fit_lognormal_mid(_lognormal_binned(1.0, 1.0), (1e-2, 1e2))
    assert f.sigma == pytest.approx(1.0, abs=1e-3) and f.xbar == pytest.approx(1.0, abs=1e-3)


def test_lognormal_samples():
    x = np.exp(np.random.default_rng(1).normal(math.log(50.0), 0.8, 100_000))
    d = empirical_density(x, 10 ** np.arange(0, 4.01, 0.1))
    f = fit_lognormal_mid(d, (5.0, 500.0))
    assert f.sigma == pytest.approx(0.8, abs=0.03)
    assert f.xbar == pytest.approx(50.0, rel=0.05)


def test_lognormal_rejects_power_law():
    x = 1.0 / np.random.default_rng(2).uniform(size=100_000)
    d = empirical_density(x, 10 ** np.arange(0, 3.01, 0.1))
    with pytest.raises(FitError, match="non-concave"):
        fit_lognormal_mid(d, (1.0, 1e3))
    with pytest.raises(FitError, match="at least 4"):
        fit_lognormal_mid(d, (1.0, 2.0))


def _tent_grd(c, tp, tm, r_edges=None):
    r_edges = default_r_edges(1.0, 0.1) if r_edges is None else r_edges
    rc = 0.5 * (r_edges[:-1] + r_edges[1:])
    lq = np.where(rc > 0, c - tp * rc, c + tm * rc)
    counts = np.full(rc.size, 100)
    return GrowthRateDensity(3, 10.0, 15.8, r_edges, counts, 10 ** lq, int(counts.sum()),
                             int(counts.sum()), 0, 0, 0)


def test_tent_exact():
    t = fit_tent(_tent_grd(0.0, 2.0, 1.0))
    assert (t.c, t.t_plus, t.t_minus) == (pytest.approx(0.0, abs=1e-12), pytest.approx(2.0), pytest.approx(1.0))
    assert t.n_pos == 10 and t.n_neg == 10 and t.proper
    assert json.loads(json.dumps(t.to_dict()))["t_plus"] == pytest.approx(2.0)


def _kernel_grd(tp, tm, n, seed):
    R = sample_kernel(np.full(n, 100.0), TentKernelParams(tp, tm, 0.0, 100.0), np.random.default_rng(seed))
    panel = PairedPanel.from_arrays(np.full(n, 100.0), 100.0 * R)
    return conditional_growth_density(panel, PROFITS_GRID).bins[0]


def test_tent_from_kernel_samples():
    t = fit_tent(_kernel_grd(3.0, 2.0, 10_000, 0))
    assert t.t_plus == pytest.approx(3.0, abs=0.1)
    assert t.t_minus == pytest.approx(2.0, abs=0.1)


def test_tent_symmetric_kernel():
    t = fit_tent(_kernel_grd(2.5, 2.5, 100_000, 1))
    band = 3 * math.hypot(t.stderr_t_plus, t.stderr_t_minus) + 0.02
    assert abs(t.t_plus - t.t_minus) < band


@settings(max_examples=30)
@given(st.floats(-1, 1), st.floats(0.5, 5), st.floats(0.5, 5), st.integers(0, 2 ** 31))
def test_tent_relabel_invariance(c, tp, tm, seed):
    rng = np.random.default_rng(seed)
    r = np.concatenate([-np.linspace(0.05, 0.95, 10), np.linspace(0.05, 0.95, 10)])
    lq = np.where(r > 0, c - tp * r, c + tm * r) + rng.normal(0, 0.05, r.size)
    w = rng.integers(1, 100, r.size)
    a = fit_tent_points(r, lq, w)
    b = fit_tent_points(-r, lq, w)
    assert b[1] == pytest.approx(a[2], rel=1e-9) and b[2] == pytest.approx(a[1], rel=1e-9)
    assert b[5] == pytest.approx(a[5], rel=1e-9, abs=1e-12)
    # empty bins never change the result
    e = fit_tent_points(np.append(r, 0.5), np.append(lq, 9.0), np.append(w, 0))
    assert e[:3] == pytest.approx(a[:3], rel=1e-12)


def test_tent_errors():
    g = _tent_grd(0.0, 2.0, 1.0)
    g.counts[g.r_centers < 0] = 0
    with pytest.raises(FitError, match="per side"):
        fit_tent(g)
    x = np.full(50, 100.0)
    spike = conditional_growth_density(PairedPanel.from_arrays(x, x), PROFITS_GRID).bins[0]
    with pytest.raises(FitError, match="degenerate"):
        fit_tent(spike)


def _tent(i, x, tp, tm, n=100):
    return TentFit(i, x, 0.0, tp, tm, 10, 10, n, n, 0.0, 0.0, 0.0, 1.0)


def test_alpha_exact_lines():
    x0 = 1e4
    xs = x0 * 10 ** (-0.2 * np.arange(1, 9))
    tents = [_tent(i, x, 1.2 + 0.14 * math.log(x / x0), 0.2 - 0.14 * math.log(x / x0)) for i, x in enumerate(xs)]
    tents.append(_tent(99, x0, 5.0, 5.0))
    f = fit_alpha(tents, x0, (xs.min(), x0))
    assert f.alpha == pytest.approx(0.14, abs=1e-12)
    assert f.t_plus_x0 == pytest.approx(1.2, abs=1e-12) and f.t_minus_x0 == pytest.approx(0.2, abs=1e-12)
    assert f.mu_from_t == pytest.approx(1.0) and f.n_bins == 8 and 99 not in f.bins_used
    assert f.residual_rms < 1e-12


def test_alpha_exposes_bad_fit_and_errors():
    x0 = 1e4
    xs = x0 * 10 ** (-0.2 * np.arange(1, 9))
    zig = [_tent(i, x, 1.5 + (0.5 if i % 2 else -0.5), 1.0) for i, x in enumerate(xs)]
    assert fit_alpha(zig, x0, (xs.min(), x0)).residual_rms > 0.2
    with pytest.raises(FitError, match="at least 3"):
        fit_alpha(zig[:2], x0, (xs.min(), x0))
    with pytest.raises(FitError, match="no tents"):
        fit_alpha(zig, x0, (1e6, 1e7))


def test_ols_examples():
    r = ols_line([(0, 1), (1, 2)])
    assert (r.slope, r.intercept) == (pytest.approx(1.0), pytest.approx(1.0))
    u = np.linspace(0, 1, 100)
    assert ols_line(u, 3 * u - 2).r2 == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(FitError):
        ols_line([(1, 1), (1, 2)])


def test_ols_noise_within_stderr():
    rng = np.random.default_rng(4)
    u = rng.uniform(0, 1, 10_000)
    r = ols_line(u, 0.7 * u + 0.3 + rng.normal(0, 0.1, u.size))
    assert abs(r.slope - 0.7) < 3 * r.stderr_slope


def test_pipeline_alpha_recovery(static_panel):
    panel, spec = static_panel
    cg = conditional_growth_density(panel, PROFITS_GRID)
    f = fit_alpha([fit_tent(g) for g in cg.bins if g.count >= 100], spec.x0, (spec.x_min, spec.x0))
    assert f.alpha == pytest.approx(0.14, abs=0.02)


def test_gibrat_alpha_zero():
    spec = GeneratorSpec(mode="gibrat", seed=2)
    panel, _ = gen_panel(spec)
    cg = conditional_growth_density(panel, PROFITS_GRID)
    f = fit_alpha([fit_tent(g) for g in cg.bins if g.count >= 100], spec.x0, (spec.x_min, spec.x0))
    assert f.alpha == pytest.approx(0.0, abs=0.02)
