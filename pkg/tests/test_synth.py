import json
import math

import numpy as np
import pytest
from scipy import stats

from quasibalance.balance import symmetry_statistic
from quasibalance.synth import (BLOCK_SIZE, GeneratorSpec, gen_panel, ground_truth, sample_initial,
                                sample_kernel, sim_multiplicative, write_truth)
from quasibalance.theory import (NotNormalizable, TentKernelParams, TheoryParams, cdf_quasistatic_1,
                                 cdf_quasistatic_2)


def test_multiplicative_deterministic_product():
    m = sim_multiplicative(1.0, 3, {"kind": "constant", "value": 2.0}, seed=0)
    assert m.x[0].tolist() == [1.0, 2.0, 4.0, 8.0]


def test_multiplicative_log_identity():
    m = sim_multiplicative(3.0, 50, {"kind": "lognormal", "sigma": 0.3}, seed=1, n_paths=20)
    expect = math.log(3.0) + np.cumsum(np.log(m.growth), axis=1)
    assert np.allclose(m.log_x[:, 1:], expect, rtol=0, atol=1e-12)
    assert np.allclose(np.log(m.x), m.log_x, rtol=1e-12)


def test_multiplicative_clt_small():
    m = sim_multiplicative(1.0, 100, {"kind": "loguniform", "low": -0.5, "high": 0.5}, seed=2, n_paths=20_000)
    z = m.log_x[:, -1] / math.sqrt(100 / 12)
    assert stats.kstest(z, "norm").statistic < 0.015
    with pytest.raises(ValueError):
        sim_multiplicative(0.0, 10, {"kind": "constant", "value": 1.0}, seed=0)
    with pytest.raises(ValueError):
        sim_multiplicative(1.0, 10, {"kind": "bogus"}, seed=0)


def test_kernel_symmetric_median_and_up_probability():
    n = 100_000
    rng = np.random.default_rng(0)
    R = sample_kernel(np.ones(n), TentKernelParams(2.0, 2.0, 0.0, 1.0), rng)
    p_up = np.mean(R > 1)
    assert abs(p_up - 0.5) < 3 * math.sqrt(0.25 / n)
    R = sample_kernel(np.ones(n), TentKernelParams(3.0, 1.5, 0.0, 1.0), np.random.default_rng(1))
    p = 1.5 / 4.5
    assert abs(np.mean(R > 1) - p) < 3 * math.sqrt(p * (1 - p) / n)
    # the upper branch is a Pareto law with index t+
    assert stats.kstest(R[R > 1], lambda r: 1 - r ** -3.0).statistic < 0.01


def test_kernel_same_seed_identical_and_domain():
    k = TentKernelParams(2.0, 1.0, 0.1, 1e4)
    x = np.logspace(3, 5, 100)
    a = sample_kernel(x, k, np.random.default_rng(7))
    b = sample_kernel(x, k, np.random.default_rng(7))
    assert np.array_equal(a, b) and np.all(a > 0)
    with pytest.raises(NotNormalizable):
        sample_kernel([1e-9], k, np.random.default_rng(0))


def test_initial_matches_closed_form_cdf():
    p = TheoryParams(alpha=0.14)
    x = sample_initial(p, 100_000, np.random.default_rng(3))
    assert x.min() >= p.x_min
    assert stats.kstest(x, lambda q: cdf_quasistatic_1(q, p)).statistic < 0.01


def test_initial_variance_shrinks_with_alpha():
    sds = []
    for alpha in (0.1, 0.3, 1.0, 3.0):
        p = TheoryParams(alpha=alpha, mu1=1.0, x0=1e4, x_min=1.0)
        sds.append(np.std(np.log(sample_initial(p, 20_000, np.random.default_rng(0)))))
    assert all(a > b for a, b in zip(sds, sds[1:]))


def test_gen_panel_deterministic_and_thread_independent():
    spec = GeneratorSpec(n_entities=3 * BLOCK_SIZE + 17, seed=11)
    a, ta = gen_panel(spec)
    b, _ = gen_panel(spec, n_jobs=4)
    assert np.array_equal(a.x1, b.x1) and np.array_equal(a.x2, b.x2)
    assert a.entity_ids == b.entity_ids and a.count == spec.n_entities
    assert np.all(a.x1 >= spec.x_min) and np.all(a.x2 > 0)
    c, _ = gen_panel(GeneratorSpec(n_entities=spec.n_entities, seed=12))
    assert not np.array_equal(a.x1, c.x1)


def test_modes_and_truth(tmp_path):
    g = GeneratorSpec(mode="gibrat", alpha=0.3).effective()
    assert g.alpha == 0.0
    s = GeneratorSpec(mode="static_nongibrat", theta=0.5, log10_a=1.0).effective()
    assert (s.theta, s.log10_a) == (1.0, 0.0)
    t = ground_truth(GeneratorSpec(mode="quasistatic", theta=0.9, log10_a=0.2))
    assert t["gamma"] == pytest.approx(4.0)
    assert t["mu2_ratio_relation"] == pytest.approx(2 / 0.9 - 1)
    assert t["sigma2"] / t["sigma1"] == pytest.approx(0.9)
    write_truth(tmp_path / "t.json", t)
    assert json.loads((tmp_path / "t.json").read_text())["theta"] == 0.9


def test_invalid_specs():
    with pytest.raises(ValueError):
        GeneratorSpec(mode="other")
    with pytest.raises(ValueError):
        GeneratorSpec(x_min=10.0, x0=5.0)
    with pytest.raises(ValueError):
        GeneratorSpec.from_dict({"bogus": 1})
    with pytest.raises(NotNormalizable):
        gen_panel(GeneratorSpec(alpha=1.0, n_entities=10))


def test_static_detailed_balance_calibration():
    """Narrow-kernel static panels pass the symmetry test at the 1% level."""
    passed = 0
    for seed in range(100):
        panel, _ = gen_panel(GeneratorSpec(mode="static_nongibrat", t_sum=30.0, n_entities=20_000, seed=seed))
        passed += symmetry_statistic(panel).p_value > 0.01
    assert passed >= 95


def test_quasistatic_quasi_balance_calibration():
    edges = math.log10(5e3) + 0.2 * np.arange(16)
    passed = 0
    for seed in range(100):
        spec = GeneratorSpec(mode="quasistatic", theta=0.9, log10_a=0.2, t_sum=30.0, x0=2.5e5, x_min=5e3,
                             n_entities=20_000, seed=seed)
        panel, _ = gen_panel(spec)
        passed += symmetry_statistic(panel, 0.9, 0.2, edges).p_value > 0.01
    assert passed >= 95


@pytest.mark.xfail(strict=True, reason="forward construction x2 = a x1^theta R has a different x2 marginal "
                                       "than the closed form; see decisions ledger")
def test_x2_marginal_matches_closed_form(quasistatic_panel):
    panel, spec = quasistatic_panel
    p = spec.theory()
    assert stats.kstest(panel.x2, lambda q: cdf_quasistatic_2(q, p)).statistic < 0.01
