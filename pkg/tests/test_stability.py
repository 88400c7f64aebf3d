import math

import numpy as np
import pytest

from ratecheck.errors import ConfigurationError
from ratecheck.optim import erm_solve, inverse_time_schedule
from ratecheck.problems import Sample, loss_values, make_problem, sample_dataset
from ratecheck.rates import fit_loglog
from ratecheck.stability import (
    ErmAlgorithm,
    SgdAlgorithm,
    empirical_uniform_stability,
    generalized_bernstein_from_qg,
    klochkov_excess_bound,
    probe_grid,
    replacement_indices,
    theoretical_stability_bound,
)


def noisy_ls(d=2, noise=0.5):
    wstar = [1.0, -0.5][:d] if d <= 2 else [1.0] * d
    return make_problem("least_squares", d, {"design": "cube", "w_star": wstar,
                                             "noise_level": noise})


# ---------------------------------------------------------------------------
# estimator behavior
# ---------------------------------------------------------------------------


def test_hand_example_erm_sup():
    # S = {(1,1), (1,1)}, replacement (1,-1): erm moves from 1 to 0 and the
    # probe point (1,-1) sees |f(1,.) - f(0,.)| = |2 - 0.5| = 1.5
    p = noisy_ls(d=1, noise=1.0)
    ds = sample_dataset(p, 2, 0)
    ds = ds.replaced(0, Sample(np.array([1.0]), 1.0)).replaced(1, Sample(np.array([1.0]), 1.0))
    w_s = erm_solve(ds).w_hat
    w_si = erm_solve(ds.replaced(1, Sample(np.array([1.0]), -1.0))).w_hat
    gx = np.array([[1.0], [1.0]])
    gy = np.array([1.0, -1.0])
    vals = loss_values(p, np.stack([w_s, w_si]), gx, gy)
    assert np.abs(vals[0] - vals[1]).max() == pytest.approx(1.5, abs=1e-12)


def test_identical_replacement_gives_zero_stability():
    # a zero-noise point-mass problem: every fresh draw equals the original
    p = make_problem("pl_1d_sine", 1, {})
    grid = probe_grid(p)
    rep_erm = empirical_uniform_stability(p, 6, ErmAlgorithm(), [0, 2], grid,
                                          trials=2, delta=0.5, seed=3)
    assert rep_erm.empirical_sup == 0.0
    alg = SgdAlgorithm(schedule=inverse_time_schedule(1.0, 16.0), T=50)
    rep_sgd = empirical_uniform_stability(p, 6, alg, [1], grid, trials=2, delta=0.5, seed=3)
    assert rep_sgd.empirical_sup == 0.0


def test_report_shape_and_quantile():
    p = noisy_ls()
    rep = empirical_uniform_stability(p, 12, ErmAlgorithm(), [0, 5, 11], probe_grid(p),
                                      trials=4, delta=0.25, seed=9)
    assert rep.per_index_sup.shape == (3,)
    assert rep.empirical_sup == rep.per_index_sup.max()
    assert rep.all_sups.shape == (4, 3)
    flat = np.sort(rep.all_sups.ravel())
    assert rep.quantile_1_minus_delta == flat[math.ceil(0.75 * flat.size) - 1]
    assert np.all(rep.all_sups >= 0)


def test_replacement_indices_policy():
    assert np.array_equal(replacement_indices(10, 1), np.arange(10))
    assert np.array_equal(replacement_indices(64, 1), np.arange(64))
    big = replacement_indices(512, 1)
    assert big.size == 32 and np.all(big < 512) and np.all(np.diff(big) > 0)


def test_estimator_input_validation():
    p = noisy_ls()
    with pytest.raises(ConfigurationError):
        empirical_uniform_stability(p, 8, ErmAlgorithm(), [], probe_grid(p), 2, 0.5, 0)
    with pytest.raises(ConfigurationError):
        empirical_uniform_stability(p, 8, ErmAlgorithm(), [9], probe_grid(p), 2, 0.5, 0)
    with pytest.raises(ConfigurationError):
        empirical_uniform_stability(p, 8, ErmAlgorithm(), [0], [], 2, 0.5, 0)


def test_erm_stability_dominated_by_bound_small_n():
    p = noisy_ls()
    cert = p.certificate
    for n in (16, 64):
        rep = empirical_uniform_stability(p, n, ErmAlgorithm(), replacement_indices(n, 0),
                                          probe_grid(p), trials=3, delta=0.2, seed=n)
        bound = theoretical_stability_bound("erm_qg", L=cert.lipschitz_L, mu=cert.mu_qg,
                                            n=n).value
        assert rep.empirical_sup <= bound


def test_sgd_stability_below_sgd_qg_bound():
    p = noisy_ls()
    cert = p.certificate
    n = 32
    sched = inverse_time_schedule(cert.mu_qg, math.ceil(4 * cert.smooth_beta / cert.mu_qg))
    alg = SgdAlgorithm(schedule=sched, T=n * n)
    rep = empirical_uniform_stability(p, n, alg, replacement_indices(n, 0), probe_grid(p),
                                      trials=3, delta=0.2, seed=5)
    bound = theoretical_stability_bound("sgd_qg", L=cert.lipschitz_L, mu=cert.mu_qg, n=n,
                                        eps_opt=rep.eps_opt_max).value
    assert rep.empirical_sup <= bound


def test_nonconvex_quartic_stability_slope():
    # unique-minimizer regime: the deterministic tie-break keeps the solver
    # in the positive well, and the sup decays like 1/n
    p = make_problem("qg_1d_quartic", 1, {"noise_level": 1.0, "domain_radius": 3.0})
    curve = []
    for n in (16, 32, 64, 128):
        rep = empirical_uniform_stability(p, n, ErmAlgorithm(), replacement_indices(n, 0),
                                          probe_grid(p), trials=3, delta=0.2, seed=n)
        curve.append((n, rep.empirical_sup))
    slope = fit_loglog(curve).slope
    assert -1.25 <= slope <= -0.75


# ---------------------------------------------------------------------------
# closed-form bounds
# ---------------------------------------------------------------------------


def test_erm_qg_bound_value():
    assert theoretical_stability_bound("erm_qg", L=1, mu=1, n=100).value == pytest.approx(0.04)


def test_sgd_qg_bound_reduces_to_erm_bound():
    b = theoretical_stability_bound("sgd_qg", L=1, mu=1, n=100, eps_opt=0.0)
    assert b.value == pytest.approx(0.04)
    b2 = theoretical_stability_bound("sgd_qg", L=1, mu=1, n=100, eps_opt=0.02)
    assert b2.value == pytest.approx(2 * math.sqrt(0.04) + 0.04)


def test_expansion_bound_value_and_vacuous_flag():
    b = theoretical_stability_bound("expansion_nonconvex", c=1, beta=1, t=1000,
                                    n=10_000, delta=0.05, M=1.0)
    assert b.value == pytest.approx(1000 * math.sqrt(math.log(2e5) / 1e4))
    assert b.vacuous is True
    small = theoretical_stability_bound("expansion_nonconvex", c=0.01, beta=1, t=10,
                                        n=10_000, delta=0.05, M=1.0)
    assert small.vacuous is False


def test_bound_parameter_validation():
    with pytest.raises(ConfigurationError):
        theoretical_stability_bound("erm_qg", L=1, mu=-1, n=10)
    with pytest.raises(ConfigurationError):
        theoretical_stability_bound("sgd_qg", L=1, mu=1, n=10)  # missing eps_opt
    with pytest.raises(ConfigurationError):
        theoretical_stability_bound("nope", L=1)


def test_klochkov_bound_hand_values():
    assert klochkov_excess_bound(0.0, 0.0, 0.0, 1.0, 0.0, 100, 1.0,
                                 math.exp(-1)) == pytest.approx(0.02)
    v = klochkov_excess_bound(0.04, 0.0, 0.0, 0.0, 0.0, 100, 1.0, math.exp(-1))
    assert v == pytest.approx(2 * 0.04 * math.log(100), rel=1e-12)
    assert generalized_bernstein_from_qg(1.0, 2.0) == 1.0
