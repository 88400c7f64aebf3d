import io
import math

import numpy as np
import pytest

from ratecheck.errors import ConfigurationError, DomainError
from ratecheck.problems import (
    Sample,
    _label_support,
    bernstein_moment_bound,
    dump_dataset_csv,
    empirical_gradient,
    empirical_risk,
    grad_values,
    load_dataset_csv,
    loss_values,
    make_problem,
    per_sample_gradient,
    per_sample_loss,
    population_gradient,
    population_risk,
    population_risk_mc,
    sample_dataset,
    with_noise_level,
)
from ratecheck.seeding import generator


def ls1d(noise=0.0):
    return make_problem("least_squares", 1, {"design": "cube", "w_star": 1.0,
                                             "noise_level": noise})


# ---------------------------------------------------------------------------
# make_problem
# ---------------------------------------------------------------------------


def test_least_squares_1d_certificate():
    p = ls1d()
    c = p.certificate
    assert c.smooth_beta == 1.0
    assert c.mu_pl == 1.0
    assert c.mu_qg == 1.0
    assert c.min_pop_risk_Fstar == 0.0


def test_pl_sine_leaves_mu_pl_unset():
    p = make_problem("pl_1d_sine", 1, {})
    assert p.certificate.mu_pl is None
    assert p.certificate.smooth_beta == 4.0


def test_hinge_holder_exponent():
    p = make_problem("qnorm_hinge", 2, {"q": 1.5, "w_star": [2.0, 0.5]})
    assert p.certificate.holder_alpha == 0.5
    assert p.certificate.holder_P == pytest.approx(1.5 * 1.0**1.5)


def test_invalid_kind_and_params():
    with pytest.raises(ConfigurationError):
        make_problem("mystery", 2, {})
    with pytest.raises(ConfigurationError):
        make_problem("qnorm_hinge", 2, {"q": 2.5})
    with pytest.raises(ConfigurationError):
        make_problem("least_squares", 2, {"design": "nope"})
    with pytest.raises(ConfigurationError):
        make_problem("qg_1d_quartic", 1, {"noise_level": 5.0})


def test_certificate_invariants_enforced():
    from ratecheck.problems import ConstantsCertificate

    with pytest.raises(ConfigurationError):
        ConstantsCertificate(domain_radius_R=1.0, minimizer_wstar=[0.0],
                             smooth_beta=1.0, mu_pl=3.0, mu_qg=3.0)
    with pytest.raises(ConfigurationError):
        ConstantsCertificate(domain_radius_R=1.0, minimizer_wstar=[0.0], mu_pl=1.0)
    with pytest.raises(ConfigurationError):
        ConstantsCertificate(domain_radius_R=0.0, minimizer_wstar=[0.0])
    with pytest.raises(ConfigurationError):
        ConstantsCertificate(domain_radius_R=1.0, minimizer_wstar=[0.0], holder_alpha=0.0)


def test_spectrum_design_second_moment():
    lam = [0.7, 1.3, 2.2]
    p = make_problem("least_squares", 3, {"design": "spectrum", "spectrum": lam,
                                          "rotation_seed": 4, "w_star": [0.0, 1.0, -1.0]})
    eig = np.linalg.eigvalsh(p.design.second_moment)
    assert np.allclose(eig, sorted(lam), rtol=1e-12)
    assert p.certificate.mu_qg == pytest.approx(min(lam))


# ---------------------------------------------------------------------------
# sample_dataset
# ---------------------------------------------------------------------------


def test_dataset_determinism_and_prefix():
    p = ls1d(noise=0.3)
    a = sample_dataset(p, 10, 42)
    b = sample_dataset(p, 10, 42)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    head = sample_dataset(p, 5, 42)
    assert np.array_equal(head.X, a.X[:5]) and np.array_equal(head.y, a.y[:5])


def test_realizable_empirical_risk_at_wstar_is_zero():
    p = ls1d(noise=0.0)
    ds = sample_dataset(p, 1000, 7)
    assert empirical_risk(ds, p.wstar) == 0.0


def test_feature_norms_respect_design_radius():
    for kind, params in [("least_squares", {"design": "axis", "radius": 2.0}),
                         ("logistic", {"design": "cube", "radius": 1.5, "w_star": [1.0, 1.0]})]:
        p = make_problem(kind, 2, params)
        ds = sample_dataset(p, 200, 3)
        assert np.all(np.linalg.norm(ds.X, axis=1) <= p.design.radius + 1e-12)


# ---------------------------------------------------------------------------
# risks and gradients
# ---------------------------------------------------------------------------


def test_population_risk_hand_value():
    assert population_risk(ls1d(), [0.0]) == 0.5


def test_population_gradient_vanishes_at_minimizer():
    problems = [
        ls1d(),
        make_problem("least_squares", 3, {"design": "axis", "w_star": [1.0, -2.0, 0.5],
                                          "noise_level": 0.4}),
        make_problem("logistic", 2, {"w_star": [1.0, -1.0]}),
        make_problem("pl_1d_sine", 1, {}),
        make_problem("qg_1d_quartic", 1, {"noise_level": 1.0}),
        make_problem("qnorm_hinge", 2, {"q": 1.5, "w_star": [2.0, 0.5], "noise_level": 0.1}),
    ]
    for p in problems:
        g = population_gradient(p, p.wstar)
        assert np.linalg.norm(g) < 1e-9, p.kind


def test_sine_population_risk_at_pi_matches_quadrature():
    p = make_problem("pl_1d_sine", 1, {})
    assert population_risk(p, [math.pi]) == pytest.approx(math.pi**2, rel=1e-14)
    # monte-carlo mode against the exact enumeration oracle
    pm = make_problem("pl_1d_sine", 1, {"noise_level": 0.5, "pop_risk_mode": "monte_carlo",
                                        "mc_samples": 40000})
    Xs, ys, ws = _label_support(pm)
    quad = float(ws @ loss_values(pm, np.array([math.pi]), Xs, ys)[0])
    mean, stderr, m = population_risk_mc(pm, [math.pi])
    assert m == 40000
    assert abs(mean - quad) <= 5 * stderr


def test_empirical_risk_hand_value():
    p = ls1d()
    ds = sample_dataset(p, 2, 0)
    ds = ds.replaced(0, Sample(np.array([1.0]), 1.0)).replaced(1, Sample(np.array([-1.0]), -1.0))
    assert empirical_risk(ds, [0.0]) == 0.5


def test_empirical_gradient_is_mean_of_per_sample_gradients():
    p = make_problem("least_squares", 3, {"design": "cube", "w_star": [1.0, 0.0, -1.0],
                                          "noise_level": 0.2})
    ds = sample_dataset(p, 64, 5)
    g = generator(11)
    for _ in range(5):
        w = g.standard_normal(3)
        stacked = np.mean([per_sample_gradient(p, ds.X[i], ds.y[i], w)
                           for i in range(ds.n)], axis=0)
        assert np.allclose(empirical_gradient(ds, w), stacked, rtol=1e-12, atol=1e-14)


def test_empirical_gradient_matches_finite_differences():
    # central-difference oracle, relative error <= 1e-6
    for kind, params in [
        ("least_squares", {"design": "cube", "w_star": [1.0, -0.5], "noise_level": 0.3}),
        ("logistic", {"w_star": [0.5, 1.0]}),
        ("qnorm_hinge", {"q": 1.7, "w_star": [2.0, 0.5], "noise_level": 0.1}),
        ("pl_1d_sine", {}),
        ("qg_1d_quartic", {"noise_level": 0.5}),
    ]:
        d = 1 if kind.endswith("1d_sine") or kind.endswith("quartic") else 2
        p = make_problem(kind, d, params)
        ds = sample_dataset(p, 32, 9)
        w = p.wstar + 0.37
        g = empirical_gradient(ds, w)
        h = 1e-6
        fd = np.zeros(d)
        for a in range(d):
            e = np.zeros(d)
            e[a] = h
            fd[a] = (empirical_risk(ds, w + e) - empirical_risk(ds, w - e)) / (2 * h)
        denom = max(np.linalg.norm(g), 1e-12)
        assert np.linalg.norm(fd - g) / denom <= 1e-6, kind


def test_per_sample_loss_matches_vectorized():
    p = make_problem("logistic", 2, {"w_star": [1.0, -1.0]})
    ds = sample_dataset(p, 16, 2)
    w = np.array([0.3, 0.8])
    vec = loss_values(p, w, ds.X, ds.y)[0]
    for i in range(ds.n):
        assert per_sample_loss(p, ds.X[i], ds.y[i], w) == pytest.approx(vec[i], rel=1e-14)


def test_domain_error_outside_ball():
    p = ls1d()
    with pytest.raises(DomainError):
        population_risk(p, [p.wstar[0] + 2 * p.radius])


# ---------------------------------------------------------------------------
# invariants
# ---------------------------------------------------------------------------


def test_per_sample_smoothness_certificate_on_random_pairs():
    # grid check of the smoothness inequality on 1e4 random pairs in the ball
    for kind, params in [
        ("least_squares", {"design": "cube", "w_star": [1.0, -0.5], "noise_level": 0.5}),
        ("logistic", {"w_star": [1.0, 1.0]}),
        ("pl_1d_sine", {}),
        ("qg_1d_quartic", {}),
    ]:
        d = 1 if "1d" in kind else 2
        p = make_problem(kind, d, params)
        beta = p.certificate.smooth_beta
        g = generator(77)
        m = 10_000
        dirs = g.standard_normal((m, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        W1 = p.wstar + dirs * (p.radius * g.random((m, 1)) ** (1 / d))
        dirs2 = g.standard_normal((m, d))
        dirs2 /= np.linalg.norm(dirs2, axis=1, keepdims=True)
        W2 = p.wstar + dirs2 * (p.radius * g.random((m, 1)) ** (1 / d))
        Xs, ys, _ = _label_support(p)
        dg = grad_values(p, W1, Xs, ys) - grad_values(p, W2, Xs, ys)
        gap = np.sqrt(np.einsum("mkd,mkd->mk", dg, dg))
        dist = np.linalg.norm(W1 - W2, axis=1)
        assert np.all(gap <= beta * dist[:, None] * (1 + 1e-9)), kind


def test_support_average_equals_population_risk():
    for kind, params in [
        ("least_squares", {"design": "cube", "w_star": [1.0, -0.5]}),
        ("qnorm_hinge", {"q": 1.5, "w_star": [2.0, 0.5]}),
        ("qg_1d_quartic", {}),
    ]:
        d = 1 if "1d" in kind else 2
        p = make_problem(kind, d, params)
        Xs, ys, ws = _label_support(p)
        assert np.allclose(ws, ws[0])  # uniform at zero noise
        g = generator(13)
        for _ in range(5):
            w = p.wstar + 0.1 * g.standard_normal(d)
            manual = float(loss_values(p, w, Xs, ys)[0].mean())
            assert manual == pytest.approx(population_risk(p, w), rel=1e-12), kind


def test_monte_carlo_matches_closed_form():
    p = make_problem("least_squares", 2, {"design": "cube", "w_star": [1.0, -0.5],
                                          "noise_level": 0.5})
    w = p.wstar + np.array([0.4, -0.2])
    mean, stderr, m = population_risk_mc(p, w, m=1_000_000)
    assert m == 1_000_000
    assert abs(mean - population_risk(p, w)) <= 5 * stderr


def test_bernstein_moment_bound_zero_without_noise():
    assert bernstein_moment_bound(ls1d(noise=0.0)) == 0.0
    assert bernstein_moment_bound(ls1d(noise=0.5)) > 0.0


def test_with_noise_level_rescales_fstar():
    p = make_problem("least_squares", 2, {"design": "cube", "w_star": [1.0, -0.5]})
    pn = with_noise_level(p, 0.25)
    assert pn.certificate.min_pop_risk_Fstar == pytest.approx(0.5 * 0.25**2)
    assert pn.problem_id == p.problem_id


def test_dataset_csv_round_trip():
    p = ls1d(noise=0.3)
    ds = sample_dataset(p, 8, 21)
    buf = io.StringIO()
    dump_dataset_csv(ds, buf)
    text = buf.getvalue()
    assert text.startswith(f"# {p.problem_id},21,8\n")
    loaded = load_dataset_csv(io.StringIO(text), {p.problem_id: p})
    assert np.array_equal(loaded.X, ds.X)
    assert np.array_equal(loaded.y, ds.y)
    assert loaded.seed == 21
