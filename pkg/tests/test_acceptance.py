"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines.  Rates are asymptotic upper bounds with unspecified constants, so
every check is an exponent fit or a bound-domination property at desk scale,
never a constant comparison.
"""

import hashlib
import math
import os
import time
from pathlib import Path

import numpy as np

from ratecheck.cli import run_experiment
from ratecheck.conditions import GridSpec, certify, estimate_constant, hierarchy_audit
from ratecheck.optim import erm_solve, inverse_time_schedule
from ratecheck.problems import (
    bernstein_moment_bound,
    empirical_gradient,
    empirical_risk,
    gradient_second_moment_at_opt,
    make_problem,
    population_gradient,
    population_risk,
    sample_dataset,
)
from ratecheck.rates import (
    ErmEstimator,
    SgdEstimator,
    SweepConfig,
    compare_to_theory,
    fit_loglog,
    quantile_curve,
    run_opt_error_sweep,
    run_sweep,
    vector_bernstein_bound,
)
from ratecheck.seeding import generator
from ratecheck.stability import (
    ErmAlgorithm,
    SgdAlgorithm,
    empirical_uniform_stability,
    probe_grid,
    replacement_indices,
    theoretical_stability_bound,
)

DELTA = 0.05


def report(criterion, ok, detail):
    print(f"\n[criterion {criterion:02d}] {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def ls2(noise):
    return make_problem("least_squares", 2, {"design": "cube", "w_star": [1.0, -0.5],
                                             "noise_level": noise})


def test_criterion_01_erm_fast_rate():
    start = time.time()
    cfg = SweepConfig(problem=ls2(0.0), estimator=ErmEstimator(),
                      n_grid=(32, 64, 128, 256, 512, 1024, 2048), trials_R=200,
                      delta=DELTA, seed=101, fstar_rule="one_over_n", noise_base=1.0)
    table = run_sweep(cfg)
    fit = fit_loglog(quantile_curve(table, DELTA), theorem_id="theorem_8")
    verdict = compare_to_theory(fit, "theorem_8",
                                {"estimator": "erm", "fstar_rule": "one_over_n"})
    elapsed = time.time() - start
    ok = fit.slope <= -1.6 and verdict.verdict == "CONSISTENT" and elapsed <= 120
    report(1, ok, f"q95 excess-risk slope {fit.slope:.3f} (need <= -1.6), "
                  f"{verdict.verdict}, {elapsed:.0f}s")


def test_criterion_02_erm_slow_term():
    start = time.time()
    cfg = SweepConfig(problem=ls2(0.5), estimator=ErmEstimator(),
                      n_grid=(32, 64, 128, 256, 512, 1024, 2048), trials_R=200,
                      delta=DELTA, seed=102, fstar_rule="fixed")
    table = run_sweep(cfg)
    fit = fit_loglog(quantile_curve(table, DELTA), theorem_id="theorem_8_slow")
    elapsed = time.time() - start
    ok = -1.25 <= fit.slope <= -0.75 and elapsed <= 120
    report(2, ok, f"fixed-F* slope {fit.slope:.3f} (need -1 +- 0.25), {elapsed:.0f}s")


def test_criterion_03_sgd_fast_rate():
    start = time.time()
    p = ls2(0.0)
    cert = p.certificate
    # PL certification of the instance at its certificate constant
    pl_ok = certify("pl", "population_F", p, constant=cert.mu_pl * 0.999,
                    probes=500, seed=3).passed
    t0 = math.ceil(4 * cert.smooth_beta / cert.mu_pl)
    est = SgdEstimator(schedule=inverse_time_schedule(cert.mu_pl, t0),
                       t_rule=("n_squared",))
    cfg = SweepConfig(problem=p, estimator=est, n_grid=(32, 64, 128, 256, 512),
                      trials_R=100, delta=DELTA, seed=103,
                      fstar_rule="one_over_n", noise_base=1.0)
    table = run_sweep(cfg)
    fit = fit_loglog(quantile_curve(table, DELTA), "divide_log_n", theorem_id="theorem_13")
    verdict = compare_to_theory(fit, "theorem_13",
                                {"estimator": "sgd", "t_rule": "n_squared",
                                 "fstar_rule": "one_over_n"})
    elapsed = time.time() - start
    ok = (pl_ok and fit.slope <= -1.5 and verdict.verdict == "CONSISTENT"
          and table.flagged_fraction == 0.0 and elapsed <= 600)
    report(3, ok, f"T=n^2 slope {fit.slope:.3f} (need <= -1.5), PL certified {pl_ok}, "
                  f"{verdict.verdict}, {elapsed:.0f}s")


def test_criterion_04_sgd_stability_regime_rate():
    p = ls2(0.5)
    cert = p.certificate
    t0 = math.ceil(4 * cert.smooth_beta / cert.mu_qg)
    est = SgdEstimator(schedule=inverse_time_schedule(cert.mu_qg, t0),
                       t_rule=("n_squared",))
    cfg = SweepConfig(problem=p, estimator=est, n_grid=(32, 64, 128, 256, 512),
                      trials_R=100, delta=DELTA, seed=104, fstar_rule="fixed")
    table = run_sweep(cfg)
    fit = fit_loglog(quantile_curve(table, DELTA), "divide_log_n", theorem_id="theorem_3")
    verdict = compare_to_theory(fit, "theorem_3", {"estimator": "sgd", "t_rule": "n_squared"})
    ok = fit.log_corrected_slope <= -0.8 and verdict.verdict == "CONSISTENT"
    report(4, ok, f"noisy QG log-corrected slope {fit.log_corrected_slope:.3f} "
                  f"(need <= -0.8), {verdict.verdict}")


def test_criterion_05_holder_sgd():
    start = time.time()
    p = make_problem("qnorm_hinge", 2, {"q": 1.5, "w_star": [2.0, 0.5], "noise_level": 0.1})
    cert = p.certificate
    assert cert.holder_alpha == 0.5
    mu_hat = estimate_constant("pl", p, GridSpec(points=20000, seed=3))
    P, alpha = cert.holder_P, cert.holder_alpha
    t0 = math.ceil(max(2.0 * (2 * P) ** (1 / alpha) / mu_hat, 1.0))
    est = SgdEstimator(schedule=inverse_time_schedule(mu_hat, t0), t_rule=("n_pow", 4.0))
    cfg = SweepConfig(problem=p, estimator=est, n_grid=(16, 32, 64, 128), trials_R=40,
                      delta=DELTA, seed=105, fstar_rule="fixed")
    table = run_sweep(cfg)
    fit = fit_loglog(quantile_curve(table, DELTA), "divide_log_n", theorem_id="theorem_2")
    verdict = compare_to_theory(fit, "theorem_2", {"estimator": "sgd", "t_rule": "n_pow"})
    elapsed = time.time() - start
    ok = (fit.log_corrected_slope <= -0.7 and verdict.verdict == "CONSISTENT"
          and elapsed <= 900)
    report(5, ok, f"q=1.5 hinge (T=n^4 capped) log-corrected slope "
                  f"{fit.log_corrected_slope:.3f} (need <= -0.7), {verdict.verdict}, "
                  f"{elapsed:.0f}s")


def test_criterion_06_optimization_error_decay():
    p = ls2(0.5)
    cert = p.certificate
    t0 = math.ceil(4 * cert.smooth_beta / cert.mu_qg)
    sched = inverse_time_schedule(cert.mu_qg, t0)
    curve = run_opt_error_sweep(p, 256, sched, (100, 1000, 10_000, 100_000),
                                runs=40, delta=DELTA, seed=106)
    fit = fit_loglog(curve, "divide_log_n", theorem_id="lemma_26")
    ok = fit.slope <= -0.8
    report(6, ok, f"F_S(w_T+1) - F_S(w_hat) slope vs T {fit.slope:.3f} (need <= -0.8)")


def test_criterion_07_erm_stability_domination():
    p = make_problem("least_squares", 1, {"design": "cube", "w_star": 1.0,
                                          "noise_level": 0.5})
    cert = p.certificate
    qg_ok = certify("qg", "population_F", p, constant=cert.mu_qg * 0.999,
                    probes=500, seed=7).passed
    grid = probe_grid(p)
    curve = []
    dominated = True
    for n in (16, 32, 64, 128, 256, 512, 1024):
        rep = empirical_uniform_stability(p, n, ErmAlgorithm(),
                                          replacement_indices(n, 70 + n), grid,
                                          trials=5, delta=DELTA, seed=700 + n)
        bound = theoretical_stability_bound("erm_qg", L=cert.lipschitz_L,
                                            mu=cert.mu_qg, n=n).value
        dominated &= bool(rep.all_sups.max() <= bound)
        curve.append((n, rep.empirical_sup))
    slope = fit_loglog(curve).slope
    ok = qg_ok and dominated and -1.2 <= slope <= -0.8
    report(7, ok, f"sup <= 4L^2/(n mu) at every n: {dominated}; slope {slope:.3f} "
                  f"(need -1 +- 0.2); QG certified {qg_ok}")


def test_criterion_08_expansion_bound_vacuous():
    p = ls2(0.5)
    cert = p.certificate
    sched = inverse_time_schedule(2.0, 1.0)  # eta_t = 1/(t+1), i.e. c = 1
    grid = probe_grid(p)
    all_vacuous = True
    all_below = True
    details = []
    for n in (100, 1000, 10_000):
        b = theoretical_stability_bound("expansion_nonconvex", c=1.0, beta=1.0,
                                        t=n, n=n, delta=DELTA, M=1.0)
        all_vacuous &= bool(b.vacuous)
        rep = empirical_uniform_stability(p, n, SgdAlgorithm(schedule=sched, T=n),
                                          replacement_indices(n, 80 + n), grid,
                                          trials=4, delta=DELTA, seed=800 + n)
        erm_bound = theoretical_stability_bound("erm_qg", L=cert.lipschitz_L,
                                                mu=cert.mu_qg, n=n).value
        all_below &= bool(rep.all_sups.max() <= erm_bound)
        details.append(f"n={n}: bound={b.value:.1f}, emp={rep.empirical_sup:.2e}")
    ok = all_vacuous and all_below
    report(8, ok, f"expansion bound vacuous at all n: {all_vacuous}; empirical below "
                  f"4L^2/(n mu): {all_below} [{'; '.join(details)}]")


def test_criterion_09_hierarchy_audit():
    g = generator(900)
    quad_ok = 0
    for i in range(20):
        lam = np.sort(g.uniform(0.5, 4.0, size=2))
        p = make_problem("least_squares", 2, {
            "design": "spectrum", "spectrum": [float(lam[0]), float(lam[1])],
            "rotation_seed": int(i), "w_star": [float(v) for v in g.uniform(-2, 2, 2)]})
        results = hierarchy_audit(p, constants={"sc": float(lam[0])}, probes=1200, seed=i)
        quad_ok += all(r.passed for r in results)
    sine = {r.condition: r for r in hierarchy_audit(make_problem("pl_1d_sine", 1, {}),
                                                    probes=2000, seed=0)}
    quart = {r.condition: r for r in hierarchy_audit(make_problem("qg_1d_quartic", 1, {}),
                                                     probes=2000, seed=0)}
    sine_ok = (not sine["sc"].passed) and sine["pl"].passed and sine["qg"].passed
    quart_ok = (quart["qg"].passed and not quart["pl"].passed
                and abs(quart["pl"].worst_point[0]) <= 1e-3)
    ok = quad_ok == 20 and sine_ok and quart_ok
    report(9, ok, f"quadratics {quad_ok}/20 pass all six; sine SC-fail/PL+QG-pass "
                  f"{sine_ok}; quartic QG-pass/PL-fail at w={quart['pl'].worst_point[0]:.2e} "
                  f"{quart_ok}")


def test_criterion_10_vector_bernstein_quantiles():
    p = ls2(0.5)
    bstar = bernstein_moment_bound(p)
    sigma_sq = gradient_second_moment_at_opt(p)
    # monte-carlo oracle: 1e4 replicates of || grad F_S(w*) || at n = 100,
    # simulated directly from the finite design and the label-noise signs
    g = generator(1010)
    pts = p.design.points
    reps, n = 10_000, 100
    idx = g.integers(0, len(pts), (reps, n))
    xi = np.where(g.random((reps, n)) < 0.5, p.noise_level, -p.noise_level)
    grad_means = (-xi[:, :, None] * pts[idx]).mean(axis=1)
    norms = np.sort(np.linalg.norm(grad_means, axis=1))
    ok = True
    details = []
    for delta in (0.1, 0.05, 0.01):
        q = norms[math.ceil((1 - delta) * reps) - 1]
        bound = vector_bernstein_bound(bstar, sigma_sq, n, delta)
        ok &= bool(q <= bound)
        details.append(f"d={delta}: q={q:.4f} <= {bound:.4f}")
    report(10, ok, "; ".join(details))


def test_criterion_11_oracle_equivalence():
    # erm_solve vs normal equations
    p = ls2(0.5)
    ds = sample_dataset(p, 128, 11)
    w = erm_solve(ds).w_hat
    gram = ds.X.T @ ds.X / ds.n
    w_ne = np.linalg.solve(gram, ds.X.T @ ds.y / ds.n)
    erm_ok = float(np.linalg.norm(w - w_ne)) <= 1e-10

    # empirical gradient vs central finite differences
    wq = p.wstar + np.array([0.3, -0.4])
    grad = empirical_gradient(ds, wq)
    h = 1e-6
    fd = np.array([(empirical_risk(ds, wq + h * e) - empirical_risk(ds, wq - h * e)) / (2 * h)
                   for e in np.eye(2)])
    fd_ok = float(np.linalg.norm(fd - grad) / np.linalg.norm(grad)) <= 1e-6

    # fit_loglog exact on pure power laws
    fit = fit_loglog([(m, 2.5 * m**-1.7) for m in (8, 16, 32, 64, 128)])
    fit_ok = abs(fit.slope + 1.7) <= 1e-12 and abs(fit.r_squared - 1.0) <= 1e-12

    # certifier worst points reproduce their ratios on re-evaluation
    repro_ok = True
    quart = make_problem("qg_1d_quartic", 1, {})
    for cond, prob, const in [("qg", p, p.certificate.mu_qg * 2.0),
                              ("qg", p, p.certificate.mu_qg),
                              ("pl", quart, 1e-3),
                              ("pl", p, p.certificate.mu_pl)]:
        r = certify(cond, "population_F", prob, constant=const, probes=400, seed=42)
        wp = np.atleast_1d(r.worst_point)
        gap = population_risk(prob, wp) - prob.certificate.min_pop_risk_Fstar
        if cond == "qg":
            dists = [float(np.sum((wp - m) ** 2)) for m in prob.minimizers()]
            needed, allowed = 0.5 * const * min(dists), gap
        else:
            gsq = float(np.sum(population_gradient(prob, wp) ** 2))
            needed, allowed = gap, gsq / (2.0 * const)
        if needed <= 1e-12:
            ratio = 0.0
        elif allowed <= 1e-12:
            ratio = math.inf
        else:
            ratio = needed / allowed
        if not (ratio == r.worst_ratio or abs(ratio - r.worst_ratio) <= 1e-9 * ratio):
            repro_ok = False
    ok = erm_ok and fd_ok and fit_ok and repro_ok
    report(11, ok, f"erm-vs-normal-eq {erm_ok}; grad-vs-fd {fd_ok}; "
                   f"fit exact {fit_ok}; worst points reproduce {repro_ok}")


def test_criterion_12_quickstart_determinism(tmp_path):
    config = Path(__file__).resolve().parent.parent / "configs" / "quickstart.json"
    start = time.time()
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert run_experiment(str(config), out1) == 0
    elapsed = time.time() - start
    assert run_experiment(str(config), out2) == 0

    def digest(d):
        return {f: hashlib.sha256(open(os.path.join(d, f), "rb").read()).hexdigest()
                for f in sorted(os.listdir(d)) if f != "manifest.json"}

    d1, d2 = digest(out1), digest(out2)
    ok = d1 == d2 and len(d1) >= 3 and elapsed <= 60
    report(12, ok, f"{len(d1)} artifacts byte-identical across reruns: {d1 == d2}; "
                   f"first run {elapsed:.1f}s (limit 60s)")
