"""Sample-size and iteration sweeps, quantile curves, and exponent fits.

A sweep runs R independent trials per grid value, extracts the empirical
(1 - delta)-quantile of the metric per value, fits an ordinary least squares
line in log-log space, and compares the fitted exponent against a built-in
table of theoretical rates.  Rates are asymptotic upper bounds with
unspecified constants, so the comparison is one-sided: a fit may be steeper
than the theory, never legitimately flatter beyond the slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DivergedError, TheoremPreconditionError
from .optim import StepSchedule, erm_solve, optimization_error_raw, sgd_last_iterate
from .problems import (
    Dataset,
    ProblemSpec,
    empirical_gradient,
    population_gradient,
    population_risk,
    population_risk_mc,
    sample_dataset,
    with_noise_level,
)
from .seeding import child_seed

T_CAP = 10_000_000  # per-run SGD step budget
VERDICT_SLACK = 0.4  # exponent slack for desk-scale quantile curves


# ---------------------------------------------------------------------------
# pointwise metrics
# ---------------------------------------------------------------------------


def excess_risk(problem: ProblemSpec, w: np.ndarray) -> float:
    """F(w) - F*; clamped at zero for closed forms, raw in monte-carlo mode."""
    fstar = problem.certificate.min_pop_risk_Fstar
    if problem.pop_risk_mode == "monte_carlo":
        mean, _, _ = population_risk_mc(problem, w)
        return mean - fstar
    return max(population_risk(problem, w) - fstar, 0.0)


def gradient_deviation(problem: ProblemSpec, dataset: Dataset, w: np.ndarray) -> float:
    """|| grad F(w) - grad F_S(w) ||, the statistical term of the gradient split."""
    if problem.pop_risk_mode != "closed_form":
        raise ConfigurationError("gradient deviation needs a closed-form population gradient")
    return float(np.linalg.norm(population_gradient(problem, w) - empirical_gradient(dataset, w)))


def vector_bernstein_bound(Bstar: float, sigma_sq_at_opt: float, n: int, delta: float) -> float:
    """Deviation bound for a mean of n i.i.d. vectors with Bernstein moments:

        B log(2/delta) / n + sqrt(2 sigma^2 log(2/delta) / n)
    """
    if not (0.0 < delta < 1.0):
        raise ConfigurationError("delta must lie in (0, 1)")
    if Bstar < 0 or sigma_sq_at_opt < 0 or n < 1:
        raise ConfigurationError("need Bstar >= 0, sigma_sq >= 0, n >= 1")
    log_term = math.log(2.0 / delta)
    return Bstar * log_term / n + math.sqrt(2.0 * sigma_sq_at_opt * log_term / n)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ErmEstimator:
    name: str = "erm"


@dataclass(frozen=True, eq=False)
class SgdEstimator:
    """SGD with an explicit schedule and a rule mapping n to the step count.

    t_rule: ("fixed", T) | ("n_squared",) | ("n_pow", p) with T capped at T_CAP.
    """

    schedule: StepSchedule
    t_rule: tuple
    name: str = "sgd"

    def steps_for(self, n: int) -> int:
        rule = self.t_rule[0]
        if rule == "fixed":
            T = int(self.t_rule[1])
        elif rule == "n_squared":
            T = n * n
        elif rule == "n_pow":
            T = int(math.ceil(n ** float(self.t_rule[1])))
        else:
            raise ConfigurationError(f"unknown T rule {rule!r}")
        return min(T, T_CAP)


@dataclass(frozen=True, eq=False)
class SweepConfig:
    problem: ProblemSpec
    estimator: ErmEstimator | SgdEstimator
    n_grid: tuple
    trials_R: int
    delta: float
    seed: int
    # fstar_rule "one_over_n" rescales the label noise to noise_base/sqrt(n)
    # per grid value, which pins F(w*) = noise_base^2 / (2n); "fixed" keeps
    # the problem as declared.
    fstar_rule: str = "fixed"
    noise_base: float = 1.0

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        object.__setattr__(self, "n_grid", grid)
        if len(grid) < 3 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigurationError("n_grid must be strictly increasing with >= 3 points")
        if not (0.0 < self.delta < 1.0):
            raise ConfigurationError("delta must lie in (0, 1)")
        if self.trials_R < math.ceil(1.0 / self.delta):
            raise ConfigurationError(
                f"trials_R={self.trials_R} cannot resolve the {1 - self.delta:.3g} quantile"
            )
        if self.fstar_rule not in ("fixed", "one_over_n"):
            raise ConfigurationError("fstar_rule must be fixed or one_over_n")


@dataclass(frozen=True)
class SweepRow:
    n: int
    trial: int
    excess_risk: float
    eps_opt: float
    eps_opt_raw: float
    flagged: bool  # diverged or left the certified ball
    T: int
    max_deviation: float
    fstar: float


@dataclass(frozen=True, eq=False)
class SweepTable:
    config: SweepConfig
    rows: list

    @property
    def flagged_fraction(self) -> float:
        if not self.rows:
            return 0.0
        return sum(r.flagged for r in self.rows) / len(self.rows)

    def valid_rows(self):
        return [r for r in self.rows if not r.flagged]


def problem_for_n(config: SweepConfig, n: int) -> ProblemSpec:
    if config.fstar_rule == "one_over_n":
        return with_noise_level(config.problem, config.noise_base / math.sqrt(n))
    return config.problem


def run_sweep_cell(problem_n: ProblemSpec, estimator, n: int, trial: int, seed: int) -> SweepRow:
    cell = child_seed(seed, n, trial)
    dataset = sample_dataset(problem_n, n, child_seed(cell, 0))
    fstar = problem_n.certificate.min_pop_risk_Fstar
    if isinstance(estimator, ErmEstimator):
        sol = erm_solve(dataset)
        w = sol.w_hat
        eps_raw = 0.0
        T = 0
        max_dev = float(np.linalg.norm(w - problem_n.wstar))
        flagged = max_dev > problem_n.radius
    else:
        T = estimator.steps_for(n)
        try:
            out = sgd_last_iterate(dataset, estimator.schedule, T, child_seed(cell, 1))
        except DivergedError:
            return SweepRow(n=n, trial=trial, excess_risk=float("nan"), eps_opt=float("nan"),
                            eps_opt_raw=float("nan"), flagged=True, T=T,
                            max_deviation=float("inf"), fstar=fstar)
        w = out.final
        max_dev = out.max_deviation
        flagged = max_dev > problem_n.radius
        eps_raw = optimization_error_raw(out, erm_solve(dataset), dataset)
    if flagged:
        return SweepRow(n=n, trial=trial, excess_risk=float("nan"), eps_opt=float("nan"),
                        eps_opt_raw=float("nan"), flagged=True, T=T,
                        max_deviation=max_dev, fstar=fstar)
    return SweepRow(n=n, trial=trial, excess_risk=excess_risk(problem_n, w),
                    eps_opt=max(eps_raw, 0.0), eps_opt_raw=eps_raw, flagged=False,
                    T=T, max_deviation=max_dev, fstar=fstar)


def run_sweep(config: SweepConfig, jobs: int = 1) -> SweepTable:
    """One row per (n, trial): excess risk, optimization error, audit metrics.

    Rows are a pure function of (config, seed); any execution schedule gives
    the identical table.  Flagged rows (divergence or ball violations) stay
    in the table but are excluded from curves and fits.
    """
    cells = [(n, t) for n in config.n_grid for t in range(config.trials_R)]
    problems = {n: problem_for_n(config, n) for n in config.n_grid}
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        args = [(problems[n], config.estimator, n, t, config.seed) for n, t in cells]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_cell_star, args, chunksize=max(1, len(args) // (4 * jobs))))
    else:
        rows = [run_sweep_cell(problems[n], config.estimator, n, t, config.seed)
                for n, t in cells]
    rows.sort(key=lambda r: (r.n, r.trial))
    return SweepTable(config=config, rows=rows)


def _cell_star(args):
    return run_sweep_cell(*args)


def quantile_curve(table: SweepTable | list, delta: float, metric: str = "excess_risk"):
    """Per-n empirical (1 - delta)-quantile, lower nearest-rank convention."""
    rows = table.valid_rows() if isinstance(table, SweepTable) else [r for r in table if not r.flagged]
    if not rows:
        raise ConfigurationError("no usable trials (all rows flagged or table empty)")
    by_n: dict[int, list[float]] = {}
    for r in rows:
        by_n.setdefault(r.n, []).append(getattr(r, metric))
    need = math.ceil(1.0 / delta)
    curve = []
    for n in sorted(by_n):
        vals = sorted(by_n[n])
        if len(vals) < need:
            raise ConfigurationError(
                f"n={n} has {len(vals)} usable trials; need >= {need} for delta={delta}"
            )
        rank = max(math.ceil((1.0 - delta) * len(vals)), 1)
        curve.append((n, vals[rank - 1]))
    return curve


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    slope_ci_95: tuple
    r_squared: float
    log_corrected_slope: float
    theory_exponent: float = float("nan")
    theorem_id: str = ""


def _ols(x: np.ndarray, y: np.ndarray):
    m = x.size
    xbar, ybar = x.mean(), y.mean()
    sxx = float(np.sum((x - xbar) ** 2))
    slope = float(np.sum((x - xbar) * (y - ybar)) / sxx)
    intercept = float(ybar - slope * xbar)
    resid = y - (intercept + slope * x)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ybar) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    if m > 2 and ss_res > 0:
        from scipy import stats

        se = math.sqrt(ss_res / (m - 2) / sxx)
        half = float(stats.t.ppf(0.975, m - 2)) * se
    else:
        half = 0.0
    return slope, intercept, (slope - half, slope + half), r2


def fit_loglog(curve, log_correction: str = "none", theorem_id: str = "") -> RateFit:
    """OLS fit of log q against log n.

    ``divide_log_n`` also fits log(q / log n), absorbing a multiplicative
    log factor; both slopes are always reported.
    """
    if log_correction not in ("none", "divide_log_n"):
        raise ConfigurationError("log_correction must be none or divide_log_n")
    ns = np.array([float(n) for n, _ in curve])
    qs = np.array([float(q) for _, q in curve])
    if ns.size < 3:
        raise ConfigurationError("need at least 3 curve points to fit")
    bad = np.nonzero(qs <= 0)[0]
    if bad.size:
        raise ConfigurationError(
            f"curve value at n={int(ns[bad[0]])} is nonpositive; cannot fit in log space"
        )
    if np.any(ns <= 1):
        raise ConfigurationError("curve abscissas must exceed 1")
    x = np.log(ns)
    slope, intercept, ci, r2 = _ols(x, np.log(qs))
    corr_slope, *_ = _ols(x, np.log(qs / np.log(ns)))
    theory = THEOREM_TABLE[theorem_id].exponent if theorem_id in THEOREM_TABLE else float("nan")
    return RateFit(slope=slope, intercept=intercept, slope_ci_95=ci, r_squared=r2,
                   log_corrected_slope=corr_slope, theorem_id=theorem_id,
                   theory_exponent=theory)


# ---------------------------------------------------------------------------
# theorem table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TheoremEntry:
    theorem_id: str
    description: str
    exponent: float
    variable: str  # "n" or "T"
    log_correction: str  # which slope the verdict uses
    estimator: str | None  # "erm" / "sgd" / None = either
    t_rule: str | None  # required T rule for SGD entries
    fstar: str  # "any" | "one_over_n" | "fixed_positive"


THEOREM_TABLE: dict[str, TheoremEntry] = {
    e.theorem_id: e
    for e in [
        TheoremEntry("theorem_1", "ERM excess risk, convex + quadratic growth, stability route",
                     -1.0, "n", "divide_log_n", "erm", None, "any"),
        TheoremEntry("theorem_2", "SGD excess risk, Holder-smooth convex, T ~ n^(2/alpha)",
                     -1.0, "n", "divide_log_n", "sgd", "n_pow", "any"),
        TheoremEntry("theorem_3", "SGD excess risk, smooth convex + quadratic growth, T ~ n^2",
                     -1.0, "n", "divide_log_n", "sgd", "n_squared", "any"),
        TheoremEntry("theorem_4", "ERM excess risk, nonconvex with unique-minimizer selection",
                     -1.0, "n", "divide_log_n", "erm", None, "any"),
        TheoremEntry("theorem_5", "SGD excess risk, nonconvex Holder, T ~ n^(2/alpha)",
                     -1.0, "n", "divide_log_n", "sgd", "n_pow", "any"),
        TheoremEntry("theorem_8", "ERM excess risk fast term, gradient-concentration route",
                     -2.0, "n", "none", "erm", None, "one_over_n"),
        TheoremEntry("theorem_8_slow", "ERM excess risk slow term at fixed positive F*",
                     -1.0, "n", "none", "erm", None, "fixed_positive"),
        TheoremEntry("theorem_9", "SGD excess risk, convex fast rate, T ~ n^2",
                     -2.0, "n", "divide_log_n", "sgd", "n_squared", "one_over_n"),
        TheoremEntry("theorem_12", "SGD averaged population-gradient decay, polynomial steps",
                     -0.5, "n", "none", "sgd", None, "any"),
        TheoremEntry("theorem_13", "SGD excess risk, gradient-dominated fast rate, T ~ n^2",
                     -2.0, "n", "divide_log_n", "sgd", "n_squared", "one_over_n"),
        TheoremEntry("lemma_26", "SGD optimization error on a fixed sample versus T",
                     -1.0, "T", "divide_log_n", "sgd", None, "any"),
    ]
}


@dataclass(frozen=True)
class Verdict:
    theorem_id: str
    verdict: str  # CONSISTENT | INCONSISTENT
    slope_used: float
    theory_exponent: float
    slack: float
    log_corrected: bool
    diagnostics: str


def compare_to_theory(fit: RateFit, theorem_id: str, context: dict | None = None,
                      slack: float = VERDICT_SLACK) -> Verdict:
    """One-sided verdict: upper bounds may be beaten, never exceeded.

    ``context`` (estimator, t_rule, fstar_rule, fstar_value, schedule_kind)
    is validated against the table entry's preconditions when provided.
    """
    if theorem_id not in THEOREM_TABLE:
        raise ConfigurationError(f"unknown theorem id {theorem_id!r}")
    entry = THEOREM_TABLE[theorem_id]
    if context is not None:
        _check_preconditions(entry, context)
    log_corrected = entry.log_correction == "divide_log_n"
    slope_used = fit.log_corrected_slope if log_corrected else fit.slope
    ok = slope_used <= entry.exponent + slack
    diag = (f"fitted {'log-corrected ' if log_corrected else ''}slope {slope_used:.4f} vs "
            f"theory {entry.exponent:+.2f} (slack {slack:.2f}); r^2 {fit.r_squared:.4f}")
    return Verdict(theorem_id=theorem_id, verdict="CONSISTENT" if ok else "INCONSISTENT",
                   slope_used=slope_used, theory_exponent=entry.exponent, slack=slack,
                   log_corrected=log_corrected, diagnostics=diag)


def _check_preconditions(entry: TheoremEntry, context: dict) -> None:
    est = context.get("estimator")
    if entry.estimator and est and est != entry.estimator:
        raise TheoremPreconditionError(
            f"{entry.theorem_id} is a {entry.estimator} rate; sweep used {est}")
    t_rule = context.get("t_rule")
    if entry.t_rule and t_rule and t_rule != entry.t_rule:
        raise TheoremPreconditionError(
            f"{entry.theorem_id} requires T rule {entry.t_rule}; sweep used {t_rule}")
    fstar_rule = context.get("fstar_rule")
    fstar_value = context.get("fstar_value")
    if entry.fstar == "one_over_n":
        decaying = fstar_rule == "one_over_n" or (fstar_value is not None and fstar_value == 0.0)
        if fstar_rule is not None and not decaying:
            raise TheoremPreconditionError(
                f"{entry.theorem_id} requires minimal risk O(1/n); sweep holds it fixed "
                f"at {fstar_value}")
    if entry.fstar == "fixed_positive":
        if fstar_rule == "one_over_n" or (fstar_value is not None and fstar_value <= 0.0):
            raise TheoremPreconditionError(
                f"{entry.theorem_id} isolates the fixed-F* term; sweep has F* "
                f"{fstar_value if fstar_rule != 'one_over_n' else 'decaying'}")


# ---------------------------------------------------------------------------
# optimization-error sweep (fixed dataset, varying T)
# ---------------------------------------------------------------------------


def run_opt_error_sweep(problem: ProblemSpec, n: int, schedule: StepSchedule, t_grid,
                        runs: int, delta: float, seed: int):
    """(T, q_{1-delta} of F_S(w_{T+1}) - F_S(w_hat)) on one fixed dataset.

    The dataset is drawn once from ``seed``; each (T, run) cell replays SGD
    with its own index stream.
    """
    t_grid = [int(t) for t in t_grid]
    if len(t_grid) < 3 or any(b <= a for a, b in zip(t_grid, t_grid[1:])):
        raise ConfigurationError("t_grid must be strictly increasing with >= 3 points")
    if runs < math.ceil(1.0 / delta):
        raise ConfigurationError("not enough runs for the requested quantile")
    dataset = sample_dataset(problem, n, child_seed(seed, 0))
    sol = erm_solve(dataset)
    curve = []
    rank = max(math.ceil((1.0 - delta) * runs), 1)
    for T in t_grid:
        vals = []
        for r in range(runs):
            out = sgd_last_iterate(dataset, schedule, T, child_seed(seed, 1, T, r))
            vals.append(max(optimization_error_raw(out, sol, dataset), 0.0))
        vals.sort()
        curve.append((T, vals[rank - 1]))
    return curve
