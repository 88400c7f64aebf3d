"""SGD with replayable index streams, coupled perturbed runs, and ERM solvers.

The update is w_{t+1} = w_t - eta_t grad f(w_t; z_{j_t}) with w_1 = 0 and
j_t uniform over the dataset (with replacement, multi-pass).  Both the
driver and the replay audit evaluate gradients through the same compiled
kernel, so trajectories are bit-exact functions of
(dataset, schedule, T, seed).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import ConfigurationError, DivergedError, NotConvergedError
from .problems import Dataset, empirical_gradient, empirical_risk
from .seeding import INDEX_CHUNK, index_stream

# ERM is solved to effectively exact gradient norms so that measured excess
# risk reflects the estimator, not solver slack.  Kinds with only a Holder
# continuous gradient cannot reach that; they get the relaxed tolerance.
ERM_TOLERANCE = 1e-10
ERM_TOLERANCE_HOLDER = 1e-6

_SCHED_CODES = {"constant": K.SCHED_CONSTANT, "inverse_time": K.SCHED_INVERSE_TIME,
                "polynomial": K.SCHED_POLYNOMIAL}


@dataclass(frozen=True)
class StepSchedule:
    """Step-size rule eta_t for t = 1, 2, ...

    constant(eta):           eta_t = eta
    inverse_time(mu, t0):    eta_t = 2 / (mu (t + t0))
    polynomial(eta1, theta): eta_t = eta1 * t^(-theta)
    """

    kind: str
    mu: float = 0.0
    t0: float = 0.0
    eta1: float = 0.0
    theta: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        if self.kind not in _SCHED_CODES:
            raise ConfigurationError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "inverse_time":
            if self.mu <= 0 or self.t0 < 1:
                raise ConfigurationError("inverse_time needs mu > 0 and t0 >= 1")
        elif self.kind == "polynomial":
            if self.eta1 <= 0 or not (0.0 < self.theta < 1.0):
                raise ConfigurationError("polynomial needs eta1 > 0 and theta in (0, 1)")
        elif self.eta < 0:
            raise ConfigurationError("constant step must be >= 0")

    @property
    def code(self) -> int:
        return _SCHED_CODES[self.kind]

    @property
    def s0(self) -> float:
        return {"constant": self.eta, "inverse_time": self.mu, "polynomial": self.eta1}[self.kind]

    @property
    def s1(self) -> float:
        return {"constant": 0.0, "inverse_time": self.t0, "polynomial": self.theta}[self.kind]


def constant_schedule(eta: float) -> StepSchedule:
    return StepSchedule(kind="constant", eta=eta)


def inverse_time_schedule(mu: float, t0: float) -> StepSchedule:
    return StepSchedule(kind="inverse_time", mu=mu, t0=t0)


def polynomial_schedule(eta1: float, theta: float) -> StepSchedule:
    return StepSchedule(kind="polynomial", eta1=eta1, theta=theta)


def step_size(schedule: StepSchedule, t: int) -> float:
    """eta_t for step t >= 1; evaluated by the same kernel the driver uses."""
    if t < 1:
        raise ConfigurationError("steps are 1-based")
    return float(K.step_size_kernel(schedule.code, schedule.s0, schedule.s1, float(t)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Full SGD trace: iterates[t] = w_{t+1}, index_sequence[t] = j_{t+1} (0-based)."""

    iterates: np.ndarray  # (T+1, d), iterates[0] = w_1 = 0
    index_sequence: np.ndarray  # (T,)
    schedule: StepSchedule
    dataset: Dataset
    seed: int
    max_deviation: float  # max_t ||w_t - w*||, for the domain-ball audit

    @property
    def T(self) -> int:
        return self.index_sequence.shape[0]

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]


@dataclass(frozen=True, eq=False)
class SgdOutcome:
    """Memory-light run result: only the last iterate is kept."""

    final: np.ndarray
    max_deviation: float


@dataclass(frozen=True, eq=False)
class ERMSolution:
    w_hat: np.ndarray
    method: str  # closed_form | full_gradient_descent
    grad_norm_at_solution: float
    iterations_used: int


def _run_sgd(dataset: Dataset, schedule: StepSchedule, T: int, seed: int,
             record: bool) -> tuple[np.ndarray | None, np.ndarray | None, np.ndarray, float]:
    problem = dataset.problem
    d = problem.dimension
    w = np.zeros(d)
    wstar = np.ascontiguousarray(problem.wstar)
    guard_sq = (10.0 * problem.radius) ** 2
    max_dev_sq = float(np.dot(wstar, wstar))  # w_1 = 0
    X = np.ascontiguousarray(dataset.X)
    Y = np.ascontiguousarray(dataset.y)
    iterates = np.empty((T + 1, d)) if record else None
    idx_full = np.empty(T, dtype=np.int64) if record else None
    if record:
        iterates[0] = 0.0
    empty = np.empty((0, d))
    t = 0
    while t < T:
        hi = min(t + INDEX_CHUNK, T)
        idx = index_stream(seed, dataset.n, t, hi)
        rec = iterates[t + 1 : hi + 1] if record else empty
        status, bad_t, max_dev_sq = K.sgd_chunk(
            problem.kind_code, problem.q, X, Y, idx, schedule.code, schedule.s0,
            schedule.s1, w, t + 1, guard_sq, wstar, max_dev_sq, rec,
        )
        if record:
            idx_full[t:hi] = idx
        if status != 0:
            raise DivergedError(bad_t)
        t = hi
    return iterates, idx_full, w, math.sqrt(max_dev_sq)


def sgd_run(dataset: Dataset, schedule: StepSchedule, T: int, seed: int) -> Trajectory:
    """Run T SGD steps and record the full trajectory.

    Raises DivergedError (with the first bad step) if an iterate becomes
    non-finite or leaves the ball of radius 10 R around the origin.
    """
    if T < 1:
        raise ConfigurationError("T must be >= 1")
    iterates, idx, _w, max_dev = _run_sgd(dataset, schedule, T, seed, record=True)
    return Trajectory(iterates=iterates, index_sequence=idx, schedule=schedule,
                      dataset=dataset, seed=int(seed), max_deviation=max_dev)


def sgd_last_iterate(dataset: Dataset, schedule: StepSchedule, T: int, seed: int) -> SgdOutcome:
    """Same run as sgd_run but keeps only w_{T+1}; used by large sweeps."""
    if T < 1:
        raise ConfigurationError("T must be >= 1")
    _, _, w, max_dev = _run_sgd(dataset, schedule, T, seed, record=False)
    return SgdOutcome(final=w, max_deviation=max_dev)


def _check_coupled(ds_a: Dataset, ds_b: Dataset) -> None:
    if ds_a.n != ds_b.n:
        raise ConfigurationError("coupled runs need datasets of equal size")
    differ = int(np.sum(np.any(ds_a.X != ds_b.X, axis=1) | (ds_a.y != ds_b.y)))
    if differ > 1:
        raise ConfigurationError(f"coupled datasets differ at {differ} positions (max 1)")


def coupled_sgd_run(dataset_s: Dataset, dataset_sprime: Dataset, schedule: StepSchedule,
                    T: int, seed: int) -> tuple[Trajectory, Trajectory]:
    """Two full runs sharing the exact index sequence drawn from ``seed``."""
    _check_coupled(dataset_s, dataset_sprime)
    return sgd_run(dataset_s, schedule, T, seed), sgd_run(dataset_sprime, schedule, T, seed)


def coupled_last_iterates(dataset_s: Dataset, dataset_sprime: Dataset, schedule: StepSchedule,
                          T: int, seed: int) -> tuple[SgdOutcome, SgdOutcome]:
    _check_coupled(dataset_s, dataset_sprime)
    return (sgd_last_iterate(dataset_s, schedule, T, seed),
            sgd_last_iterate(dataset_sprime, schedule, T, seed))


def erm_solve(dataset: Dataset, max_iterations: int = 1_000_000) -> ERMSolution:
    """Empirical risk minimizer.

    least_squares uses the normal equations (min-norm under rank deficiency).
    Smooth kinds run full gradient descent with step 1/beta from w_1 = 0,
    nudged by +1e-6 per coordinate when the start gradient is exactly zero
    (deterministic tie-break toward the positive well).  Holder kinds use a
    quasi-Newton solve at the relaxed tolerance.
    """
    if dataset.n == 0:
        raise ConfigurationError("dataset is empty")
    problem = dataset.problem
    if problem.kind == "least_squares":
        w, *_ = np.linalg.lstsq(dataset.X, dataset.y, rcond=None)
        gnorm = float(np.linalg.norm(empirical_gradient(dataset, w)))
        return ERMSolution(w_hat=w, method="closed_form",
                           grad_norm_at_solution=gnorm, iterations_used=0)

    d = problem.dimension
    w0 = np.zeros(d)
    g0 = empirical_gradient(dataset, w0)
    if float(np.linalg.norm(g0)) == 0.0:
        w0 = w0 + 1e-6

    beta = problem.certificate.smooth_beta
    if beta is None:
        return _erm_solve_holder(dataset, w0)

    X = np.ascontiguousarray(dataset.X)
    Y = np.ascontiguousarray(dataset.y)
    w, gnorm, iters = K.gd_kernel(problem.kind_code, problem.q, X, Y, w0,
                                  1.0 / beta, ERM_TOLERANCE, max_iterations)
    if gnorm > ERM_TOLERANCE:
        raise NotConvergedError(gnorm, iters)
    return ERMSolution(w_hat=w, method="full_gradient_descent",
                       grad_norm_at_solution=float(gnorm), iterations_used=int(iters))


def _erm_solve_holder(dataset: Dataset, w0: np.ndarray) -> ERMSolution:
    from scipy.optimize import minimize

    def fg(w):
        return empirical_risk(dataset, w), empirical_gradient(dataset, w)

    res = minimize(fg, w0, jac=True, method="L-BFGS-B",
                   options={"maxiter": 50_000, "ftol": 0.0, "gtol": 1e-14})
    w, (fval, g) = res.x, fg(res.x)
    step = 0.5
    it = int(res.nit)
    for _ in range(50_000):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= ERM_TOLERANCE_HOLDER * 1e-2:
            break
        w2 = w - step * g
        f2, g2 = fg(w2)
        it += 1
        if f2 < fval:
            w, fval, g = w2, f2, g2
        else:
            step *= 0.5
            if step < 1e-18:
                break
    gnorm = float(np.linalg.norm(g))
    if gnorm > ERM_TOLERANCE_HOLDER:
        raise NotConvergedError(gnorm, it)
    return ERMSolution(w_hat=w, method="full_gradient_descent",
                       grad_norm_at_solution=gnorm, iterations_used=it)


def optimization_error(trajectory_or_w, erm_solution: ERMSolution, dataset: Dataset) -> float:
    """F_S(w_{T+1}) - F_S(w_hat), clamped at zero.

    Tiny negative raw values can occur because the ERM solve is inexact at
    the 1e-10 gradient level; use optimization_error_raw to see them.
    """
    return max(0.0, optimization_error_raw(trajectory_or_w, erm_solution, dataset))


def optimization_error_raw(trajectory_or_w, erm_solution: ERMSolution, dataset: Dataset) -> float:
    if isinstance(trajectory_or_w, Trajectory):
        if trajectory_or_w.dataset is not dataset:
            raise ConfigurationError("trajectory was produced on a different dataset")
        w = trajectory_or_w.final
    elif isinstance(trajectory_or_w, SgdOutcome):
        w = trajectory_or_w.final
    else:
        w = np.asarray(trajectory_or_w, dtype=np.float64)
    return empirical_risk(dataset, w) - empirical_risk(dataset, erm_solution.w_hat)


def dump_trajectory_csv(trajectory: Trajectory, path_or_buf, include_risk: bool = False) -> None:
    """Rows `t, eta_t, j_t, w_1..w_d[, F_S(w_t)]`.

    Row t shows the iterate reached after step t (so row 0 is the start
    point with no step attached); j_t is written 1-based, -1 on row 0.
    """
    ds = trajectory.dataset
    buf = io.StringIO()
    d = ds.problem.dimension
    cols = ["t", "eta_t", "j_t"] + [f"w_{a + 1}" for a in range(d)]
    if include_risk:
        cols.append("F_S(w_t)")
    buf.write(",".join(cols) + "\n")
    for t in range(trajectory.T + 1):
        eta = step_size(trajectory.schedule, t) if t >= 1 else 0.0
        j = int(trajectory.index_sequence[t - 1]) + 1 if t >= 1 else -1
        row = [str(t), repr(float(eta)), str(j)]
        row += [repr(float(v)) for v in trajectory.iterates[t]]
        if include_risk:
            row.append(repr(empirical_risk(ds, trajectory.iterates[t])))
        buf.write(",".join(row) + "\n")
    text = buf.getvalue()
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w") as fh:
            fh.write(text)
