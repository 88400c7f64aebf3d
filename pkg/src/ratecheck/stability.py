"""Empirical uniform stability and the closed-form bounds it is compared to.

The empirical estimator replaces one training point at a time, reruns the
algorithm on the original and perturbed datasets (SGD runs share their index
sequence), and takes the sup of per-example loss differences over a fixed
probe grid.  The grid sup lower-bounds the true sup over the sample space,
so "empirical <= bound" checks stay valid and any "empirical > bound" is a
sound refutation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .optim import StepSchedule, coupled_last_iterates, erm_solve, optimization_error_raw
from .problems import (
    ProblemSpec,
    Sample,
    _label_support,
    fresh_sample,
    loss_values,
    sample_dataset,
)
from .seeding import child_seed

# All replacement positions are exercised up to this n; beyond it a fixed
# number of positions is sampled uniformly (per-index distributions are
# identical by exchangeability).
FULL_INDEX_LIMIT = 64
SAMPLED_INDICES = 32


@dataclass(frozen=True, eq=False)
class ErmAlgorithm:
    name: str = "erm"


@dataclass(frozen=True, eq=False)
class SgdAlgorithm:
    schedule: StepSchedule
    T: int
    name: str = "sgd"


@dataclass(frozen=True, eq=False)
class StabilityReport:
    n: int
    algorithm: str
    per_index_sup: np.ndarray  # max over trials, one entry per tested index
    empirical_sup: float
    probe_grid_size: int
    trials: int
    quantile_1_minus_delta: float
    indices: np.ndarray
    all_sups: np.ndarray  # (trials, len(indices)) raw sup values
    eps_opt_max: float = 0.0  # worst optimization error across SGD runs

    def __post_init__(self):
        if self.all_sups.size and not np.all(self.all_sups >= 0):
            raise ConfigurationError("stability sups must be nonnegative")


def probe_grid(problem: ProblemSpec) -> list[Sample]:
    """Design support crossed with label extremes, used for the z-sup."""
    Xs, ys, _ = _label_support(problem)
    return [Sample(features=Xs[i].copy(), label=float(ys[i])) for i in range(len(ys))]


def replacement_indices(n: int, seed: int) -> np.ndarray:
    if n <= FULL_INDEX_LIMIT:
        return np.arange(n)
    from .seeding import generator

    g = generator(seed, 0x1C)
    return np.sort(g.choice(n, size=SAMPLED_INDICES, replace=False))


def _sup_over_grid(problem: ProblemSpec, w_a: np.ndarray, w_b: np.ndarray,
                   grid_X: np.ndarray, grid_y: np.ndarray) -> float:
    W = np.stack([w_a, w_b])
    vals = loss_values(problem, W, grid_X, grid_y)
    return float(np.abs(vals[0] - vals[1]).max())


def empirical_uniform_stability(problem: ProblemSpec, n: int, algorithm,
                                replacement_indices_: np.ndarray | list[int],
                                z_probe_grid: list[Sample], trials: int, delta: float,
                                seed: int) -> StabilityReport:
    """Leave-one-replace stability estimate.

    Per trial and per index i: draw S, draw a fresh z'_i, run the algorithm
    on S and S^i, and record sup_z |f(A(S), z) - f(A(S^i), z)| over the
    probe grid.  Reports per-index maxima over trials, the overall maximum,
    and the empirical (1 - delta)-quantile over all (trial, index) cells.
    """
    if not z_probe_grid:
        raise ConfigurationError("z_probe_grid must be nonempty")
    idx = np.asarray(list(replacement_indices_), dtype=np.int64)
    if idx.size == 0 or idx.min() < 0 or idx.max() >= n:
        raise ConfigurationError("replacement indices must lie in [0, n)")
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")
    if not (0.0 < delta < 1.0):
        raise ConfigurationError("delta must lie in (0, 1)")

    grid_X = np.stack([s.features for s in z_probe_grid])
    grid_y = np.array([s.label for s in z_probe_grid])
    sups = np.zeros((trials, idx.size))
    eps_opt_max = 0.0
    for t in range(trials):
        ds = sample_dataset(problem, n, child_seed(seed, 0x51, t))
        w_base = None
        sol_base = None
        if isinstance(algorithm, ErmAlgorithm):
            w_base = erm_solve(ds).w_hat
        elif isinstance(algorithm, SgdAlgorithm):
            sol_base = erm_solve(ds)
        for k, i in enumerate(idx):
            z_new = fresh_sample(problem, seed, t, int(i))
            ds_i = ds.replaced(int(i), z_new)
            if isinstance(algorithm, ErmAlgorithm):
                w_a = w_base
                w_b = erm_solve(ds_i).w_hat
            elif isinstance(algorithm, SgdAlgorithm):
                run_seed = child_seed(seed, 0x52, t)
                out_a, out_b = coupled_last_iterates(ds, ds_i, algorithm.schedule,
                                                     algorithm.T, run_seed)
                w_a, w_b = out_a.final, out_b.final
                eps_a = max(optimization_error_raw(out_a, sol_base, ds), 0.0)
                eps_b = max(optimization_error_raw(out_b, erm_solve(ds_i), ds_i), 0.0)
                eps_opt_max = max(eps_opt_max, eps_a, eps_b)
            else:
                raise ConfigurationError(f"unknown algorithm {algorithm!r}")
            sups[t, k] = _sup_over_grid(problem, w_a, w_b, grid_X, grid_y)

    flat = np.sort(sups.ravel())
    rank = max(math.ceil((1.0 - delta) * flat.size), 1)
    label = algorithm.name if isinstance(algorithm, ErmAlgorithm) else (
        f"sgd(T={algorithm.T},{algorithm.schedule.kind})")
    return StabilityReport(
        n=n,
        algorithm=label,
        per_index_sup=sups.max(axis=0),
        empirical_sup=float(sups.max()),
        probe_grid_size=len(z_probe_grid),
        trials=trials,
        quantile_1_minus_delta=float(flat[rank - 1]),
        indices=idx,
        all_sups=sups,
        eps_opt_max=eps_opt_max,
    )


# ---------------------------------------------------------------------------
# closed-form bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StabilityBound:
    value: float
    vacuous: bool | None = None  # set for expansion_nonconvex when M is given


def theoretical_stability_bound(kind: str, **params) -> StabilityBound:
    """Closed-form stability bounds.

    erm_qg(L, mu, n)                      4 L^2 / (n mu)
    sgd_qg(L, mu, n, eps_opt)             2 L sqrt(2 eps_opt / mu) + 4 L^2 / (n mu)
    expansion_nonconvex(c, beta, t, n, delta[, M])
                                          t^(c beta) sqrt(log(n / delta) / n),
    the recursive-expansion bound for eta_t = c / (t + 1); with M given, the
    result is flagged vacuous when it exceeds that trivial loss bound.
    """
    def need(*names):
        vals = []
        for name in names:
            if name not in params:
                raise ConfigurationError(f"{kind} bound needs parameter {name!r}")
            v = float(params[name])
            if name != "eps_opt" and v <= 0:
                raise ConfigurationError(f"{kind} bound needs {name} > 0")
            if name == "eps_opt" and v < 0:
                raise ConfigurationError("eps_opt must be >= 0")
            vals.append(v)
        return vals

    if kind == "erm_qg":
        L, mu, n = need("L", "mu", "n")
        return StabilityBound(4.0 * L * L / (n * mu))
    if kind == "sgd_qg":
        L, mu, n, eps_opt = need("L", "mu", "n", "eps_opt")
        return StabilityBound(2.0 * L * math.sqrt(2.0 * eps_opt / mu) + 4.0 * L * L / (n * mu))
    if kind == "expansion_nonconvex":
        c, beta, t, n, delta = need("c", "beta", "t", "n", "delta")
        if not (0.0 < delta < 1.0):
            raise ConfigurationError("delta must lie in (0, 1)")
        value = t ** (c * beta) * math.sqrt(math.log(n / delta) / n)
        vacuous = None
        if "M" in params:
            vacuous = bool(value > float(params["M"]))
        return StabilityBound(value, vacuous)
    raise ConfigurationError(f"unknown stability bound kind {kind!r}")


def generalized_bernstein_from_qg(L: float, mu: float) -> float:
    """Second-moment constant implied by Lipschitz plus quadratic growth: 2 L^2 / mu."""
    if L <= 0 or mu <= 0:
        raise ConfigurationError("L and mu must be positive")
    return 2.0 * L * L / mu


def klochkov_excess_bound(eps_stab: float, eps_opt: float, exp_eps_opt: float, M: float,
                          B: float, n: int, eta: float, delta: float) -> float:
    """High-probability excess-risk bound for a stable algorithm.

        eps_opt + eta E[eps_opt]
        + c (1 + 1/eta) (eps_stab log n + (M + B) / n) log(1/delta)

    The absolute constant c is not pinned down by the theory; it is fixed to
    1 here, so the value is for bound-vs-measurement shape comparisons only.
    """
    if min(eps_stab, eps_opt, exp_eps_opt, M, B) < 0:
        raise ConfigurationError("bound inputs must be nonnegative")
    if eta <= 0 or not (0.0 < delta < 1.0) or n < 1:
        raise ConfigurationError("need eta > 0, delta in (0, 1), n >= 1")
    c = 1.0
    return (eps_opt + eta * exp_eps_opt
            + c * (1.0 + 1.0 / eta) * (eps_stab * math.log(n) + (M + B) / n)
            * math.log(1.0 / delta))
