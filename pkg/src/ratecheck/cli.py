"""Config-driven experiment runner.

A single JSON config declares problems and experiments; every run writes one
result artifact per experiment plus a manifest.  Outputs are a pure function
of (config, master seed): rerunning a config overwrites every CSV/JSON byte
identically.  Wall-clock timestamps live only in the manifest.

Exit codes: 0 success, 2 config error, 3 theorem-precondition error,
4 divergence-dominated sweep (> 10% flagged trials).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .conditions import certify, first_failure, hierarchy_audit
from .errors import ConfigurationError, RatecheckError, TheoremPreconditionError
from .optim import StepSchedule
from .problems import ProblemSpec, make_problem
from .rates import (
    ErmEstimator,
    SgdEstimator,
    SweepConfig,
    compare_to_theory,
    fit_loglog,
    quantile_curve,
    run_opt_error_sweep,
    run_sweep,
)
from .seeding import child_seed
from .stability import (
    ErmAlgorithm,
    SgdAlgorithm,
    empirical_uniform_stability,
    probe_grid,
    replacement_indices,
    theoretical_stability_bound,
)

DIVERGENCE_EXIT_THRESHOLD = 0.10

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_DIVERGENCE = 4


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


class ExperimentConfig:
    def __init__(self, raw: dict, path: str = "<memory>"):
        self.raw = raw
        self.path = path
        if not isinstance(raw, dict):
            raise ConfigurationError("config root must be an object")
        self.master_seed = int(_require(raw, "master_seed", "config"))
        self.output_dir = raw.get("output_dir")
        problems = _require(raw, "problems", "config")
        self.problems: dict[str, ProblemSpec] = {}
        for i, spec in enumerate(problems):
            where = f"problems[{i}]"
            pid = _require(spec, "id", where)
            params = dict(spec.get("params", {}))
            params["problem_id"] = pid
            prob = make_problem(_require(spec, "kind", where),
                                int(_require(spec, "dimension", where)), params)
            if pid in self.problems:
                raise ConfigurationError(f"{where}: duplicate problem id {pid!r}")
            self.problems[pid] = prob
        self.experiments = list(raw.get("experiments", []))
        for i, exp in enumerate(self.experiments):
            where = f"experiments[{i}]"
            kind = _require(exp, "kind", where)
            if kind not in ("certify", "hierarchy", "stability", "opt_error_sweep", "rate_sweep"):
                raise ConfigurationError(f"{where}: unknown experiment kind {kind!r}")
            _require(exp, "name", where)
            pid = _require(exp, "problem", where)
            if pid not in self.problems:
                raise ConfigurationError(f"{where}: experiment references undeclared problem {pid!r}")
        names = [e["name"] for e in self.experiments]
        if len(set(names)) != len(names):
            raise ConfigurationError("experiment names must be unique")

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.raw).encode()).hexdigest()


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ConfigurationError(f"{where}: missing required field {key!r}")
    return obj[key]


def parse_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    return ExperimentConfig(raw, path)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2)


def _schedule_from(spec: dict, where: str) -> StepSchedule:
    kind = _require(spec, "kind", where)
    if kind == "inverse_time":
        return StepSchedule(kind=kind, mu=float(_require(spec, "mu", where)),
                            t0=float(_require(spec, "t0", where)))
    if kind == "polynomial":
        return StepSchedule(kind=kind, eta1=float(_require(spec, "eta1", where)),
                            theta=float(_require(spec, "theta", where)))
    if kind == "constant":
        return StepSchedule(kind=kind, eta=float(_require(spec, "eta", where)))
    raise ConfigurationError(f"{where}: unknown schedule kind {kind!r}")


def _estimator_from(spec: dict, where: str):
    etype = _require(spec, "type", where)
    if etype == "erm":
        return ErmEstimator()
    if etype == "sgd":
        sched = _schedule_from(_require(spec, "schedule", where), where + ".schedule")
        t_rule = tuple(_require(spec, "t_rule", where))
        return SgdEstimator(schedule=sched, t_rule=t_rule)
    raise ConfigurationError(f"{where}: unknown estimator type {etype!r}")


# ---------------------------------------------------------------------------
# artifact io
# ---------------------------------------------------------------------------


def _write_text(path: str, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)


def _write_json(path: str, obj) -> None:
    _write_text(path, canonical_json(obj) + "\n")


def _csv_cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(_csv_cell(v) for v in row) for row in rows]
    _write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# experiment execution
# ---------------------------------------------------------------------------


def _run_certify(cfg: ExperimentConfig, exp: dict, seed: int, out: str) -> dict:
    problem = cfg.problems[exp["problem"]]
    result = certify(
        condition=_require(exp, "condition", exp["name"]),
        target=exp.get("target", "population_F"),
        problem_or_dataset=problem,
        constant=float(_require(exp, "constant", exp["name"])),
        probes=int(exp.get("probes", 1024)),
        seed=seed,
    )
    return {
        "condition": result.condition,
        "constant": result.constant_tested,
        "passed": result.passed,
        "worst_ratio": result.worst_ratio,
        "worst_point": np.asarray(result.worst_point).ravel().tolist(),
        "probes": result.probe_count,
        "seed": seed,
        "target": result.target,
    }


def _run_hierarchy(cfg: ExperimentConfig, exp: dict, seed: int, out: str) -> dict:
    problem = cfg.problems[exp["problem"]]
    results = hierarchy_audit(problem, constants=exp.get("constants"),
                              probes=int(exp.get("probes", 2000)), seed=seed)
    return {
        "chain": [
            {
                "condition": r.condition,
                "constant": r.constant_tested,
                "passed": r.passed,
                "worst_ratio": r.worst_ratio,
                "worst_point": np.asarray(r.worst_point).ravel().tolist(),
                "probes": r.probe_count,
            }
            for r in results
        ],
        "first_failure": first_failure(results),
        "seed": seed,
    }


def _stability_bounds(exp: dict, problem: ProblemSpec, n: int, T: int | None,
                      delta: float, eps_opt: float) -> dict:
    spec = _require(exp, "bound_params", exp["name"])
    if spec == "from_certificate":
        cert = problem.certificate
        if cert.lipschitz_L is None or cert.mu_qg is None:
            raise ConfigurationError(
                f"{exp['name']}: certificate lacks L or mu; give bound_params explicitly")
        L, mu = cert.lipschitz_L, cert.mu_qg
    else:
        L, mu = float(_require(spec, "L", "bound_params")), float(_require(spec, "mu", "bound_params"))
    out = {"bound_erm_qg": theoretical_stability_bound("erm_qg", L=L, mu=mu, n=n).value}
    out["bound_sgd_qg"] = (
        theoretical_stability_bound("sgd_qg", L=L, mu=mu, n=n, eps_opt=eps_opt).value
        if T is not None else None)
    exp_params = exp.get("expansion_params")
    if exp_params and T is not None:
        b = theoretical_stability_bound(
            "expansion_nonconvex", c=float(exp_params["c"]), beta=float(exp_params["beta"]),
            t=T, n=n, delta=delta, M=float(exp_params.get("M", 1.0)))
        out["bound_expansion"] = b.value
        out["bound_expansion_vacuous"] = b.vacuous
    else:
        out["bound_expansion"] = None
    return out


def _run_stability(cfg: ExperimentConfig, exp: dict, seed: int, out: str) -> dict:
    problem = cfg.problems[exp["problem"]]
    delta = float(exp.get("delta", 0.05))
    trials = int(_require(exp, "trials", exp["name"]))
    alg_spec = _require(exp, "algorithm", exp["name"])
    grid = probe_grid(problem)
    rows = []
    records = []
    for n in [int(v) for v in _require(exp, "n_grid", exp["name"])]:
        if alg_spec["type"] == "erm":
            algorithm = ErmAlgorithm()
            T = None
        elif alg_spec["type"] == "sgd":
            sched = _schedule_from(alg_spec["schedule"], exp["name"] + ".schedule")
            T = SgdEstimator(schedule=sched, t_rule=tuple(alg_spec["t_rule"])).steps_for(n)
            algorithm = SgdAlgorithm(schedule=sched, T=T)
        else:
            raise ConfigurationError(f"{exp['name']}: unknown algorithm {alg_spec['type']!r}")
        idx = replacement_indices(n, child_seed(seed, n))
        rep = empirical_uniform_stability(problem, n, algorithm, idx, grid, trials,
                                          delta, child_seed(seed, n, 1))
        bounds = _stability_bounds(exp, problem, n, T, delta, rep.eps_opt_max)
        records.append({
            "n": n,
            "algorithm": rep.algorithm,
            "empirical_sup": rep.empirical_sup,
            "quantile": rep.quantile_1_minus_delta,
            "per_index_sup": rep.per_index_sup.tolist(),
            "indices": rep.indices.tolist(),
            "trials": rep.trials,
            "probe_grid_size": rep.probe_grid_size,
            "eps_opt_max": rep.eps_opt_max,
            **bounds,
        })
        rows.append([n, rep.algorithm, rep.empirical_sup, rep.quantile_1_minus_delta,
                     bounds["bound_erm_qg"],
                     bounds["bound_sgd_qg"] if bounds["bound_sgd_qg"] is not None else "",
                     bounds["bound_expansion"] if bounds["bound_expansion"] is not None else ""])
    _write_csv(os.path.join(out, exp["name"] + ".csv"),
               ["n", "algorithm", "empirical_sup", f"q_{1 - delta:g}",
                "bound_erm_qg", "bound_sgd_qg", "bound_expansion"], rows)
    payload: dict = {"points": records, "delta": delta, "seed": seed}
    if len(records) >= 3 and all(r["empirical_sup"] > 0 for r in records):
        fit = fit_loglog([(r["n"], r["empirical_sup"]) for r in records])
        payload["sup_slope"] = fit.slope
    return payload


def _run_rate_sweep(cfg: ExperimentConfig, exp: dict, seed: int, out: str,
                    jobs: int) -> tuple[dict, float]:
    problem = cfg.problems[exp["problem"]]
    estimator = _estimator_from(_require(exp, "estimator", exp["name"]), exp["name"] + ".estimator")
    sweep = SweepConfig(
        problem=problem,
        estimator=estimator,
        n_grid=tuple(_require(exp, "n_grid", exp["name"])),
        trials_R=int(_require(exp, "trials", exp["name"])),
        delta=float(exp.get("delta", 0.05)),
        seed=seed,
        fstar_rule=exp.get("fstar_rule", "fixed"),
        noise_base=float(exp.get("noise_base", 1.0)),
    )
    table = run_sweep(sweep, jobs=jobs)
    _write_csv(
        os.path.join(out, exp["name"] + ".csv"),
        ["n", "trial", "excess_risk", "eps_opt", "eps_opt_raw", "flagged", "T",
         "max_deviation", "fstar"],
        [[r.n, r.trial, r.excess_risk, r.eps_opt, r.eps_opt_raw, r.flagged, r.T,
          r.max_deviation, r.fstar] for r in table.rows],
    )
    payload: dict = {
        "n_grid": list(sweep.n_grid),
        "trials": sweep.trials_R,
        "delta": sweep.delta,
        "estimator": estimator.name,
        "fstar_rule": sweep.fstar_rule,
        "flagged_fraction": table.flagged_fraction,
        "seed": seed,
    }
    theorem = exp.get("theorem")
    try:
        curve = quantile_curve(table, sweep.delta)
    except ConfigurationError as e:
        # divergence-dominated sweeps keep their table but cannot be fitted
        payload["curve_error"] = str(e)
        return payload, table.flagged_fraction
    payload["curve"] = [[n, q] for n, q in curve]
    fit = fit_loglog(curve, exp.get("log_correction", "none"), theorem_id=theorem or "")
    payload["fit"] = _fit_dict(fit)
    if theorem:
        context = {
            "estimator": estimator.name,
            "t_rule": estimator.t_rule[0] if isinstance(estimator, SgdEstimator) else None,
            "fstar_rule": sweep.fstar_rule,
            "fstar_value": problem.certificate.min_pop_risk_Fstar,
            "schedule_kind": estimator.schedule.kind if isinstance(estimator, SgdEstimator) else None,
        }
        verdict = compare_to_theory(fit, theorem, context)
        payload["verdict"] = {
            "theorem_id": verdict.theorem_id,
            "verdict": verdict.verdict,
            "slope_used": verdict.slope_used,
            "theory_exponent": verdict.theory_exponent,
            "slack": verdict.slack,
            "log_corrected": verdict.log_corrected,
            "diagnostics": verdict.diagnostics,
        }
    return payload, table.flagged_fraction


def _run_opt_error(cfg: ExperimentConfig, exp: dict, seed: int, out: str) -> dict:
    problem = cfg.problems[exp["problem"]]
    sched = _schedule_from(_require(exp, "schedule", exp["name"]), exp["name"] + ".schedule")
    curve = run_opt_error_sweep(
        problem,
        n=int(_require(exp, "n", exp["name"])),
        schedule=sched,
        t_grid=_require(exp, "t_grid", exp["name"]),
        runs=int(exp.get("runs", 40)),
        delta=float(exp.get("delta", 0.05)),
        seed=seed,
    )
    _write_csv(os.path.join(out, exp["name"] + ".csv"), ["T", "q"],
               [[t, q] for t, q in curve])
    fit = fit_loglog(curve, "divide_log_n", theorem_id="lemma_26")
    verdict = compare_to_theory(fit, "lemma_26")
    return {
        "curve": [[t, q] for t, q in curve],
        "fit": _fit_dict(fit),
        "verdict": {"theorem_id": "lemma_26", "verdict": verdict.verdict,
                    "slope_used": verdict.slope_used,
                    "theory_exponent": verdict.theory_exponent,
                    "diagnostics": verdict.diagnostics},
        "seed": seed,
    }


def _fit_dict(fit) -> dict:
    return {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "slope_ci_95": list(fit.slope_ci_95),
        "r_squared": fit.r_squared,
        "log_corrected_slope": fit.log_corrected_slope,
        "theory_exponent": fit.theory_exponent if not math.isnan(fit.theory_exponent) else None,
        "theorem_id": fit.theorem_id,
    }


def run_experiment(config_path: str, out_dir: str | None = None, seed_override: int | None = None,
                   jobs: int = 1, kinds: tuple | None = None) -> int:
    """Run the experiments declared in a config file; returns the exit code."""
    cfg = parse_config(config_path)
    if seed_override is not None:
        cfg.raw["master_seed"] = int(seed_override)
        cfg.master_seed = int(seed_override)
    out = out_dir or cfg.output_dir
    if not out:
        raise ConfigurationError("no output directory (config output_dir or --out)")
    os.makedirs(out, exist_ok=True)
    started = time.time()
    exit_code = EXIT_OK
    ran = 0
    for i, exp in enumerate(cfg.experiments):
        if kinds and exp["kind"] not in kinds:
            continue
        seed = child_seed(cfg.master_seed, i)
        try:
            if exp["kind"] == "certify":
                payload = _run_certify(cfg, exp, seed, out)
            elif exp["kind"] == "hierarchy":
                payload = _run_hierarchy(cfg, exp, seed, out)
            elif exp["kind"] == "stability":
                payload = _run_stability(cfg, exp, seed, out)
            elif exp["kind"] == "opt_error_sweep":
                payload = _run_opt_error(cfg, exp, seed, out)
            else:
                payload, flagged = _run_rate_sweep(cfg, exp, seed, out, jobs)
                if flagged > DIVERGENCE_EXIT_THRESHOLD and exit_code == EXIT_OK:
                    exit_code = EXIT_DIVERGENCE
        except TheoremPreconditionError as e:
            payload = {"error": "theorem_precondition", "message": str(e)}
            exit_code = EXIT_PRECONDITION
        artifact = {
            "name": exp["name"],
            "kind": exp["kind"],
            "problem": exp["problem"],
            "config_hash": cfg.config_hash,
            "result": payload,
        }
        _write_json(os.path.join(out, exp["name"] + ".json"), artifact)
        ran += 1
    manifest = {
        "config_path": os.path.abspath(config_path),
        "config_hash": cfg.config_hash,
        "master_seed": cfg.master_seed,
        "experiments_run": ran,
        "wall_time_s": time.time() - started,
        "started_at": started,
        "versions": _versions(),
        "config": cfg.raw,
    }
    _write_json(os.path.join(out, "manifest.json"), manifest)
    return exit_code


def _versions() -> dict:
    import numba
    import scipy

    return {
        "ratecheck": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def emit_report(output_dir: str, force: bool = False) -> int:
    """Aggregate all result artifacts into report.json, sorted by theorem id."""
    names = sorted(f for f in os.listdir(output_dir)
                   if f.endswith(".json") and f not in ("manifest.json", "report.json"))
    artifacts = []
    for f in names:
        with open(os.path.join(output_dir, f)) as fh:
            artifacts.append(json.load(fh))
    if not artifacts:
        print("report: no result artifacts found", file=sys.stderr)
        return EXIT_CONFIG
    hashes = {a.get("config_hash") for a in artifacts}
    if len(hashes) > 1 and not force:
        print("report: artifacts carry mismatched config hashes (use --force)", file=sys.stderr)
        return EXIT_CONFIG
    verdict_rows = []
    other_rows = []
    for a in artifacts:
        res = a.get("result", {})
        if "verdict" in res:
            v = res["verdict"]
            verdict_rows.append({
                "theorem_id": v["theorem_id"],
                "experiment": a["name"],
                "verdict": v["verdict"],
                "slope_used": v["slope_used"],
                "theory_exponent": v["theory_exponent"],
                "fit": res.get("fit"),
            })
        else:
            other_rows.append({"experiment": a["name"], "kind": a["kind"]})
    verdict_rows.sort(key=lambda r: (r["theorem_id"], r["experiment"]))
    report = {
        "config_hash": sorted(hashes)[0] if len(hashes) == 1 else None,
        "verdicts": verdict_rows,
        "non_rate_artifacts": sorted(other_rows, key=lambda r: r["experiment"]),
    }
    _write_json(os.path.join(output_dir, "report.json"), report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


def _common_flags(sp, config=True):
    if config:
        sp.add_argument("--config", required=True, help="experiment config (JSON)")
    sp.add_argument("--out", default=None, help="output directory")
    sp.add_argument("--jobs", type=int, default=1, help="worker count for sweep cells")
    sp.add_argument("--seed", type=int, default=None, help="override the config master seed")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ratecheck",
        description="Run excess-risk, optimization-error, and stability rate experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("list-problems", help="print the problems a config declares")
    sp.add_argument("--config", required=True)

    for name, kinds in [("certify", ("certify", "hierarchy")),
                        ("stability", ("stability",)),
                        ("sweep", ("rate_sweep", "opt_error_sweep"))]:
        sp = sub.add_parser(name, help=f"run {', '.join(kinds)} experiments")
        _common_flags(sp)

    sp = sub.add_parser("fit", help="recompute fits from sweep artifacts")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("report", help="aggregate artifacts into report.json")
    sp.add_argument("--out", required=True)
    sp.add_argument("--force", action="store_true")

    sp = sub.add_parser("replay", help="re-run every experiment from a config or manifest")
    sp.add_argument("--config", default=None)
    sp.add_argument("--manifest", default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--seed", type=int, default=None)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except RatecheckError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


def _dispatch(args) -> int:
    if args.command == "list-problems":
        cfg = parse_config(args.config)
        for pid, p in cfg.problems.items():
            c = p.certificate
            print(f"{pid}: kind={p.kind} d={p.dimension} noise={p.noise_level:g} "
                  f"R={c.domain_radius_R:g} L={_fmt(c.lipschitz_L)} beta={_fmt(c.smooth_beta)} "
                  f"mu_qg={_fmt(c.mu_qg)} mu_pl={_fmt(c.mu_pl)} F*={c.min_pop_risk_Fstar:g}")
        return EXIT_OK
    if args.command in ("certify", "stability", "sweep"):
        kinds = {"certify": ("certify", "hierarchy"), "stability": ("stability",),
                 "sweep": ("rate_sweep", "opt_error_sweep")}[args.command]
        return run_experiment(args.config, args.out, args.seed, args.jobs, kinds)
    if args.command == "fit":
        return _refit(args.out)
    if args.command == "report":
        return emit_report(args.out, force=args.force)
    if args.command == "replay":
        if args.manifest:
            with open(args.manifest) as fh:
                manifest = json.load(fh)
            cfg_path = os.path.join(os.path.dirname(os.path.abspath(args.manifest)),
                                    "_replay_config.json")
            _write_json(cfg_path, manifest["config"])
            out = args.out or os.path.dirname(os.path.abspath(args.manifest))
            return run_experiment(cfg_path, out, args.seed, args.jobs)
        if not args.config:
            raise ConfigurationError("replay needs --config or --manifest")
        return run_experiment(args.config, args.out, args.seed, args.jobs)
    raise ConfigurationError(f"unknown command {args.command!r}")


def _fmt(v) -> str:
    return "unset" if v is None else f"{v:g}"


def _refit(out_dir: str) -> int:
    """Recompute fits for stored rate sweeps from their CSV tables."""
    count = 0
    for f in sorted(os.listdir(out_dir)):
        if not f.endswith(".json") or f in ("manifest.json", "report.json"):
            continue
        path = os.path.join(out_dir, f)
        with open(path) as fh:
            artifact = json.load(fh)
        if artifact.get("kind") != "rate_sweep" or "curve" not in artifact.get("result", {}):
            continue
        res = artifact["result"]
        fit = fit_loglog([(n, q) for n, q in res["curve"]],
                         theorem_id=res.get("fit", {}).get("theorem_id", ""))
        res["fit"] = _fit_dict(fit)
        _write_json(path, artifact)
        count += 1
    print(f"refit {count} sweep artifact(s)")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
