"""Batch command-line front end.

Commands::

    hmfront moments  --input returns.csv [--out DIR] [--full-tensors]
    hmfront front    --method M (--input CSV | --synthetic n T seed level)
                     [--config cfg.json] [--seed K] [--out DIR] [--workers W]
                     [--objectives mean,variance,skewness[,kurtosis]] [--gnuplot]
    hmfront verify   (--input CSV | --synthetic ...) [--samples N] ...
    hmfront quality  --front front.csv (--input CSV | --synthetic ...) ...

A JSON config document may carry any of the flag values; explicit flags
override config fields.  All outputs are deterministic for a fixed seed.

Exit codes: 0 success, 2 input error, 3 solve failure, 4 verification
failure, 5 measure undefined.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import epsilon as eps_mod
from . import nlp, quality, scalarization, tracer
from .errors import (
    ConfigError,
    DataError,
    HmfrontError,
    MeasureUndefinedError,
    ParameterError,
    SolverError,
)
from .fronts import (
    SCHEMA_VERSION,
    FrontApproximation,
    FrontPoint,
    front_to_json_dict,
    read_front_csv,
    write_front_csv,
    write_gnuplot,
    write_json,
)
from .moments import ReturnsMatrix, compute_moments, load_returns_csv
from .problem import (
    OBJECTIVE_SENSES,
    PortfolioMop,
    UtilityParams,
    iterative_utility_optimize,
    utility_optimize,
)
from .synthetic import synthetic_returns

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVE = 3
EXIT_VERIFY = 4
EXIT_MEASURE = 5

METHODS = (
    "sf",
    "msf",
    "nbi",
    "sp",
    "epsilon",
    "pgp",
    "tracer",
    "utility",
    "utility_iterative",
)

METHOD_PARAM_SCHEMAS: dict[str, dict[str, type]] = {
    "sf": {"n_references": int},
    "msf": {"n_references": int},
    "nbi": {"divisions": int},
    "sp": {"divisions": int, "modified": bool},
    "epsilon": {"n1": int, "n2": int, "alpha": float, "k": int, "rounds": int},
    "pgp": {"alpha": float, "beta": float},
    "tracer": {"tau": float, "n_starts": int, "max_points": int, "corrector_tol": float},
    "utility": {"lam": float, "n_starts": int},
    "utility_iterative": {"lambda_start": float, "lambda_stop": float, "lambda_step": float},
}


@dataclass
class RunConfig:
    input_path: str | None = None
    synthetic: tuple[int, int, int, float] | None = None
    method: str = "epsilon"
    method_params: dict = field(default_factory=dict)
    objectives: tuple[str, ...] = ("mean", "variance", "skewness")
    seed: int = 0
    output_dir: str = "."
    workers: int = 1
    gnuplot: bool = False
    full_tensors: bool = False
    front_path: str | None = None
    samples: int = 20
    reference_n: tuple[int, int] = (200, 200)

    def validate_method(self) -> None:
        if self.method not in METHODS:
            raise ConfigError("unknown method %r" % self.method)
        schema = METHOD_PARAM_SCHEMAS[self.method]
        for key, val in self.method_params.items():
            if key not in schema:
                raise ConfigError(
                    "unknown parameter %r for method %s (allowed: %s)"
                    % (key, self.method, ", ".join(sorted(schema)))
                )
            want = schema[key]
            try:
                self.method_params[key] = want(val)
            except (TypeError, ValueError):
                raise ConfigError(
                    "parameter %r for method %s must be %s" % (key, self.method, want.__name__)
                ) from None


def _load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc)) from None
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    return doc


def _build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        doc = _load_config_file(args.config)
        known = {
            "input": "input_path",
            "input_path": "input_path",
            "method": "method",
            "method_params": "method_params",
            "objectives": "objectives",
            "seed": "seed",
            "output_dir": "output_dir",
            "out": "output_dir",
            "workers": "workers",
            "gnuplot": "gnuplot",
            "synthetic": "synthetic",
            "samples": "samples",
            "front": "front_path",
            "reference_n": "reference_n",
        }
        for key, val in doc.items():
            if key not in known:
                raise ConfigError("unknown config field %r" % key)
            attr = known[key]
            if attr == "objectives":
                val = tuple(val)
            if attr == "synthetic" and val is not None:
                val = (int(val[0]), int(val[1]), int(val[2]), float(val[3]))
            if attr == "reference_n":
                val = (int(val[0]), int(val[1]))
            setattr(cfg, attr, val)
    if getattr(args, "input", None):
        cfg.input_path = args.input
    if getattr(args, "synthetic", None):
        raw = args.synthetic
        cfg.synthetic = (int(raw[0]), int(raw[1]), int(raw[2]), float(raw[3]))
    if getattr(args, "method", None):
        cfg.method = args.method
    if getattr(args, "param", None):
        for key, val in args.param:
            cfg.method_params[key] = val
    if getattr(args, "objectives", None):
        cfg.objectives = tuple(s.strip() for s in args.objectives.split(","))
    if getattr(args, "seed", None) is not None:
        cfg.seed = int(args.seed)
    if getattr(args, "out", None):
        cfg.output_dir = args.out
    if getattr(args, "workers", None) is not None:
        cfg.workers = int(args.workers)
    if getattr(args, "gnuplot", False):
        cfg.gnuplot = True
    if getattr(args, "full_tensors", False):
        cfg.full_tensors = True
    if getattr(args, "front", None):
        cfg.front_path = args.front
    if getattr(args, "samples", None) is not None:
        cfg.samples = int(args.samples)
    if getattr(args, "reference_n", None):
        cfg.reference_n = (int(args.reference_n[0]), int(args.reference_n[1]))
    return cfg


def _load_returns(cfg: RunConfig) -> ReturnsMatrix:
    if cfg.input_path and cfg.synthetic:
        raise ConfigError("give either --input or --synthetic, not both")
    if cfg.input_path:
        return load_returns_csv(cfg.input_path)
    if cfg.synthetic:
        n, t_count, seed, level = cfg.synthetic
        return synthetic_returns(n, t_count, seed, level)
    raise ConfigError("an input is required: --input CSV or --synthetic n T seed level")


def _build_mop(cfg: RunConfig) -> PortfolioMop:
    returns = _load_returns(cfg)
    return PortfolioMop(moments=compute_moments(returns), objectives=cfg.objectives)


def _beta_lattice(m: int, divisions: int) -> list[np.ndarray]:
    """Deterministic simplex lattice of hull weights (vertices included)."""
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            out.append(prefix + [remaining])
            return
        for v in range(remaining + 1):
            rec(prefix + [v], remaining - v, slots - 1)

    rec([], divisions, m)
    return [np.array(v, dtype=float) / divisions for v in out]


def _mult_dict(prefix: str, values) -> dict:
    return {"%s_%d" % (prefix, i + 1) : float(v) for i, v in enumerate(values)}


def _point_from_solution(mop, sol, params, mult_prefix="lambda") -> FrontPoint:
    stats = mop.raw_stats(sol.weights)
    return FrontPoint(
        weights=np.asarray(sol.weights, dtype=float),
        mean=stats.mean,
        variance=stats.variance,
        skewness=stats.skewness,
        kurtosis=stats.kurtosis if "kurtosis" in mop.objectives else None,
        params=params,
        multipliers=_mult_dict(mult_prefix, sol.eq_multipliers[1:])
        if len(sol.eq_multipliers) > 1
        else _mult_dict("mu", sol.ineq_multipliers),
        status=sol.status.value,
    )


def _run_front(cfg: RunConfig, mop: PortfolioMop) -> tuple[FrontApproximation, list[str]]:
    """Dispatch the chosen method; returns the front and failure summaries."""
    params = cfg.method_params
    failures: list[str] = []
    method = cfg.method
    if method == "tracer":
        tcfg = tracer.TracerConfig(
            tau=params.get("tau"),
            n_starts=params.get("n_starts", 8),
            max_points=params.get("max_points", 150),
            corrector_tol=params.get("corrector_tol", 1e-8),
        )
        front = tracer.trace(mop, tcfg, seed=cfg.seed, workers=cfg.workers)
    elif method == "epsilon":
        archive = eps_mod.run_adaptive_epsilon(
            mop,
            (params.get("n1", 50), params.get("n2", 50)),
            alpha=params.get("alpha"),
            k=params.get("k", 1),
            rounds=params.get("rounds", 5),
            seed=cfg.seed,
            workers=cfg.workers,
        )
        points = []
        for entry in archive.entries:
            stats = mop.raw_stats(entry.x)
            points.append(
                FrontPoint(
                    weights=entry.x.copy(),
                    mean=stats.mean,
                    variance=stats.variance,
                    skewness=stats.skewness,
                    kurtosis=stats.kurtosis if "kurtosis" in mop.objectives else None,
                    params={"eps_1": float(entry.eps[0]), "eps_2": float(entry.eps[1])},
                    multipliers=_mult_dict("mu", entry.multipliers),
                )
            )
        front = FrontApproximation(
            method="epsilon",
            objectives=mop.objectives,
            points=points,
            metadata={
                "attempted": archive.attempted,
                "infeasible": archive.infeasible_count,
                "failed": archive.failed_count,
                "seed": cfg.seed,
            },
        )
        if archive.failed_count:
            failures.append("%d grid cells failed to converge" % archive.failed_count)
    elif method in ("nbi", "sp"):
        anchors = scalarization.compute_anchors(mop, seed=cfg.seed)
        divisions = params.get("divisions", 10)
        betas = _beta_lattice(mop.m, divisions)
        points = []
        missed_rays = 0
        for beta in betas:
            nbi = scalarization.nbi_params(anchors, beta)
            starts = [beta @ anchors.weights, np.full(mop.n, 1.0 / mop.n)]
            if method == "nbi":
                sol = scalarization.solve_nbi(mop, nbi, starts=starts)
                aux_name = "s"
            else:
                sp = scalarization.SpParams(a=nbi.hull_point, r=-anchors.nbar)
                sol = scalarization.solve_sp(
                    mop, sp, modified=bool(params.get("modified", True)), starts=starts
                )
                aux_name = "t"
            if sol.status is nlp.SolveStatus.INFEASIBLE:
                # the ray from this hull point misses the attainable image
                # set; an expected outcome, not a solver failure
                missed_rays += 1
                continue
            if not sol.converged:
                failures.append(
                    "%s at beta=%s: %s" % (method, np.round(beta, 4).tolist(), sol.status.value)
                )
                continue
            pt_params = {"beta_%d" % (i + 1): float(b) for i, b in enumerate(beta)}
            pt_params[aux_name] = float(sol.aux_value)
            points.append(_point_from_solution(mop, sol, pt_params))
        front = FrontApproximation(
            method=method, objectives=mop.objectives, points=points,
            metadata={"divisions": divisions, "seed": cfg.seed, "missed_rays": missed_rays},
        )
    elif method in ("sf", "msf"):
        anchors = scalarization.compute_anchors(mop, seed=cfg.seed)
        g = anchors.objective_ranges()
        g = np.where(g > 0, g, 1.0)
        rng = np.random.default_rng(cfg.seed)
        n_refs = params.get("n_references", 20)
        solver = scalarization.solve_sf if method == "sf" else scalarization.solve_msf
        points = []
        for i in range(n_refs):
            ref = rng.dirichlet(np.ones(mop.n))
            sf = scalarization.SfParams(g=g, reference_weights=ref)
            sol = solver(mop, sf)
            if not sol.converged:
                failures.append("%s reference %d: %s" % (method, i, sol.status.value))
                continue
            pt_params = {"reference_%d" % (j + 1): float(r) for j, r in enumerate(ref)}
            pt_params["delta"] = float(sol.aux_value)
            points.append(_point_from_solution(mop, sol, pt_params))
        front = FrontApproximation(
            method=method, objectives=mop.objectives, points=points,
            metadata={"n_references": n_refs, "seed": cfg.seed},
        )
    elif method == "pgp":
        scale = scalarization.pgp_scale_factor(mop)
        returns = _load_returns(cfg)
        scaled = ReturnsMatrix(
            assets=returns.assets, observations=returns.observations * scale
        )
        scaled_mop = PortfolioMop(
            moments=compute_moments(scaled), objectives=mop.objectives
        )
        print(
            "note: returns rescaled by %.6g so the unit-variance slice is attainable"
            % scale,
            file=sys.stderr,
        )
        pgp = scalarization.PgpParams(
            alpha=params.get("alpha", 1.0), beta=params.get("beta", 1.0)
        )
        sol = scalarization.solve_pgp(scaled_mop, pgp, seed=cfg.seed)
        points = []
        if sol.converged:
            pt_params = {
                "alpha": pgp.alpha,
                "beta": pgp.beta,
                "d1": sol.info["d1"],
                "d3": sol.info["d3"],
                "scale": scale,
            }
            points.append(_point_from_solution(scaled_mop, sol, pt_params))
        else:
            failures.append("pgp: %s (%s)" % (sol.status.value, sol.message))
        metadata = {"scale": scale, "seed": cfg.seed}
        if sol.info:
            metadata["z_stars"] = [sol.info["z1_star"], sol.info["z3_star"]]
        front = FrontApproximation(
            method="pgp", objectives=mop.objectives, points=points, metadata=metadata
        )
    elif method == "utility":
        u = UtilityParams(lam=params.get("lam", 2.0))
        sol = utility_optimize(mop, u, n_starts=params.get("n_starts", 16), seed=cfg.seed)
        points = []
        if sol.converged:
            points.append(
                _point_from_solution(mop, sol, {"lambda": u.lam, "value": float(sol.value)})
            )
        else:
            failures.append("utility: %s" % sol.status.value)
        front = FrontApproximation(
            method="utility", objectives=mop.objectives, points=points,
            metadata={"lambda": u.lam, "seed": cfg.seed},
        )
    elif method == "utility_iterative":
        start = params.get("lambda_start", 20.0)
        stop = params.get("lambda_stop", 2.0)
        step = params.get("lambda_step", 2.0)
        schedule = []
        lam = start
        while lam >= stop - 1e-12:
            schedule.append(lam)
            lam -= step
        path = iterative_utility_optimize(mop, schedule, seed=cfg.seed)
        points = []
        for lam, w in path:
            stats = mop.raw_stats(w)
            points.append(
                FrontPoint(
                    weights=w,
                    mean=stats.mean,
                    variance=stats.variance,
                    skewness=stats.skewness,
                    kurtosis=stats.kurtosis if "kurtosis" in mop.objectives else None,
                    params={"lambda": float(lam)},
                    multipliers={},
                )
            )
        front = FrontApproximation(
            method="utility_iterative", objectives=mop.objectives, points=points,
            metadata={"schedule": schedule, "seed": cfg.seed},
        )
    else:  # pragma: no cover - guarded by validate_method
        raise ConfigError("unknown method %r" % method)
    front.sort_by_mean_descending()
    return front, failures


def cmd_moments(cfg: RunConfig) -> int:
    returns = _load_returns(cfg)
    moments = compute_moments(returns)
    os.makedirs(cfg.output_dir, exist_ok=True)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "n": moments.n,
        "T": moments.T,
        "assets": list(returns.assets),
        "mu": [float(v) for v in moments.mu],
        "sigma": [[float(v) for v in row] for row in moments.sigma],
        "m3_frobenius": float(np.linalg.norm(moments.m3)),
        "m4_frobenius": float(np.linalg.norm(moments.m4)),
        "m3_extremes": [float(moments.m3.min()), float(moments.m3.max())],
        "m4_extremes": [float(moments.m4.min()), float(moments.m4.max())],
    }
    if cfg.full_tensors:
        doc["m3"] = [[float(v) for v in row] for row in moments.m3]
        doc["m4"] = [[float(v) for v in row] for row in moments.m4]
    write_json(doc, os.path.join(cfg.output_dir, "moments.json"))
    print("moments.json written for %d assets, %d periods" % (moments.n, moments.T))
    return EXIT_OK


def cmd_front(cfg: RunConfig) -> int:
    cfg.validate_method()
    mop = _build_mop(cfg)
    front, failures = _run_front(cfg, mop)
    os.makedirs(cfg.output_dir, exist_ok=True)
    doc = front_to_json_dict(front)
    doc["partial"] = bool(failures)
    doc["failures"] = failures
    doc["seed"] = cfg.seed
    write_front_csv(front, os.path.join(cfg.output_dir, "front.csv"))
    write_json(doc, os.path.join(cfg.output_dir, "front.json"))
    if cfg.gnuplot:
        write_gnuplot(front, os.path.join(cfg.output_dir, "front.dat"))
    print("front: %d points via %s" % (len(front.points), front.method))
    if failures:
        print("method failures:", file=sys.stderr)
        for item in failures:
            print("  " + item, file=sys.stderr)
        return EXIT_SOLVE
    return EXIT_OK


def _verify_cases(cfg: RunConfig, mop: PortfolioMop) -> tuple[list[dict], list[dict]]:
    rng = np.random.default_rng(cfg.seed)
    anchors = scalarization.compute_anchors(mop, seed=cfg.seed)
    cases: list[dict] = []
    m = mop.m
    betas = [np.eye(m)[i] for i in range(m)]
    while len(betas) < cfg.samples:
        betas.append(rng.dirichlet(np.ones(m)))
    equal = np.full(mop.n, 1.0 / mop.n)
    for beta in betas:
        nbi = scalarization.nbi_params(anchors, beta)
        starts = [beta @ anchors.weights, equal]
        nbi_sol = scalarization.solve_nbi(mop, nbi, starts=starts)
        sp_sol = scalarization.solve_sp(
            mop,
            scalarization.SpParams(a=nbi.hull_point, r=-anchors.nbar),
            modified=True,
            starts=starts,
        )
        msf_sol = scalarization.solve_msf(
            mop, scalarization.map_nbi_to_msf(nbi), starts=starts
        )
        for kind, other, delta_aux in (
            ("nbi_vs_modified_sp", sp_sol, None),
            ("nbi_vs_mapped_msf", msf_sol, None),
        ):
            if nbi_sol.converged and other.converged:
                if kind == "nbi_vs_modified_sp":
                    dv = abs(nbi_sol.aux_value + other.aux_value)  # s = -t
                else:
                    dv = abs(nbi_sol.aux_value - other.aux_value)  # s = delta
                dw = float(np.max(np.abs(nbi_sol.weights - other.weights)))
                cases.append(
                    {
                        "check": kind,
                        "beta": [float(b) for b in beta],
                        "delta_value": dv,
                        "delta_weights": dw,
                        "tolerance": 1e-6,
                        "weights_tolerance": 1e-5,
                        "status": "pass" if dv <= 1e-6 and dw <= 1e-5 else "fail",
                    }
                )
            else:
                cases.append(
                    {
                        "check": kind,
                        "beta": [float(b) for b in beta],
                        "status": "skipped",
                        "reason": "%s / %s" % (nbi_sol.status.value, other.status.value),
                    }
                )
    g = anchors.objective_ranges()
    g = np.where(g > 0, g, 1.0)
    for i in range(cfg.samples):
        ref = rng.dirichlet(np.ones(mop.n))
        sf = scalarization.SfParams(g=g, reference_weights=ref)
        sf_sol = scalarization.solve_sf(mop, sf)
        sp = scalarization.map_sf_to_sp(sf, mop.objective_values(ref), p=mop)
        sp_sol = scalarization.solve_sp(mop, sp, starts=[ref, equal])
        if sf_sol.converged and sp_sol.converged:
            dv = abs(sf_sol.aux_value + sp_sol.aux_value)  # delta = -t
            cases.append(
                {
                    "check": "sf_vs_mapped_sp",
                    "reference": int(i),
                    "delta_value": dv,
                    "tolerance": 1e-8,
                    "status": "pass" if dv <= 1e-8 else "fail",
                }
            )
        else:
            cases.append(
                {
                    "check": "sf_vs_mapped_sp",
                    "reference": int(i),
                    "status": "skipped",
                    "reason": "%s / %s" % (sf_sol.status.value, sp_sol.status.value),
                }
            )
    grid = eps_mod.build_grid(mop, (10, 10), seed=cfg.seed)
    for row in range(grid.size):
        eps = grid.centers[row]
        cell = eps_mod._solve_cell(
            mop, eps, grid.constrained, grid.minimized, np.full(mop.n, 1.0 / mop.n), None
        )
        sp = eps_mod.epsilon_as_sp(eps, minimized_index=grid.minimized, m=3)
        sp_starts = [cell.x, equal] if cell.converged else [equal]
        sp_sol = scalarization.solve_sp(mop, sp, starts=sp_starts)
        cell_inf = cell.status is nlp.SolveStatus.INFEASIBLE
        sp_inf = sp_sol.status is nlp.SolveStatus.INFEASIBLE
        if cell_inf or sp_inf:
            cases.append(
                {
                    "check": "epsilon_vs_sp",
                    "eps": [float(e) for e in eps],
                    "status": "pass" if cell_inf == sp_inf else "fail",
                    "reason": "infeasible statuses %s/%s" % (cell_inf, sp_inf),
                }
            )
            continue
        if not (cell.converged and sp_sol.converged):
            cases.append(
                {
                    "check": "epsilon_vs_sp",
                    "eps": [float(e) for e in eps],
                    "status": "skipped",
                    "reason": "%s / %s" % (cell.status.value, sp_sol.status.value),
                }
            )
            continue
        dv = abs(cell.value - sp_sol.value)
        cases.append(
            {
                "check": "epsilon_vs_sp",
                "eps": [float(e) for e in eps],
                "delta_value": dv,
                "tolerance": 1e-6,
                "status": "pass" if dv <= 1e-6 else "fail",
            }
        )
    # PGP diagnostic on a few interior hull weights; the unit-variance slice
    # is placed inside the efficient variance range so the shortfalls can be
    # positive at interior front points
    pgp_rows: list[dict] = []
    scale = scalarization.pgp_efficient_scale(anchors)
    returns = _load_returns(cfg)
    scaled_mop = PortfolioMop(
        moments=compute_moments(
            ReturnsMatrix(assets=returns.assets, observations=returns.observations * scale)
        ),
        objectives=mop.objectives,
    )
    pgp_sol = scalarization.solve_pgp(
        scaled_mop, scalarization.PgpParams(alpha=1.0, beta=1.0), seed=cfg.seed
    )
    if pgp_sol.info and mop.m == 3:
        pgp_params = scalarization.PgpParams(
            alpha=1.0,
            beta=1.0,
            z_stars=(pgp_sol.info["z1_star"], pgp_sol.info["z3_star"]),
        )
        scaled_anchors = scalarization.compute_anchors(scaled_mop, seed=cfg.seed)
        pgp_rng = np.random.default_rng(cfg.seed + 11)
        applicable = 0
        for _ in range(12):
            beta = pgp_rng.dirichlet(np.ones(3))
            nbi = scalarization.nbi_params(scaled_anchors, beta)
            nbi_sol = scalarization.solve_nbi(
                scaled_mop, nbi, starts=[beta @ scaled_anchors.weights, equal]
            )
            if not nbi_sol.converged:
                pgp_rows.append({"beta": beta.tolist(), "applicable": False,
                                 "reason": "nbi " + nbi_sol.status.value})
                continue
            rep = scalarization.check_pgp_kkt(nbi_sol, pgp_params, nbi, scaled_mop)
            pgp_rows.append(
                {
                    "beta": [float(b) for b in beta],
                    "applicable": rep.applicable,
                    "reason": rep.reason,
                    "alpha": rep.alpha,
                    "beta_exponent": rep.beta,
                    "mu2": rep.mu[1] if rep.applicable else None,
                    "stationarity_norm": rep.stationarity_norm,
                    "goal_residuals": list(rep.goal_residuals),
                    "mu2_zero_applicable": rep.mu2_zero_applicable,
                }
            )
            applicable += rep.applicable
            if applicable >= 3:
                break
    return cases, pgp_rows


def cmd_verify(cfg: RunConfig) -> int:
    mop = _build_mop(cfg)
    cases, pgp_rows = _verify_cases(cfg, mop)
    failing = [c for c in cases if c.get("status") == "fail"]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "seed": cfg.seed,
        "cases": cases,
        "pgp_report": pgp_rows,
        "all_pass": not failing,
    }
    os.makedirs(cfg.output_dir, exist_ok=True)
    write_json(doc, os.path.join(cfg.output_dir, "verify.json"))
    print(
        "verify: %d cases, %d failing, %d pgp report rows"
        % (len(cases), len(failing), len(pgp_rows))
    )
    if failing:
        print("failing cases:", file=sys.stderr)
        for c in failing:
            print("  " + json.dumps(c, sort_keys=True), file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_quality(cfg: RunConfig) -> int:
    if not cfg.front_path:
        raise ConfigError("--front is required for the quality command")
    front = read_front_csv(cfg.front_path)
    if len(front.points) < 2:
        raise MeasureUndefinedError("front has fewer than 2 points")
    mop = _build_mop(cfg)
    archive = eps_mod.run_adaptive_epsilon(
        mop, cfg.reference_n, rounds=0, seed=cfg.seed, workers=cfg.workers
    )
    reference = archive.image()
    image = np.array(
        [
            [OBJECTIVE_SENSES[name] * pt.stat(name) for name in mop.objectives]
            for pt in front.points
        ]
    )
    report = quality.quality_report(image, reference, tol=1e-9)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "front": cfg.front_path,
        "reference": {"method": "epsilon", "N": list(cfg.reference_n)},
        "seed": cfg.seed,
    }
    doc.update(report.as_dict())
    os.makedirs(cfg.output_dir, exist_ok=True)
    write_json(doc, os.path.join(cfg.output_dir, "quality.json"))
    print(
        "quality: coverage=%.6g uniformity=%.6g cardinality=%d dominated=%d"
        % (report.coverage_error, report.uniformity, report.cardinality, report.dominated_count)
    )
    return EXIT_OK


def _key_value(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError("expected key=value, got %r" % text)
    key, val = text.split("=", 1)
    for caster in (int, float):
        try:
            return key, caster(val)
        except ValueError:
            continue
    if val.lower() in ("true", "false"):
        return key, val.lower() == "true"
    return key, val


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config document; flags override")
    sub.add_argument("--input", help="returns CSV path")
    sub.add_argument(
        "--synthetic",
        nargs=4,
        metavar=("N", "T", "SEED", "LEVEL"),
        help="generate a synthetic instance instead of reading a CSV",
    )
    sub.add_argument("--seed", type=int, help="random seed (default 0)")
    sub.add_argument("--out", help="output directory (default .)")
    sub.add_argument("--workers", type=int, help="parallel solver workers")
    sub.add_argument(
        "--objectives", help="comma list: mean,variance,skewness[,kurtosis]"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hmfront",
        description="Pareto fronts for higher-moment portfolio selection",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    p_m = subs.add_parser("moments", help="compute and report sample moments")
    _add_common(p_m)
    p_m.add_argument("--full-tensors", action="store_true", dest="full_tensors")
    p_f = subs.add_parser("front", help="compute a front approximation")
    _add_common(p_f)
    p_f.add_argument("--method", choices=METHODS)
    p_f.add_argument(
        "--param",
        action="append",
        type=_key_value,
        metavar="KEY=VALUE",
        help="method parameter override (repeatable)",
    )
    p_f.add_argument("--gnuplot", action="store_true")
    p_v = subs.add_parser("verify", help="run the cross-method equivalence checks")
    _add_common(p_v)
    p_v.add_argument("--samples", type=int, help="parameter samples per check (default 20)")
    p_q = subs.add_parser("quality", help="score a front file against a dense reference")
    _add_common(p_q)
    p_q.add_argument("--front", help="front.csv produced by the front command")
    p_q.add_argument(
        "--reference-n",
        dest="reference_n",
        nargs=2,
        metavar=("N1", "N2"),
        help="reference grid resolution (default 200 200)",
    )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _build_config(args)
        if args.command == "moments":
            return cmd_moments(cfg)
        if args.command == "front":
            return cmd_front(cfg)
        if args.command == "verify":
            return cmd_verify(cfg)
        if args.command == "quality":
            return cmd_quality(cfg)
        raise ConfigError("unknown command %r" % args.command)
    except MeasureUndefinedError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_MEASURE
    except (ConfigError, DataError, ParameterError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, HmfrontError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_SOLVE


def entrypoint() -> None:  # console script shim
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
