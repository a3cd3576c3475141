"""Execution of configs and of the full verification registry."""
from __future__ import annotations

import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, Optional

import numpy as np

from . import exemplars
from .checks import DEFAULT_TOL, REGISTRY
from .config import (
    ExperimentConfig,
    build_action,
    build_decomposition,
    build_endpoint,
    build_mesh,
    build_seeds,
)
from .errors import LocalityLabError
from .io import Check, ExperimentResult, write_json
from .locality import calibrate_epsilon, test_mutual_independence
from .semiclassical import cluster_check

OUT_ENV = "LOCALITY_LAB_OUT"
DEFAULT_OUT = "results"
SUMMARY_FILE = "verify_all_summary.json"
METADATA_FILE = "run_metadata.json"


def resolve_out_dir(cli_value: Optional[str] = None, config_value: Optional[str] = None) -> str:
    """Command-line flag, then the environment variable, then the config, then ``results``."""
    return cli_value or os.environ.get(OUT_ENV) or config_value or DEFAULT_OUT


def _generic_localization(cfg: ExperimentConfig, out_dir: str) -> ExperimentResult:
    mesh = build_mesh(cfg)
    dec = build_decomposition(cfg, mesh)
    spec = build_action(cfg, mesh, dec)
    a, b = build_endpoint(cfg, mesh, "initial"), build_endpoint(cfg, mesh, "final")
    eps = cfg.get("locality", "epsilon", "calibrate")
    if eps == "calibrate":
        eps = calibrate_epsilon(spec, dec, a, b, factor=float(cfg.get("locality", "factor", 10.0)))
    seeds = build_seeds(cfg)
    rep = test_mutual_independence(spec, dec, a, b, seeds, seeds, seeds, epsilon=float(eps), tol=cfg.solver_tol)
    o, n = rep["O_indep_of_N"], rep["N_indep_of_O"]
    metrics = {
        "epsilon": float(eps),
        "O_localized": float(o.verdict == "localized"),
        "N_localized": float(n.verdict == "localized"),
        "mutual": float(rep["mutual"]),
        "O_boundary_drift": o.boundary_drift,
    }
    checks = []
    expect = cfg.get("locality", "expect")
    if expect is not None:
        metrics["verdict_matches_expectation"] = float(o.verdict == expect)
        checks.append(Check("verdict_matches_expectation", "==", 1.0))
    return ExperimentResult(cfg.name, metrics, checks, details={"O": o, "N": n, "mutual": rep["mutual"]})


def _generic_cluster(cfg: ExperimentConfig, out_dir: str) -> ExperimentResult:
    mesh = build_mesh(cfg)
    dec = build_decomposition(cfg, mesh)
    spec = build_action(cfg, mesh, dec)
    a, b = build_endpoint(cfg, mesh, "initial"), build_endpoint(cfg, mesh, "final")
    seeds = build_seeds(cfg)
    rep = cluster_check(spec, dec, a, b, seeds, seeds, seeds, hbar=float(cfg.get("semiclassical", "hbar", 1.0)), tol=cfg.solver_tol)
    metrics = {
        "relative_defect": rep.relative_defect,
        "K_joint": rep.K_joint,
        "K_product": rep.K_product,
        "joint_count": float(rep.joint_count),
        "bijection": float(rep.bijection),
    }
    checks = []
    if cfg.get("semiclassical", "max_defect") is not None:
        checks.append(Check("relative_defect", "<", float(cfg.get("semiclassical", "max_defect"))))
    if cfg.get("semiclassical", "min_defect") is not None:
        checks.append(Check("relative_defect", ">", float(cfg.get("semiclassical", "min_defect"))))
    return ExperimentResult(cfg.name, metrics, checks, details={"intrinsic_counts": list(rep.intrinsic_counts)})


def execute(cfg: ExperimentConfig, out_dir: str) -> ExperimentResult:
    """Run one config; numerical failures are caught into ``result.error``."""
    kind = cfg.experiment
    try:
        if kind == "annulus":
            res = exemplars.run_annulus(
                int(cfg.get("mesh", "n_r", 33)),
                int(cfg.get("mesh", "n_theta", 128)),
                cfg.get("solver", "method", "fourier"),
                out_dir=out_dir,
            )
        elif kind == "circle_wave":
            res = exemplars.run_circle_wave(
                int(cfg.get("region", "ratio_num", 1)),
                int(cfg.get("region", "ratio_den", 4)),
                cfg.get("region", "irrational"),
                out_dir=out_dir,
            )
        elif kind == "nonlocal_source":
            amps = tuple(float(x) for x in cfg.get("source", "amplitudes", [0.0, 0.5, 1.0]))
            res = exemplars.run_nonlocal_source(amps, out_dir=out_dir, solver_tol=cfg.solver_tol)
        elif kind == "localization":
            res = _generic_localization(cfg, out_dir)
        elif kind == "cluster":
            res = _generic_cluster(cfg, out_dir)
        else:
            res = REGISTRY[kind](out_dir=out_dir, solver_tol=cfg.solver_tol)
    except LocalityLabError as exc:
        res = ExperimentResult(kind, {}, (), error=f"{type(exc).__name__}: {exc}")
    res.name = cfg.name
    return res


def write_result(res: ExperimentResult, out_dir: str) -> str:
    path = os.path.join(out_dir, f"{res.name}_result.json")
    write_json(path, res.to_dict())
    return path


def _run_one(name: str, out_dir: str, solver_tol: float):
    t0 = time.perf_counter()
    fn = REGISTRY[name]
    try:
        res = fn(out_dir=out_dir, solver_tol=solver_tol)
    except (LocalityLabError, ValueError, np.linalg.LinAlgError) as exc:
        res = ExperimentResult(name, {}, (), error=f"{type(exc).__name__}: {exc}")
    res.name = name
    write_result(res, out_dir)
    return res, time.perf_counter() - t0


def verify_all(
    out_dir: str,
    jobs: int = 1,
    solver_tol: float = DEFAULT_TOL,
    registry: Optional[Dict] = None,
):
    """Run every registered experiment; returns ``(summary, results, timings)``.

    ``summary`` is deterministic and written to ``verify_all_summary.json``;
    wall-clock timings go to ``run_metadata.json`` only.
    """
    names = list(REGISTRY if registry is None else registry)
    if not names:
        raise LookupError("no experiments")
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outs = list(pool.map(_run_one, names, [out_dir] * len(names), [solver_tol] * len(names)))
    else:
        outs = [_run_one(n, out_dir, solver_tol) for n in names]
    results = {n: r for n, (r, _) in zip(names, outs)}
    timings = {n: t for n, (_, t) in zip(names, outs)}
    summary = {
        "pass": all(r.passed for r in results.values()),
        "solver_tol": solver_tol,
        "experiments": {n: {"pass": r.passed, "failures": r.failures()} for n, r in results.items()},
    }
    write_json(os.path.join(out_dir, SUMMARY_FILE), summary)
    meta = {
        "timings_s": timings,
        "total_s": time.perf_counter() - t0,
        "jobs": jobs,
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    write_json(os.path.join(out_dir, METADATA_FILE), meta)
    return summary, results, timings
