"""Oracle-comparison suites and the experiment registry used by ``verify-all``.

Every suite takes ``(out_dir, solver_tol)`` and returns an
:class:`~locality_lab.io.ExperimentResult`.
"""
from __future__ import annotations

import math
import os
from fractions import Fraction
from typing import Callable, Dict, Optional

import numpy as np

from . import exemplars, jacobi
from .extremal import on_shell_energy, solve, winding_product, winding_seeds
from .io import Check, ExperimentResult, line_plot, write_csv
from .lattice import arc_predicate, build_circle_mesh, build_point_mesh, decompose
from .locality import calibrate_epsilon, test_localization, test_mutual_independence
from .model import (
    ActionSpec,
    NonlocalKernel,
    Path,
    SitePotential,
    action,
    cut_boundary_stencil,
    discrete_energy,
    eom_residual,
    oscillator_action,
    wave_action,
)
from .modes import circle_mode_analysis, commensurability
from .semiclassical import cluster_check, van_vleck

DEFAULT_TOL = 1e-10


def _out(out_dir, name):
    return None if out_dir is None else os.path.join(out_dir, name)


# ---------------------------------------------------------------- commensurability


def suite_commensurability(out_dir=None, solver_tol=DEFAULT_TOL) -> ExperimentResult:
    """Exact mode matching on the circle for [O]/[M] = 1/4 (equivalently [O]/[N] = 1/3)."""
    rep = commensurability(Fraction(1, 4), 1, n_max=32)
    n_side = circle_mode_analysis(Fraction(1, 4))["N"]
    metrics = {
        "O_matched": float(len(rep.matched)),
        "O_pairs_are_4n": float(all(m == 4 * n for n, m in rep.matched)),
        "O_first_global": float(rep.matched[0][1]),
        "N_fundamental_unmatched": float(1 in n_side.unmatched_intrinsic),
        "N_surjective": float(n_side.surjective),
    }
    checks = [
        Check("O_matched", "==", 32.0),
        Check("O_pairs_are_4n", "==", 1.0),
        Check("O_first_global", "==", 4.0),
        Check("N_fundamental_unmatched", "==", 1.0),
        Check("N_surjective", "==", 0.0),
    ]
    return ExperimentResult("commensurability", metrics, checks, details={"O": rep, "N": n_side})


# ---------------------------------------------------------------- Van Vleck


def _free_particle(K=200):
    return ActionSpec(build_point_mesh(1), 1.0, K, terms=())


def _vv_fixtures():
    """Non-caustic fixtures: (name, spec, phi_i, phi_f)."""
    mesh = build_circle_mesh(8, 1.0)
    x = mesh.positions[:, 0]
    quartic = SitePotential(lambda p: 0.25 * p**4, lambda p: p**3, lambda p: 3 * p**2, 1.0)
    anh = ActionSpec(build_point_mesh(2), 1.0, 200, terms=(quartic,))
    return [
        ("free_particle", _free_particle(), [0.0], [1.0]),
        ("oscillator", oscillator_action([1.0], 1.0, 200), [0.0], [1.0]),
        ("two_oscillators", oscillator_action([1.0, 4.0], 1.0, 200), [0.2, -0.1], [1.0, 0.5]),
        ("wave_circle8", wave_action(mesh, 0.3, 100), 0.1 * np.sin(2 * np.pi * x), 0.1 * np.cos(2 * np.pi * x)),
        ("quartic_pair", anh, [0.1, -0.3], [0.8, 0.4]),
    ]


def suite_van_vleck(out_dir=None, solver_tol=DEFAULT_TOL) -> ExperimentResult:
    metrics, rows = {}, []
    worst = 0.0
    for name, spec, a, b in _vv_fixtures():
        ex = solve(spec, a, b, tol=solver_tol)
        fd = van_vleck(spec, ex, "finite_difference", tol=solver_tol * 1e-2)
        hb = van_vleck(spec, ex, "hessian_block")
        rel = abs(fd.determinant - hb.determinant) / abs(hb.determinant)
        worst = max(worst, rel)
        metrics[f"{name}_det_fd"] = fd.determinant
        metrics[f"{name}_det_schur"] = hb.determinant
        rows.append((name, fd.determinant, hb.determinant, rel))
    target = 1.0 / math.sin(1.0)
    metrics["oscillator_fd_error"] = abs(metrics["oscillator_det_fd"] - target)
    metrics["oscillator_schur_error"] = abs(metrics["oscillator_det_schur"] - target)
    metrics["free_particle_fd_error"] = abs(metrics["free_particle_det_fd"] - 1.0)
    metrics["free_particle_schur_error"] = abs(metrics["free_particle_det_schur"] - 1.0)
    metrics["max_method_disagreement"] = worst
    checks = [
        Check("oscillator_fd_error", "<", 1e-4),
        Check("oscillator_schur_error", "<", 1e-4),
        Check("free_particle_fd_error", "<", 1e-6),
        Check("free_particle_schur_error", "<", 1e-6),
        Check("max_method_disagreement", "<", 1e-4),
    ]
    res = ExperimentResult("van_vleck", metrics, checks)
    if out_dir:
        res.artifacts.append(write_csv(_out(out_dir, "van_vleck.csv"), ["fixture", "det_fd", "det_schur", "rel_diff"], rows))
    return res


# ---------------------------------------------------------------- cluster decomposition


def rotor_pair(K: int = 64) -> ActionSpec:
    """Two uncoupled free rotors (angles mod 2 pi) with masses 1 and 2."""
    return ActionSpec(build_point_mesh(2), 1.0, K, terms=(), mass=[1.0, 2.0], period=2 * np.pi)


def coupled_pair(coupling: float = 0.3, K: int = 64) -> ActionSpec:
    """Two oscillators sharing the cross term ``coupling * x_O x_N``."""
    Q = np.array([[1.0, coupling], [coupling, 1.5]])
    return ActionSpec(build_point_mesh(2), 1.0, K, terms=(NonlocalKernel(Q),))


def suite_cluster(out_dir=None, solver_tol=DEFAULT_TOL) -> ExperimentResult:
    dec = decompose(build_point_mesh(2), [0])
    a, b = np.array([0.3, -0.2]), np.array([1.0, 0.5])
    wO, wN = (-1, 0, 1), (0, 1)
    rep = cluster_check(
        rotor_pair(),
        dec,
        a,
        b,
        seeds=lambda s, x, y: winding_seeds(s, x, y, winding_product(wO, wN)),
        seeds_O=lambda s, x, y: winding_seeds(s, x, y, wO),
        seeds_N=lambda s, x, y: winding_seeds(s, x, y, wN),
        hbar=0.5,
        tol=solver_tol,
    )
    bell = cluster_check(coupled_pair(), dec, a, b, hbar=0.05, tol=solver_tol)
    metrics = {
        "decoupled_defect": rep.relative_defect,
        "decoupled_joint_count": float(rep.joint_count),
        "decoupled_product_count": float(rep.intrinsic_counts[0] * rep.intrinsic_counts[1]),
        "count_bijection": float(rep.bijection),
        "coupled_defect": bell.relative_defect,
        "K_joint_decoupled": rep.K_joint,
        "K_product_decoupled": rep.K_product,
    }
    checks = [
        Check("decoupled_defect", "<", 1e-6),
        Check("decoupled_joint_count", "==", 6.0),
        Check("count_bijection", "==", 1.0),
        Check("coupled_defect", ">", 0.1),
    ]
    return ExperimentResult("cluster_decomposition", metrics, checks, details={"intrinsic_counts": list(rep.intrinsic_counts)})


# ---------------------------------------------------------------- localization detector


def cut_wave_fixture():
    mesh = build_circle_mesh(64, 1.0)
    dec = decompose(mesh, arc_predicate(0.0, 0.25, 1.0))
    x = mesh.positions[:, 0]
    spec = wave_action(mesh, 0.37, 100)
    return spec, dec, 0.1 * np.sin(2 * np.pi * x), 0.1 * np.cos(4 * np.pi * x)


def suite_localization(out_dir=None, solver_tol=DEFAULT_TOL) -> ExperimentResult:
    """Boundary-cut wave action is localized; the uncut one is not."""
    spec, dec, a, b = cut_wave_fixture()
    cut = cut_boundary_stencil(spec, dec)
    eps = calibrate_epsilon(cut, dec, a, b)
    mut = test_mutual_independence(cut, dec, a, b, epsilon=eps, tol=solver_tol)
    rep = mut["O_indep_of_N"]
    uncut = test_localization(spec, dec, a, b, epsilon=eps, tol=solver_tol)
    metrics = {
        "epsilon": eps,
        "cut_localized": float(rep.verdict == "localized"),
        "cut_mutual": float(mut["mutual"]),
        "cut_max_distance": float(np.max(np.min(rep.distances, axis=1))),
        "uncut_localized": float(uncut.verdict == "localized"),
        "uncut_max_distance": float(np.max(np.min(uncut.distances, axis=1))),
    }
    checks = [
        Check("cut_localized", "==", 1.0),
        Check("cut_mutual", "==", 1.0),
        Check("uncut_localized", "==", 0.0),
    ]
    return ExperimentResult("localization", metrics, checks, details={"cut": rep, "uncut": uncut})


# ---------------------------------------------------------------- Jacobi metric


def anisotropic_oscillator(K: int = 400) -> ActionSpec:
    return oscillator_action([1.0, 4.0], 1.0, K)


def suite_jacobi(out_dir=None, solver_tol=DEFAULT_TOL, energy_shift: float = 0.5) -> ExperimentResult:
    spec = anisotropic_oscillator()
    ex = solve(spec, [1.0, 0.0], [0.0, 1.0], tol=solver_tol)
    E = on_shell_energy(spec, ex)
    good = jacobi.verify_equivalence(spec, ex, jacobi.build(spec, E), 1e-3)
    bad = jacobi.verify_equivalence(spec, ex, jacobi.build(spec, E + energy_shift), 1e-3)
    metrics = {"energy": E, "deviation": good.max_deviation, "wrong_energy_deviation": bad.max_deviation}
    checks = [Check("deviation", "<", 1e-3), Check("wrong_energy_deviation", ">", 1e-2)]
    res = ExperimentResult("jacobi", metrics, checks)
    if out_dir:
        v = ex.path.values
        g = good.geodesic.values
        w = bad.geodesic.values
        res.artifacts.append(
            write_csv(
                _out(out_dir, "jacobi_paths.csv"),
                ["x_extremal", "y_extremal", "x_geodesic", "y_geodesic", "x_wrong_energy", "y_wrong_energy"],
                zip(v[:, 0], v[:, 1], g[:, 0], g[:, 1], w[:, 0], w[:, 1]),
            )
        )
    return res


# ---------------------------------------------------------------- solver properties


def _fd_gradient(spec: ActionSpec, path: Path, h: float = 1e-6) -> np.ndarray:
    v = path.values
    g = np.zeros((v.shape[0] - 2, v.shape[1]))
    for k in range(1, v.shape[0] - 1):
        for i in range(v.shape[1]):
            vp, vm = v.copy(), v.copy()
            vp[k, i] += h
            vm[k, i] -= h
            g[k - 1, i] = (action(spec, Path(spec.mesh, vp, spec.total_time)) - action(spec, Path(spec.mesh, vm, spec.total_time))) / (2 * h)
    return g


def oscillator_exact_action(x0: float, x1: float, T: float, omega: float = 1.0) -> float:
    return omega / (2 * math.sin(omega * T)) * ((x0**2 + x1**2) * math.cos(omega * T) - 2 * x0 * x1)


def suite_solver(out_dir=None, solver_tol=DEFAULT_TOL) -> ExperimentResult:
    rng = np.random.default_rng(20240607)
    mesh = build_circle_mesh(6, 1.0)
    sg = SitePotential(lambda p: 1 - np.cos(p), np.sin, np.cos, 2.0)
    fixtures = [
        wave_action(mesh, 0.5, 12),
        ActionSpec(mesh, 0.5, 12, terms=(wave_action(mesh, 0.5, 12).terms[0], sg)),
        oscillator_action([1.0, 3.0], 0.7, 10),
    ]
    grad_err = 0.0
    for spec in fixtures:
        for _ in range(3):
            v = rng.standard_normal((spec.time_steps + 1, spec.mesh.n_sites))
            p = Path(spec.mesh, v, spec.total_time)
            r = eom_residual(spec, p)
            g = _fd_gradient(spec, p)
            grad_err = max(grad_err, float(np.linalg.norm(r - g) / np.linalg.norm(g)))

    Ks = (100, 200, 400)
    act_err, drift = [], []
    exact = oscillator_exact_action(0.0, 1.0, 1.0)
    for K in Ks:
        spec = oscillator_action([1.0], 1.0, K)
        ex = solve(spec, [0.0], [1.0], tol=solver_tol)
        act_err.append(abs(ex.on_shell_action - exact))
        e = discrete_energy(spec, ex.path)
        drift.append(float(np.max(e) - np.min(e)))
    order_action = [math.log2(act_err[i] / act_err[i + 1]) for i in range(len(Ks) - 1)]
    order_drift = [math.log2(drift[i] / drift[i + 1]) for i in range(len(Ks) - 1)]
    metrics = {
        "eom_vs_fd_gradient_rel": grad_err,
        "action_error_K100": act_err[0],
        "action_error_K400": act_err[-1],
        "action_order_min": min(order_action),
        "action_order_max": max(order_action),
        "energy_drift_K100": drift[0],
        "energy_drift_K400": drift[-1],
        "drift_order_min": min(order_drift),
        "drift_order_max": max(order_drift),
    }
    checks = [
        Check("eom_vs_fd_gradient_rel", "<", 1e-6),
        Check("action_order_min", ">", 1.8),
        Check("action_order_max", "<", 2.2),
        Check("drift_order_min", ">", 1.8),
        Check("drift_order_max", "<", 2.2),
    ]
    res = ExperimentResult("solver_properties", metrics, checks)
    if out_dir:
        dts = [1.0 / K for K in Ks]
        res.artifacts.append(write_csv(_out(out_dir, "convergence.csv"), ["dt", "action_error", "energy_drift"], zip(dts, act_err, drift)))
        res.artifacts.append(
            line_plot(
                _out(out_dir, "convergence.svg"),
                dts,
                {"|S_K - S_exact|": act_err, "energy drift": drift},
                "oscillator refinement",
                "dt",
                "error",
                logy=True,
            )
        )
    return res


# ---------------------------------------------------------------- registry


def _annulus(out_dir=None, solver_tol=DEFAULT_TOL):
    return exemplars.run_annulus(out_dir=out_dir)


def _circle_wave(out_dir=None, solver_tol=DEFAULT_TOL):
    return exemplars.run_circle_wave(1, 4, out_dir=out_dir)


def _nonlocal(out_dir=None, solver_tol=DEFAULT_TOL):
    return exemplars.run_nonlocal_source(out_dir=out_dir, solver_tol=solver_tol)


REGISTRY: Dict[str, Callable[..., ExperimentResult]] = {
    "annulus": _annulus,
    "circle_wave": _circle_wave,
    "nonlocal_source": _nonlocal,
    "commensurability": suite_commensurability,
    "van_vleck": suite_van_vleck,
    "cluster_decomposition": suite_cluster,
    "localization": suite_localization,
    "jacobi": suite_jacobi,
    "solver_properties": suite_solver,
}

DESCRIPTIONS = {
    "annulus": "Laplace on the annulus 2<r<4 against (A r^5 + B r^-5) sin 5theta",
    "circle_wave": "circle standing waves, [O]/[M] = 1/4: mode matching and restricted extremals",
    "nonlocal_source": "inverse-Laplacian coupling with a source outside O breaks localization",
    "commensurability": "exact rational mode matching, n' = 4n and the unmatched N fundamental",
    "van_vleck": "Van Vleck determinants: finite differences vs Schur complement vs closed forms",
    "cluster_decomposition": "joint kernel vs product of intrinsic kernels (rotors, coupled oscillators)",
    "localization": "epsilon-localization of a boundary-cut wave action",
    "jacobi": "Jacobi geodesic vs action extremal for the anisotropic oscillator",
    "solver_properties": "EOM vs finite-difference gradient, second-order convergence, energy drift",
}
