"""Dynamical independence of a region: epsilon-localization and its diagnostics.

A region O is epsilon-localized between two endpoint configurations when

(i)  every global extremal, restricted to O and its boundary, lies within
     epsilon of some intrinsic extremal of O, and
(ii) every intrinsic extremal lies within epsilon of some restricted global
     extremal.

Both sets are enumerated from seeds, so "every" means every extremal found.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InconclusiveError, InvalidThresholdError, MeshMismatchError
from .extremal import enumerate_extremals, solve
from .lattice import FLAT_L2, FieldConfig, Mesh, RegionDecomposition, SuperMetric, project
from .model import ActionSpec, Path, _values, action, intrinsic_action
from .semiclassical import _seeds

CALIBRATION_FACTOR = 10.0

__all__ = [
    "Matching",
    "LocalityReport",
    "project_path",
    "epsilon_distance",
    "test_localization",
    "test_mutual_independence",
    "calibrate_epsilon",
    "check_additivity",
    "check_product_metric",
    "split_jacobi",
]


@dataclass(frozen=True)
class Matching:
    pairs: tuple  # (global index, intrinsic index, distance)
    unmatched_global: tuple
    unmatched_intrinsic: tuple

    def to_dict(self) -> dict:
        return {
            "pairs": [[g, i, d] for g, i, d in self.pairs],
            "unmatched_global": list(self.unmatched_global),
            "unmatched_intrinsic": list(self.unmatched_intrinsic),
        }


@dataclass(frozen=True, eq=False)
class LocalityReport:
    epsilon: float
    condition_i: bool
    condition_ii: bool
    matching: Matching
    boundary_drift: float
    verdict: str
    distances: np.ndarray = field(repr=False, default=None)  # (global, intrinsic)
    global_count: int = 0
    intrinsic_count: int = 0
    seed_coverage: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "condition_i": self.condition_i,
            "condition_ii": self.condition_ii,
            "verdict": self.verdict,
            "boundary_drift": self.boundary_drift,
            "matching": self.matching.to_dict(),
            "global_count": self.global_count,
            "intrinsic_count": self.intrinsic_count,
            "max_min_distance_i": _max_min(self.distances, 1),
            "max_min_distance_ii": _max_min(self.distances, 0),
            "seed_coverage": self.seed_coverage,
        }


def _max_min(d, axis):
    if d is None or d.size == 0:
        return None
    return float(np.max(np.min(d, axis=axis)))


def _verdict(ci: bool, cii: bool) -> str:
    if ci and cii:
        return "localized"
    return "injective_only" if ci else "not_localized"


def project_path(path: Path, dec: RegionDecomposition, side: str = "O") -> Path:
    """Slice-wise restriction of a global path to ``side`` plus the boundary."""
    if not path.mesh.same_as(dec.parent):
        raise MeshMismatchError("path does not live on the decomposed mesh")
    return Path(dec.submesh(side), path.values[:, dec.sites(side)], path.total_time)


def epsilon_distance(p: Path, q: Path, metric: SuperMetric = FLAT_L2) -> float:
    """``max_t ||p(t) - q(t)||`` in ``metric`` (conformal metrics use ``p(t)`` as base)."""
    if not p.mesh.same_as(q.mesh) or p.values.shape != q.values.shape:
        raise MeshMismatchError("paths live on different meshes or time grids")
    d = p.values - q.values
    if metric.kind == "flat_L2":
        return float(np.sqrt(np.max(np.sum(p.mesh.weights * d**2, axis=1))))
    best = 0.0
    for base, diff in zip(p.values, d):
        best = max(best, float(np.sum(metric.site_weights(p.mesh, base) * diff**2)))
    return float(np.sqrt(best))


def _greedy(D: np.ndarray, epsilon: float) -> Matching:
    pairs, taken = [], set()
    unmatched_g = []
    for g in range(D.shape[0]):
        order = [j for j in np.argsort(D[g], kind="stable") if j not in taken]
        if order and D[g, order[0]] <= epsilon:
            j = int(order[0])
            taken.add(j)
            pairs.append((g, j, float(D[g, j])))
        else:
            unmatched_g.append(g)
    rest = tuple(j for j in range(D.shape[1]) if j not in taken)
    return Matching(tuple(pairs), tuple(unmatched_g), rest)


def _boundary_schedule(spec: ActionSpec, dec: RegionDecomposition, a, b) -> np.ndarray:
    # intrinsic Dirichlet data: boundary values interpolated linearly in time
    s = np.linspace(0.0, 1.0, spec.time_steps + 1)[:, None]
    bnd = dec.boundary
    return (1 - s) * a[bnd] + s * b[bnd]


def test_localization(
    spec: ActionSpec,
    dec: RegionDecomposition,
    phi_i,
    phi_f,
    seeds_global=None,
    seeds_intrinsic=None,
    epsilon: float = None,
    metric: SuperMetric = FLAT_L2,
    tol: float = 1e-10,
    jobs: int = 1,
) -> LocalityReport:
    """Decide whether O (the ``"O"`` side of ``dec``) is epsilon-localized.

    Seeds follow :func:`locality_lab.semiclassical.cluster_check`; ``None``
    means the default straight-line-plus-bumps family.
    """
    if epsilon is None or not epsilon > 0:
        raise InvalidThresholdError(f"epsilon must be positive, got {epsilon!r}")
    a, b = _values(phi_i), _values(phi_f)
    glob = enumerate_extremals(spec, a, b, _seeds(seeds_global, spec, a, b), tol=tol, jobs=jobs)
    if glob.empty:
        raise InconclusiveError(
            f"no global extremal found from {len(glob.seed_labels)} seeds; localization cannot be tested"
        )
    ispec = intrinsic_action(spec, dec, "O")
    sa = project(FieldConfig(spec.mesh, a), dec, "O").values
    sb = project(FieldConfig(spec.mesh, b), dec, "O").values
    intr = enumerate_extremals(ispec, sa, sb, _seeds(seeds_intrinsic, ispec, sa, sb), tol=tol, jobs=jobs)

    projected = [project_path(ex.path, dec, "O") for ex in glob]
    D = np.array([[epsilon_distance(p, q.path, metric) for q in intr] for p in projected]).reshape(len(projected), len(intr))
    ci = bool(D.shape[1] > 0 and np.all(np.min(D, axis=1) <= epsilon))
    cii = bool(D.shape[1] == 0 or np.all(np.min(D, axis=0) <= epsilon))
    sched = _boundary_schedule(spec, dec, a, b)
    drift = max((float(np.max(np.abs(ex.path.values[:, dec.boundary] - sched), initial=0.0)) for ex in glob), default=0.0)
    coverage = {
        "global_seeds": len(glob.seed_labels),
        "global_failures": len(glob.failures),
        "intrinsic_seeds": len(intr.seed_labels),
        "intrinsic_failures": len(intr.failures),
    }
    return LocalityReport(
        float(epsilon), ci, cii, _greedy(D, epsilon), drift, _verdict(ci, cii), D, len(glob), len(intr), coverage
    )


test_localization.__test__ = False


def test_mutual_independence(
    spec: ActionSpec,
    dec: RegionDecomposition,
    phi_i,
    phi_f,
    seeds_global=None,
    seeds_O=None,
    seeds_N=None,
    epsilon: float = None,
    **kw,
) -> dict:
    """Localization of O against N and of N against O; mutual iff both are localized."""
    o = test_localization(spec, dec, phi_i, phi_f, seeds_global, seeds_O, epsilon, **kw)
    n = test_localization(spec, dec.swapped(), phi_i, phi_f, seeds_global, seeds_N, epsilon, **kw)
    return {
        "O_indep_of_N": o,
        "N_indep_of_O": n,
        "mutual": o.verdict == "localized" and n.verdict == "localized",
    }


test_mutual_independence.__test__ = False


def calibrate_epsilon(
    spec: ActionSpec,
    dec: RegionDecomposition,
    phi_i,
    phi_f,
    factor: float = CALIBRATION_FACTOR,
    floor: float = 1e-12,
    tol: float = 1e-12,
) -> float:
    """``factor`` times the time-discretization error of the restricted extremal.

    The error is estimated by solving at ``K`` and ``2K`` steps and comparing
    the restricted paths on the shared slices.
    """
    a, b = _values(phi_i), _values(phi_f)
    coarse = solve(spec, a, b, tol=tol, check_caustic=False)
    fine = solve(spec.with_(time_steps=2 * spec.time_steps), a, b, tol=tol, check_caustic=False)
    pc = project_path(coarse.path, dec)
    pf = project_path(fine.path, dec)
    pf = Path(pf.mesh, pf.values[::2], pf.total_time)
    return float(factor * max(epsilon_distance(pc, pf), floor))


@dataclass(frozen=True)
class AdditivityReport:
    max_defect: float
    defects: tuple

    def to_dict(self) -> dict:
        return {"max_defect": self.max_defect, "defects": list(self.defects)}


def check_additivity(spec: ActionSpec, dec: RegionDecomposition, sample_paths: Sequence[Path]) -> AdditivityReport:
    """``max |S_M - S_O - S_N|`` over the samples, using the intrinsic actions."""
    so = intrinsic_action(spec, dec, "O")
    sn = intrinsic_action(spec, dec, "N")
    out = []
    for p in sample_paths:
        out.append(abs(action(spec, p) - action(so, project_path(p, dec, "O")) - action(sn, project_path(p, dec, "N"))))
    return AdditivityReport(float(max(out, default=0.0)), tuple(float(x) for x in out))


@dataclass(frozen=True, eq=False)
class SplitConformalMetric:
    """``diag(f_O(phi) g_O, f_N(phi) g_N)`` with one conformal factor per block.

    Boundary sites belong to the O block.
    """

    base: np.ndarray
    dec: RegionDecomposition
    factor_O: Callable
    factor_N: Callable

    def matrix(self, phi) -> np.ndarray:
        phi = np.asarray(phi, float)
        n_mask = np.zeros(len(phi), bool)
        n_mask[self.dec.interior_N] = True
        f = np.where(n_mask, self.factor_N(phi), self.factor_O(phi))
        return np.diag(f * self.base)


def split_jacobi(spec: ActionSpec, dec: RegionDecomposition, energy_O: float, energy_N: float) -> SplitConformalMetric:
    """Jacobi-like metric whose O and N blocks see only their own potential.

    ``V_O`` and ``V_N`` are obtained by evaluating ``V`` with the other block
    set to zero, which is exact for decoupled potentials with ``V(0) = 0``.
    """
    n_mask = np.zeros(spec.mesh.n_sites, bool)
    n_mask[dec.interior_N] = True

    def f_O(phi):
        return 2.0 * (energy_O - spec.potential(np.where(n_mask, 0.0, phi)))

    def f_N(phi):
        return 2.0 * (energy_N - spec.potential(np.where(n_mask, phi, 0.0)))

    return SplitConformalMetric(spec.mass_vector, dec, f_O, f_N)


@dataclass(frozen=True)
class ProductMetricReport:
    warp_factor_variation: float
    cross_block: float
    is_product: bool

    def to_dict(self) -> dict:
        return {
            "warp_factor_variation": self.warp_factor_variation,
            "cross_block": self.cross_block,
            "is_product": self.is_product,
        }


def _metric_fn(metric, mesh: Mesh):
    if isinstance(metric, SuperMetric):
        return lambda phi: metric.matrix(mesh, phi)
    return metric.matrix


def check_product_metric(
    metric,
    dec: RegionDecomposition,
    base=None,
    n_samples: int = 8,
    amplitude: float = 0.1,
    seed: int = 0,
) -> ProductMetricReport:
    """Sample the metric at configurations that differ only in the N factor.

    ``metric`` is a :class:`SuperMetric` or anything with ``matrix(phi)``.
    The warp variation is the largest relative change of the O block
    (boundary included); the metric is a product when that variation is
    below 1e-10 and the O-N cross blocks vanish.
    """
    mesh = dec.parent
    G = _metric_fn(metric, mesh)
    phi0 = np.zeros(mesh.n_sites) if base is None else _values(base).astype(float)
    o = dec.sites("O")
    nn = dec.interior_N
    rng = np.random.default_rng(seed)
    M0 = G(phi0)
    ref = np.max(np.abs(M0[np.ix_(o, o)]))
    warp, cross = 0.0, float(np.max(np.abs(M0[np.ix_(o, nn)]), initial=0.0))
    for _ in range(n_samples):
        phi = phi0.copy()
        phi[nn] += amplitude * rng.standard_normal(len(nn))
        M = G(phi)
        warp = max(warp, float(np.max(np.abs(M[np.ix_(o, o)] - M0[np.ix_(o, o)])) / ref))
        cross = max(cross, float(np.max(np.abs(M[np.ix_(o, nn)]), initial=0.0)))
    return ProductMetricReport(warp, cross, bool(warp < 1e-10 and cross < 1e-10))
