"""Saddle-point kernels ``K = A sum sqrt|Delta| exp(i S / hbar)`` and their factorization.

The Van Vleck matrix is ``-d^2 S_cl / dphi_i dphi_f = -dp_f/dphi_i`` with the
physical final momentum ``p_f = dS/dphi_f``; for a free particle its
determinant is ``m / T``.  The normalization ``A`` is fixed to 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CausticError, ConjugatePointError, NonconvergenceError, PropagationError
from .extremal import (
    ExtremalPath,
    ExtremalSet,
    default_seeds,
    enumerate_extremals,
    on_shell_momentum,
    solve,
)
from .lattice import FieldConfig, RegionDecomposition, project
from .model import ActionSpec, Path, _values, action_hessian, intrinsic_action

H_FD = 1e-5
CAUSTIC_FACTOR = 1e8


@dataclass(frozen=True, eq=False)
class VanVleckResult:
    matrix: np.ndarray
    determinant: float
    sign: float
    log_abs_det: float
    near_caustic: bool


@dataclass(frozen=True, eq=False)
class ExtremalContribution:
    action: float
    van_vleck: float
    sign: float
    phase: complex
    validity: float  # |S| / hbar; the expansion wants this >> 1
    label: str = ""


@dataclass(frozen=True, eq=False)
class KernelValue:
    amplitude: complex
    per_extremal: tuple
    hbar: float


def _free_determinant_log(spec: ActionSpec) -> float:
    m = spec.mass_vector[spec.mesh.free]
    return float(np.sum(np.log(m / spec.total_time)))


def _finish(spec, M):
    if M.size == 0:
        return VanVleckResult(M, 1.0, 1.0, 0.0, False)
    sign, logdet = np.linalg.slogdet(M)
    det = float(sign * np.exp(logdet)) if sign != 0 else 0.0
    near = sign == 0 or (logdet - _free_determinant_log(spec)) > np.log(CAUSTIC_FACTOR)
    return VanVleckResult(M, det, float(sign), float(logdet), bool(near))


def _vv_hessian_block(spec: ActionSpec, ex: ExtremalPath) -> np.ndarray:
    # Mixed derivative of the on-shell action through the Schur complement of
    # the interior block: A_0N - A_0I A_II^{-1} A_IN.
    H = action_hessian(spec, ex.path, include_endpoints=True).tocsr()
    nf = len(spec.mesh.free)
    K = spec.time_steps
    first = slice(0, nf)
    last = slice(K * nf, (K + 1) * nf)
    inner = slice(nf, K * nf)
    A_0N = H[first, last].toarray()
    A_0I = H[first, inner]
    A_IN = H[inner, last].toarray()
    A_II = H[inner, inner].tocsc()
    X = spla.splu(A_II, permc_spec="NATURAL").solve(A_IN)
    mixed = A_0N - A_0I @ X
    return -np.asarray(mixed)


def _vv_finite_difference(spec: ActionSpec, ex: ExtremalPath, h: float, tol: float) -> np.ndarray:
    free = spec.mesh.free
    phi = ex.path.values
    ramp = 1.0 - np.linspace(0.0, 1.0, spec.time_steps + 1)[:, None]
    cols = []
    for j in free:
        pf = []
        for s in (h, -h):
            e = np.zeros(spec.mesh.n_sites)
            e[j] = s
            guess = Path(spec.mesh, phi + ramp * e, spec.total_time)
            try:
                sol = solve(spec, phi[0] + e, phi[-1], guess, tol=tol, check_caustic=False)
            except (NonconvergenceError, ConjugatePointError) as exc:
                raise PropagationError(f"perturbed solve failed at site {j}: {exc}") from exc
            pf.append(on_shell_momentum(spec, sol, "final").values[free])
        cols.append((pf[0] - pf[1]) / (2 * h))
    return -np.array(cols).T


def van_vleck(
    spec: ActionSpec,
    ex: ExtremalPath,
    method: str = "hessian_block",
    h_fd: float = H_FD,
    tol: float = 1e-12,
) -> VanVleckResult:
    """Van Vleck matrix over the free sites and its determinant.

    ``finite_difference`` re-solves with the initial endpoint moved by
    ``+-h_fd`` per site and differences the final momenta; ``hessian_block``
    uses the Schur complement of the discrete action Hessian.
    """
    if method == "hessian_block":
        M = _vv_hessian_block(spec, ex)
    elif method == "finite_difference":
        M = _vv_finite_difference(spec, ex, h_fd, tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _finish(spec, M)


def kernel(
    spec: ActionSpec,
    exset,
    hbar: float = 1.0,
    allow_caustic: bool = False,
    method: str = "hessian_block",
) -> KernelValue:
    """Coherent saddle-point sum over the extremals of ``exset``."""
    if not hbar > 0:
        raise ValueError("hbar must be positive")
    contribs = []
    total = 0j
    for ex in exset:
        vv = van_vleck(spec, ex, method)
        if vv.near_caustic and not allow_caustic:
            raise CausticError(f"extremal {ex.seed_label!r} is near a caustic (|Delta| = {abs(vv.determinant):.3e})")
        ph = np.exp(1j * ex.on_shell_action / hbar)
        amp = np.sqrt(abs(vv.determinant)) * ph
        total += amp
        contribs.append(
            ExtremalContribution(ex.on_shell_action, vv.determinant, vv.sign, complex(ph), abs(ex.on_shell_action) / hbar, ex.seed_label)
        )
    return KernelValue(complex(total), tuple(contribs), float(hbar))


def sensitivity_matrix(spec: ActionSpec, ex: ExtremalPath) -> np.ndarray:
    """``dp_f / dphi_i`` over free sites."""
    return -_vv_hessian_block(spec, ex)


@dataclass(frozen=True)
class CrossSensitivityReport:
    offdiag_norm: float
    offdiag_block: float
    diag_block: float


def cross_sensitivity(spec: ActionSpec, dec: RegionDecomposition, ex: ExtremalPath) -> CrossSensitivityReport:
    """Relative size of the O<->N blocks of the endpoint sensitivity matrix.

    Boundary sites are counted with O.
    """
    P = sensitivity_matrix(spec, ex)
    free = spec.mesh.free
    in_N = np.isin(free, dec.interior_N)
    o, n = ~in_N, in_N
    off = np.sqrt(np.sum(P[np.ix_(o, n)] ** 2) + np.sum(P[np.ix_(n, o)] ** 2))
    dia = np.sqrt(np.sum(P[np.ix_(o, o)] ** 2) + np.sum(P[np.ix_(n, n)] ** 2))
    return CrossSensitivityReport(float(off / dia) if dia > 0 else float("inf"), float(off), float(dia))


@dataclass(frozen=True, eq=False)
class ClusterReport:
    K_joint: complex
    K_product: complex
    relative_defect: float
    joint_count: int
    intrinsic_counts: tuple
    bijection: bool
    kernels: tuple = ()


def _seeds(seeds, spec, a, b):
    if seeds is None:
        return default_seeds(spec, a, b)
    if callable(seeds):
        return seeds(spec, a, b)
    return seeds


def relative_defect(k_joint: complex, k_product: complex) -> float:
    if k_joint == 0:
        return float("nan")
    return float(abs(k_joint - k_product) / abs(k_joint))


def cluster_check(
    spec: ActionSpec,
    dec: RegionDecomposition,
    phi_i: FieldConfig,
    phi_f: FieldConfig,
    seeds=None,
    seeds_O=None,
    seeds_N=None,
    hbar: float = 1.0,
    tol: float = 1e-10,
    allow_caustic: bool = False,
) -> ClusterReport:
    """Joint saddle-point kernel versus the product of the two intrinsic kernels.

    Seeds are path lists or callables ``(spec, phi_i, phi_f) -> seeds``;
    ``None`` uses :func:`default_seeds`.  A zero joint kernel leaves the
    defect undefined (NaN).
    """
    a, b = _values(phi_i), _values(phi_f)
    joint = enumerate_extremals(spec, a, b, _seeds(seeds, spec, a, b), tol=tol)
    K_joint = kernel(spec, joint, hbar, allow_caustic)
    parts = []
    counts = []
    for side, side_seeds in (("O", seeds_O), ("N", seeds_N)):
        sspec = intrinsic_action(spec, dec, side)
        sa = project(FieldConfig(spec.mesh, a), dec, side).values
        sb = project(FieldConfig(spec.mesh, b), dec, side).values
        sset = enumerate_extremals(sspec, sa, sb, _seeds(side_seeds, sspec, sa, sb), tol=tol)
        parts.append(kernel(sspec, sset, hbar, allow_caustic))
        counts.append(len(sset))
    K_prod = parts[0].amplitude * parts[1].amplitude
    return ClusterReport(
        K_joint.amplitude,
        complex(K_prod),
        relative_defect(K_joint.amplitude, K_prod),
        len(joint),
        tuple(counts),
        len(joint) == counts[0] * counts[1],
        (K_joint, parts[0], parts[1]),
    )
