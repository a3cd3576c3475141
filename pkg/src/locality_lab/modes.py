"""Laplacian eigenmodes, the circle commensurability analysis, and mode-sector kernels."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidCountError, UnsupportedError
from .extremal import solve
from .lattice import Mesh, RegionDecomposition, build_point_mesh
from .model import ActionSpec, NonlocalKernel, Source
from .semiclassical import kernel, relative_defect

N_MAX = 32


@dataclass(frozen=True, eq=False)
class ModeBasis:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # (k, n_sites), orthonormal under flat L2
    mesh: Mesh
    boundary: str
    residuals: np.ndarray


def eigenmodes(mesh: Mesh, boundary: str = "periodic", k: int = 1) -> ModeBasis:
    """Lowest ``k`` eigenpairs of ``-Laplacian = W^{-1} S``.

    With ``boundary="dirichlet"`` the mesh's Dirichlet sites are pinned to
    zero; with ``"periodic"`` every site is a degree of freedom.
    """
    if boundary not in ("periodic", "dirichlet"):
        raise ValueError("boundary must be 'periodic' or 'dirichlet'")
    dof = mesh.free if boundary == "dirichlet" else mesh.sites
    if int(k) != k or k < 1 or k > len(dof):
        raise InvalidCountError(f"cannot take {k} modes from {len(dof)} degrees of freedom")
    k = int(k)
    S = mesh.stiffness_matrix()[dof][:, dof]
    w = mesh.weights[dof]
    if len(dof) <= 2000:
        lam, vec = sla.eigh(S.toarray(), np.diag(w), subset_by_index=[0, k - 1])
    else:
        lam, vec = spla.eigsh(S.tocsc(), k=k, M=sp.diags(w).tocsc(), sigma=-1e-8, which="LM")
        order = np.argsort(lam)
        lam, vec = lam[order], vec[:, order]
    vectors = np.zeros((k, mesh.n_sites))
    vectors[:, dof] = vec.T
    # fix signs so that output is reproducible: first significant entry positive
    for v in vectors:
        i = np.flatnonzero(np.abs(v) > 1e-8 * np.max(np.abs(v)))[0]
        if v[i] < 0:
            v *= -1
    res = np.array([np.sqrt(np.sum(w * ((S @ v[dof]) / w - l * v[dof]) ** 2)) for l, v in zip(lam, vectors)])
    lam = np.where(np.abs(lam) < 1e-12 * max(1.0, np.max(np.abs(lam))), 0.0, lam)
    return ModeBasis(lam, vectors, mesh, boundary, res)


@dataclass(frozen=True)
class Irrational:
    """A length ratio declared irrational by the caller, e.g. ``Irrational("1/sqrt(2)")``."""

    label: str
    approx: float = float("nan")


LengthLike = Union[int, Fraction, str, Irrational]


@dataclass(frozen=True)
class ModeMatchReport:
    region_lengths: tuple  # ([O], [N], [M]) as Fractions, or labels when irrational
    matched: tuple  # (intrinsic n, global n')
    unmatched_intrinsic: tuple
    ratio_class: str
    only_constant: bool = False

    @property
    def surjective(self) -> bool:
        return not self.unmatched_intrinsic

    def to_dict(self) -> dict:
        return {
            "region_lengths": [str(x) for x in self.region_lengths],
            "matched": [list(p) for p in self.matched],
            "unmatched_intrinsic": list(self.unmatched_intrinsic),
            "ratio_class": self.ratio_class,
            "only_constant": self.only_constant,
        }


def commensurability(
    length_O: LengthLike,
    length_M: LengthLike,
    n_max: int = N_MAX,
    global_cutoff: Optional[int] = None,
) -> ModeMatchReport:
    """Which intrinsic Dirichlet modes ``n pi/[O]`` are restrictions of global ``n' pi/[M]``.

    Exact rational arithmetic: intrinsic mode ``n`` matches ``n' = n [M]/[O]``
    iff that is an integer (and ``<= global_cutoff`` when one is given).
    """
    if isinstance(length_O, Irrational) or isinstance(length_M, Irrational):
        lo = length_O.label if isinstance(length_O, Irrational) else str(Fraction(length_O))
        lm = length_M.label if isinstance(length_M, Irrational) else str(Fraction(length_M))
        return ModeMatchReport((lo, f"{lm} - {lo}", lm), (), tuple(range(1, n_max + 1)), "incommensurate", True)
    lo, lm = Fraction(length_O), Fraction(length_M)
    if not (0 < lo < lm):
        raise ValueError("need 0 < [O] < [M]")
    ratio = lm / lo
    matched, unmatched = [], []
    for n in range(1, n_max + 1):
        q = n * ratio
        if q.denominator == 1 and (global_cutoff is None or q.numerator <= global_cutoff):
            matched.append((n, q.numerator))
        else:
            unmatched.append(n)
    return ModeMatchReport((lo, lm - lo, lm), tuple(matched), tuple(unmatched), "commensurate")


def circle_mode_analysis(ratio_O: LengthLike, n_max: int = N_MAX) -> dict:
    """Both sides of the circle split with ``[O]/[M] = ratio_O`` and ``[M] = 1``."""
    if isinstance(ratio_O, Irrational):
        rep = commensurability(ratio_O, 1, n_max)
        return {"O": rep, "N": rep, "mutual": False}
    r = Fraction(ratio_O)
    o = commensurability(r, 1, n_max)
    n = commensurability(1 - r, 1, n_max)
    return {"O": o, "N": n, "mutual": o.surjective and n.surjective}


def mode_table(report: ModeMatchReport, side: str = "O", limit: int = 8) -> str:
    lo, _, lm = report.region_lengths
    ratio = lo / lm if report.ratio_class == "commensurate" else f"{lo}/{lm}"
    lines = [f"[{side}]/[M] = {ratio}  ({report.ratio_class})"]
    if report.only_constant:
        lines.append("  no intrinsic mode is a restriction of a global mode; only the constant field survives")
        return "\n".join(lines)
    lines.append(f"  {'intrinsic n':>11}  {'global n':>8}")
    for n, m in report.matched[:limit]:
        lines.append(f"  {n:>11}  {m:>8}")
    if report.unmatched_intrinsic:
        shown = ", ".join(str(n) for n in report.unmatched_intrinsic[:limit])
        lines.append(f"  unmatched intrinsic modes: {shown}{' ...' if len(report.unmatched_intrinsic) > limit else ''}")
    return "\n".join(lines)


def lattice_mode_matching(mesh: Mesh, dec: RegionDecomposition, side: str = "O", n_modes: int = 4, rtol: float = 1e-8):
    """Numerical counterpart of :func:`commensurability` on a lattice.

    An intrinsic Dirichlet mode of ``side`` is matched when some global
    eigenvector with the same eigenvalue vanishes on the boundary and
    restricts to it.  Returns ``(matched, unmatched)`` where ``matched`` holds
    ``(n, global_eigenvalue_index, residual)`` with ``n`` counted from 1.
    """
    full = eigenmodes(mesh, "periodic", mesh.n_sites)
    sub = dec.submesh(side)
    intr = eigenmodes(sub, "dirichlet", n_modes)
    sites = dec.sites(side)
    bnd = dec.boundary
    matched, unmatched = [], []
    for n, (lam, v) in enumerate(zip(intr.eigenvalues, intr.eigenvectors), start=1):
        cluster = np.flatnonzero(np.abs(full.eigenvalues - lam) <= rtol * max(1.0, abs(lam)))
        best = np.inf
        if cluster.size:
            E = full.eigenvectors[cluster].T
            _, s, vt = np.linalg.svd(E[bnd], full_matrices=True)
            rank = int(np.sum(s > 1e-10))
            null = vt[rank:].T
            if null.size:
                R = (E @ null)[sites][sub.free]
                coef, *_ = np.linalg.lstsq(R, v[sub.free], rcond=None)
                best = np.linalg.norm(R @ coef - v[sub.free]) / np.linalg.norm(v[sub.free])
        if best < 1e-8:
            matched.append((n, int(cluster[0]), float(best)))
        else:
            unmatched.append(n)
    return matched, unmatched


def _points_spec(spec: ActionSpec, Q: np.ndarray, j: np.ndarray, mass: float) -> ActionSpec:
    mesh = build_point_mesh(len(j))
    return ActionSpec(
        mesh,
        spec.total_time,
        spec.time_steps,
        terms=(NonlocalKernel(Q), Source(j)),
        mass=mass,
    )


@dataclass(frozen=True, eq=False)
class ModeSectorReport:
    K_joint: complex
    K_product: complex
    relative_defect: float
    off_sector_coupling: float
    sector_kernels: tuple


def reduce_to_modes(spec: ActionSpec, basis: ModeBasis, mode_coupling=None) -> ActionSpec:
    """The action in normal coordinates ``phi = sum_j a_j h_j`` (orthonormal ``h_j``)."""
    if not spec.is_quadratic:
        raise UnsupportedError("mode-sector kernels need a quadratic action")
    mass = np.broadcast_to(np.asarray(spec.mass, float), (spec.mesh.n_sites,))
    if np.ptp(mass) > 0:
        raise UnsupportedError("mode reduction needs a uniform mass")
    K, b, _ = spec.quadratic_form()
    H = basis.eigenvectors.T
    Q = H.T @ (K @ H)
    if mode_coupling is not None:
        Q = Q + np.asarray(mode_coupling, float)
    Q = 0.5 * (Q + Q.T)
    return _points_spec(spec, Q, H.T @ b, float(mass[0]))


def mode_sector_kernel(
    spec: ActionSpec,
    basis: ModeBasis,
    sectors: Sequence[Sequence[int]],
    a_i,
    a_f,
    hbar: float = 1.0,
    mode_coupling=None,
    tol: float = 1e-10,
) -> ModeSectorReport:
    """Joint kernel in mode coordinates versus the product of per-sector kernels.

    ``sectors`` partitions ``range(k)``.  ``mode_coupling`` adds an explicit
    ``k x k`` quadratic form in mode coordinates (for coupled controls).
    """
    red = reduce_to_modes(spec, basis, mode_coupling)
    k = red.mesh.n_sites
    flat = sorted(i for s in sectors for i in s)
    if flat != list(range(k)):
        raise ValueError("sectors must partition the mode indices")
    a_i, a_f = np.asarray(a_i, float), np.asarray(a_f, float)
    Q = red.terms[0].matrix_
    j = red.terms[1].j
    label = np.empty(k, int)
    for si, s in enumerate(sectors):
        label[list(s)] = si
    off = float(np.max(np.abs(Q[label[:, None] != label[None, :]]), initial=0.0))

    joint = kernel(red, [solve(red, a_i, a_f, tol=tol)], hbar)
    parts = []
    prod = 1 + 0j
    for s in sectors:
        idx = np.asarray(s, int)
        if len(sectors) == 1:
            sspec = red
        else:
            sspec = _points_spec(red, Q[np.ix_(idx, idx)], j[idx], float(red.mass))
        kv = kernel(sspec, [solve(sspec, a_i[idx], a_f[idx], tol=tol)], hbar)
        parts.append(kv)
        prod *= kv.amplitude
    return ModeSectorReport(joint.amplitude, prod, relative_defect(joint.amplitude, prod), off, tuple(parts))
