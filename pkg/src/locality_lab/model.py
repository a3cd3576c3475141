"""Jacobi-type actions ``S = int dt (T - V)`` on a mesh and their discretization.

Time is discretized with midpoint velocities and a trapezoidal potential::

    S = sum_k  1/(2 dt) (phi_{k+1} - phi_k)^T M (phi_{k+1} - phi_k)
        - dt * sum_k c_k V(phi_k),      c_0 = c_K = 1/2, c_k = 1 otherwise

with ``M = diag(mass * weights)``.  Potentials are sums of terms, each able to
report its value, gradient and Hessian.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import MeshMismatchError, UnsupportedError
from .lattice import FLAT_L2, FieldConfig, Mesh, RegionDecomposition, SuperMetric


def _per(x, n):
    return np.array(np.broadcast_to(np.asarray(x, float), (n,)))


@dataclass(frozen=True, eq=False)
class GradientEnergy:
    """``1/2 sum_e k_e face_e/len_e (phi_i - phi_j)^2``, i.e. ``1/2 int |grad phi|^2``."""

    stiffness: object = 1.0
    quadratic = True

    def matrix(self, mesh):
        return mesh.stiffness_matrix(_per(self.stiffness, len(mesh.edges)))

    def value(self, phi, mesh):
        return 0.5 * float(phi @ (self.matrix(mesh) @ phi))

    def grad(self, phi, mesh):
        return self.matrix(mesh) @ phi

    def hess(self, phi, mesh):
        return self.matrix(mesh)


@dataclass(frozen=True, eq=False)
class QuadraticSite:
    """``1/2 sum_x w(x) k(x) phi(x)^2``."""

    k: object = 1.0
    quadratic = True

    def matrix(self, mesh):
        return sp.diags(mesh.weights * _per(self.k, mesh.n_sites)).tocsr()

    def value(self, phi, mesh):
        return 0.5 * float(np.sum(mesh.weights * _per(self.k, mesh.n_sites) * phi**2))

    def grad(self, phi, mesh):
        return mesh.weights * _per(self.k, mesh.n_sites) * phi

    def hess(self, phi, mesh):
        return self.matrix(mesh)


@dataclass(frozen=True, eq=False)
class SitePotential:
    """``sum_x w(x) scale(x) f(phi(x))`` for an elementwise ``f`` with derivatives."""

    f: Callable
    df: Callable
    d2f: Callable
    scale: object = 1.0
    quadratic = False

    def value(self, phi, mesh):
        return float(np.sum(mesh.weights * _per(self.scale, mesh.n_sites) * self.f(phi)))

    def grad(self, phi, mesh):
        return mesh.weights * _per(self.scale, mesh.n_sites) * self.df(phi)

    def hess(self, phi, mesh):
        return sp.diags(mesh.weights * _per(self.scale, mesh.n_sites) * self.d2f(phi)).tocsr()


@dataclass(frozen=True, eq=False)
class NonlocalKernel:
    """``1/2 phi^T Q phi`` for a dense symmetric site-by-site matrix ``Q``.

    ``Q`` is the already-integrated quadratic form (weights included).
    """

    matrix_: np.ndarray
    quadratic = True

    def __post_init__(self):
        q = np.array(self.matrix_, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError("kernel must be a square matrix")
        if np.max(np.abs(q - q.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(q), initial=0.0)):
            raise ValueError("nonlocal kernel must be symmetric within 1e-12")
        q = 0.5 * (q + q.T)
        q.setflags(write=False)
        object.__setattr__(self, "matrix_", q)

    def matrix(self, mesh):
        if self.matrix_.shape[0] != mesh.n_sites:
            raise MeshMismatchError("kernel size does not match the mesh")
        return sp.csr_matrix(self.matrix_)

    def value(self, phi, mesh):
        return 0.5 * float(phi @ self.matrix_ @ phi)

    def grad(self, phi, mesh):
        return self.matrix_ @ phi

    def hess(self, phi, mesh):
        return self.matrix(mesh)


@dataclass(frozen=True, eq=False)
class Source:
    """Static source ``j``: contributes ``-sum_x w(x) j(x) phi(x)`` to V."""

    j: np.ndarray
    quadratic = True

    def value(self, phi, mesh):
        return -float(np.sum(mesh.weights * _per(self.j, mesh.n_sites) * phi))

    def grad(self, phi, mesh):
        return -mesh.weights * _per(self.j, mesh.n_sites)

    def hess(self, phi, mesh):
        return sp.csr_matrix((mesh.n_sites, mesh.n_sites))


POTENTIAL_KINDS = {
    "quadratic_local": GradientEnergy,
    "site_quadratic": QuadraticSite,
    "site_potential": SitePotential,
    "nonlocal": NonlocalKernel,
    "source": Source,
}


@dataclass(frozen=True, eq=False)
class ActionSpec:
    """Discrete action ``int dt (1/2 <phi', phi'>_mass - V(phi))``.

    ``period``, when set, marks the field as circle valued: configurations are
    compared modulo ``period`` at the endpoints, and paths are lifts.
    """

    mesh: Mesh
    total_time: float
    time_steps: int
    terms: tuple = ()
    mass: object = 1.0
    kinetic: SuperMetric = FLAT_L2
    offset: float = 0.0
    period: Optional[float] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.total_time > 0:
            raise ValueError("total_time must be positive")
        if int(self.time_steps) != self.time_steps or self.time_steps < 2:
            raise ValueError("time_steps must be an integer >= 2")
        object.__setattr__(self, "time_steps", int(self.time_steps))
        m = _per(self.mass, self.mesh.n_sites)
        if np.any(m[self.mesh.free] <= 0):
            raise ValueError("mass must be positive on free sites")

    @property
    def dt(self) -> float:
        return self.total_time / self.time_steps

    @property
    def mass_vector(self) -> np.ndarray:
        """Diagonal of ``M = mass * weights``."""
        return _per(self.mass, self.mesh.n_sites) * self.mesh.weights

    @property
    def is_quadratic(self) -> bool:
        return self.kinetic.kind == "flat_L2" and all(t.quadratic for t in self.terms)

    def with_(self, **kw) -> "ActionSpec":
        return replace(self, _cache={}, **kw)

    def potential(self, phi) -> float:
        phi = np.asarray(phi, float)
        return self.offset + sum(t.value(phi, self.mesh) for t in self.terms)

    def potential_grad(self, phi) -> np.ndarray:
        phi = np.asarray(phi, float)
        g = np.zeros(self.mesh.n_sites)
        for t in self.terms:
            g = g + t.grad(phi, self.mesh)
        return g

    def potential_hess(self, phi) -> sp.csr_matrix:
        if self.is_quadratic and "hess" in self._cache:
            return self._cache["hess"]
        n = self.mesh.n_sites
        h = sp.csr_matrix((n, n))
        for t in self.terms:
            h = h + t.hess(np.asarray(phi, float), self.mesh)
        h = h.tocsr()
        if self.is_quadratic:
            self._cache["hess"] = h
        return h

    def quadratic_form(self):
        """``(K, b, c)`` with ``V(phi) = 1/2 phi^T K phi - b^T phi + c``."""
        if not self.is_quadratic:
            raise UnsupportedError("potential is not quadratic")
        z = np.zeros(self.mesh.n_sites)
        return self.potential_hess(z), -self.potential_grad(z), self.potential(z)


@dataclass(frozen=True, eq=False)
class Path:
    """Time-discretized curve in configuration space: ``values[k]`` at ``t = k dt``."""

    mesh: Mesh
    values: np.ndarray
    total_time: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim != 2 or v.shape[1] != self.mesh.n_sites:
            raise MeshMismatchError("path values must have shape (slices, sites)")
        if v.shape[0] < 2:
            raise ValueError("a path needs at least two slices")
        if not self.total_time > 0:
            raise ValueError("total_time must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0] - 1

    @property
    def dt(self) -> float:
        return self.total_time / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.total_time, self.n_steps + 1)

    @property
    def slices(self) -> list:
        return [FieldConfig(self.mesh, v) for v in self.values]

    @property
    def start(self) -> FieldConfig:
        return FieldConfig(self.mesh, self.values[0])

    @property
    def end(self) -> FieldConfig:
        return FieldConfig(self.mesh, self.values[-1])

    @classmethod
    def linear(cls, spec: ActionSpec, phi_i, phi_f) -> "Path":
        a = _values(phi_i)
        b = _values(phi_f)
        s = np.linspace(0.0, 1.0, spec.time_steps + 1)[:, None]
        return cls(spec.mesh, (1 - s) * a + s * b, spec.total_time)


def _values(x):
    return np.asarray(x.values if isinstance(x, FieldConfig) else x, float)


def _check(spec: ActionSpec, path: Path):
    if not spec.mesh.same_as(path.mesh):
        raise MeshMismatchError("path and action live on different meshes")
    if path.n_steps != spec.time_steps or not np.isclose(path.total_time, spec.total_time):
        raise MeshMismatchError(
            f"path has {path.n_steps} steps over T={path.total_time}, "
            f"action expects {spec.time_steps} over T={spec.total_time}"
        )


def _trap(K):
    c = np.ones(K + 1)
    c[[0, -1]] = 0.5
    return c


def action(spec: ActionSpec, path: Path) -> float:
    _check(spec, path)
    phi = path.values
    dt = spec.dt
    d = np.diff(phi, axis=0)
    if spec.kinetic.kind == "flat_L2":
        kin = 0.5 * np.sum(d**2 * spec.mass_vector) / dt
    else:
        mids = 0.5 * (phi[1:] + phi[:-1])
        kin = sum(
            0.5 * np.sum(dk**2 * spec.mass_vector * spec.kinetic.factor(mk)) / dt for dk, mk in zip(d, mids)
        )
    pot = dt * sum(c * spec.potential(p) for c, p in zip(_trap(spec.time_steps), phi))
    return float(kin - pot)


def _require_flat(spec):
    if spec.kinetic.kind != "flat_L2":
        raise UnsupportedError("extremal equations are implemented for flat kinetic metrics only")


def eom_residual(spec: ActionSpec, path: Path) -> np.ndarray:
    """Gradient of the discrete action w.r.t. each interior slice.

    Shape ``(time_steps - 1, n_sites)``; entries on Dirichlet sites are zero
    because those values are data, not unknowns.
    """
    _check(spec, path)
    _require_flat(spec)
    phi = path.values
    m = spec.mass_vector
    dt = spec.dt
    inner = phi[1:-1]
    r = m * (2 * inner - phi[:-2] - phi[2:]) / dt
    r = r - dt * np.array([spec.potential_grad(p) for p in inner])
    r[:, spec.mesh.dirichlet] = 0.0
    return r


def action_gradient(spec: ActionSpec, path: Path) -> np.ndarray:
    """Full gradient of the discrete action, endpoint slices included."""
    _check(spec, path)
    _require_flat(spec)
    phi = path.values
    m = spec.mass_vector
    dt = spec.dt
    d = np.diff(phi, axis=0) * m / dt
    g = np.zeros_like(phi)
    g[:-1] -= d
    g[1:] += d
    c = _trap(spec.time_steps)
    g -= dt * c[:, None] * np.array([spec.potential_grad(p) for p in phi])
    return g


def action_hessian(spec: ActionSpec, path: Path, include_endpoints: bool = False) -> sp.csr_matrix:
    """Hessian of the discrete action over free sites, slice-major ordering.

    Without endpoints the unknowns are the free sites of slices ``1..K-1``.
    """
    _require_flat(spec)
    phi = path.values
    K = spec.time_steps
    free = spec.mesh.free
    nf = len(free)
    m = spec.mass_vector[free]
    dt = spec.dt
    c = _trap(K)
    ks = np.arange(K + 1) if include_endpoints else np.arange(1, K)
    nb = len(ks)
    kin = np.concatenate([(1.0 if k in (0, K) else 2.0) * m / dt for k in ks])
    if spec.is_quadratic:
        hq = spec.potential_hess(phi[0])[free][:, free]
        pot = sp.kron(sp.diags(dt * c[ks]), hq)
    else:
        pot = sp.block_diag([dt * c[k] * spec.potential_hess(phi[k])[free][:, free] for k in ks])
    diag = sp.diags(kin) - pot
    if nb == 1:
        return diag.tocsr()
    offd = sp.kron(sp.diags(np.ones(nb - 1), 1, shape=(nb, nb)), sp.diags(-m / dt))
    return (diag + offd + offd.T).tocsr()


def discrete_energy(spec: ActionSpec, path: Path) -> np.ndarray:
    """Per-step energy ``1/2 |dphi/dt|_M^2 + (V_k + V_{k+1}) / 2``."""
    _check(spec, path)
    phi = path.values
    v = np.array([spec.potential(p) for p in phi])
    d = np.diff(phi, axis=0) / spec.dt
    return 0.5 * np.sum(d**2 * spec.mass_vector, axis=1) + 0.5 * (v[1:] + v[:-1])


def inverse_laplacian_kernel(mesh: Mesh, scale: float = 1.0) -> np.ndarray:
    """Quadratic form of ``-int phi nabla^{-2} phi`` on the zero-mean subspace.

    With ``-nabla^2 ~ W^{-1} S`` this is ``W S^+ W``, positive semi-definite
    with the constant field in its kernel.
    """
    S = mesh.stiffness_matrix().toarray()
    W = np.diag(mesh.weights)
    q = scale * W @ np.linalg.pinv(S, hermitian=True) @ W
    return 0.5 * (q + q.T)


def cut_boundary_stencil(spec: ActionSpec, dec: RegionDecomposition) -> ActionSpec:
    """Zero the gradient stiffness on every edge touching the separating boundary."""
    touches = np.isin(spec.mesh.edges, dec.boundary).any(axis=1)
    terms = []
    for t in spec.terms:
        if isinstance(t, GradientEnergy):
            k = _per(t.stiffness, len(spec.mesh.edges))
            k[touches] = 0.0
            t = GradientEnergy(k)
        terms.append(t)
    return spec.with_(terms=tuple(terms))


def intrinsic_action(spec: ActionSpec, dec: RegionDecomposition, side: str = "O") -> ActionSpec:
    """Action of one region on its submesh, boundary sites held as Dirichlet data.

    Local terms are truncated to the region; nonlocal kernels are restricted
    by sub-block extraction.  Terms living purely on the boundary (site terms,
    boundary-boundary edges, boundary kinetic weight) are assigned to the O
    side only, so that ``S_M = S_O + S_N`` for local actions whenever the
    boundary values are held fixed.
    """
    if side not in ("O", "N"):
        raise ValueError("side must be 'O' or 'N'")
    if not spec.mesh.same_as(dec.parent):
        raise MeshMismatchError("decomposition belongs to another mesh")
    sites = dec.sites(side)
    sub = dec.submesh(side)
    eids = dec.subedges(side)
    on_bnd = np.isin(sites, dec.boundary)
    drop = on_bnd if side == "N" else np.zeros(len(sites), bool)
    keep_site = (~drop).astype(float)
    n_edges = len(spec.mesh.edges)
    edge_bb = np.isin(spec.mesh.edges[eids], dec.boundary).all(axis=1)

    terms = []
    for t in spec.terms:
        if isinstance(t, GradientEnergy):
            k = _per(t.stiffness, n_edges)[eids]
            if side == "N":
                k = np.where(edge_bb, 0.0, k)
            terms.append(GradientEnergy(k))
        elif isinstance(t, QuadraticSite):
            terms.append(QuadraticSite(_per(t.k, spec.mesh.n_sites)[sites] * keep_site))
        elif isinstance(t, SitePotential):
            terms.append(replace(t, scale=_per(t.scale, spec.mesh.n_sites)[sites] * keep_site))
        elif isinstance(t, NonlocalKernel):
            q = t.matrix_[np.ix_(sites, sites)].copy()
            if side == "N":
                q[np.ix_(on_bnd, on_bnd)] = 0.0
            terms.append(NonlocalKernel(q))
        elif isinstance(t, Source):
            terms.append(Source(_per(t.j, spec.mesh.n_sites)[sites] * keep_site))
        else:
            raise UnsupportedError(f"cannot restrict potential term {type(t).__name__}")
    mass = _per(spec.mass, spec.mesh.n_sites)[sites] * keep_site
    kinetic = spec.kinetic
    if kinetic.kind == "conformal":
        raise UnsupportedError("intrinsic restriction of conformal kinetic metrics is not supported")
    return ActionSpec(
        mesh=sub,
        total_time=spec.total_time,
        time_steps=spec.time_steps,
        terms=tuple(terms),
        mass=mass,
        kinetic=kinetic,
        offset=spec.offset if side == "O" else 0.0,
        period=spec.period,
    )


def wave_action(mesh: Mesh, total_time: float, time_steps: int, stiffness=1.0, **kw) -> ActionSpec:
    """Free scalar field: ``1/2 int (phi_t^2 - |grad phi|^2)``."""
    return ActionSpec(mesh, total_time, time_steps, terms=(GradientEnergy(stiffness),), **kw)


def oscillator_action(k: Sequence[float], total_time: float, time_steps: int, **kw) -> ActionSpec:
    """Independent unit-mass oscillators ``V = 1/2 sum k_i x_i^2`` on a point mesh."""
    from .lattice import build_point_mesh

    k = np.atleast_1d(np.asarray(k, float))
    mesh = build_point_mesh(len(k))
    return ActionSpec(mesh, total_time, time_steps, terms=(QuadraticSite(k),), **kw)
