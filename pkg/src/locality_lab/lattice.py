"""Discretized spatial manifolds, fields over them, and region splits.

A :class:`Mesh` is a weighted graph.  Every edge carries a length and a
dual-face measure, so the stiffness ``face / length`` of an edge gives the
usual finite-volume Laplacian::

    (S phi)_i = sum_j face_ij / len_ij * (phi_i - phi_j)
    -Laplacian phi  ~=  W^{-1} S phi

with ``W`` the diagonal of site weights.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import (
    BoundaryMismatchError,
    DegenerateRegionError,
    InvalidGeometryError,
    InvalidMeshError,
    MeshMismatchError,
    MetricDegenerateError,
)

TOPOLOGIES = ("circle", "interval", "annulus", "product", "points")
TOL_GLUE = 1e-12


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Mesh:
    """Weighted site graph standing in for the spatial manifold.

    ``dirichlet`` flags sites whose values are prescribed data rather than
    degrees of freedom (domain boundary rings, or the separating boundary of
    a region submesh).
    """

    positions: np.ndarray
    weights: np.ndarray
    edges: np.ndarray
    edge_lengths: np.ndarray
    edge_faces: np.ndarray
    topology: str
    dirichlet: np.ndarray = None
    measure: Optional[float] = None
    grid_shape: Optional[tuple] = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        n = pos.shape[0]
        object.__setattr__(self, "positions", _frozen(pos))
        object.__setattr__(self, "weights", _frozen(self.weights))
        edges = np.asarray(self.edges, dtype=int).reshape(-1, 2)
        object.__setattr__(self, "edges", _frozen(edges, int))
        object.__setattr__(self, "edge_lengths", _frozen(self.edge_lengths))
        object.__setattr__(self, "edge_faces", _frozen(self.edge_faces))
        dmask = np.zeros(n, bool) if self.dirichlet is None else np.asarray(self.dirichlet, bool)
        object.__setattr__(self, "dirichlet", _frozen(dmask, bool))
        if self.measure is None:
            object.__setattr__(self, "measure", float(self.weights.sum()))

        if self.topology not in TOPOLOGIES:
            raise InvalidMeshError(f"unknown topology tag {self.topology!r}")
        if n == 0:
            raise InvalidMeshError("mesh has no sites")
        if self.weights.shape != (n,) or np.any(self.weights <= 0):
            raise InvalidMeshError("site weights must be positive, one per site")
        if len(self.edge_lengths) != len(edges) or len(self.edge_faces) != len(edges):
            raise InvalidMeshError("edge attribute arrays must match the edge list")
        if np.any(self.edge_lengths <= 0) or np.any(self.edge_faces < 0):
            raise InvalidMeshError("edge lengths must be strictly positive")
        if edges.size and (edges.min() < 0 or edges.max() >= n or np.any(edges[:, 0] == edges[:, 1])):
            raise InvalidMeshError("edges must join two distinct existing sites")
        if self.topology != "points" and n > 1:
            deg = np.bincount(edges.ravel(), minlength=n)
            if np.any(deg == 0):
                raise InvalidMeshError(f"sites without neighbors: {np.flatnonzero(deg == 0)[:10].tolist()}")
        if abs(self.weights.sum() - self.measure) > 1e-12 * max(1.0, abs(self.measure)):
            raise InvalidMeshError("site weights do not sum to the total measure")

    @property
    def n_sites(self) -> int:
        return self.positions.shape[0]

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.n_sites)

    @property
    def free(self) -> np.ndarray:
        """Indices of sites that are degrees of freedom."""
        return np.flatnonzero(~self.dirichlet)

    @property
    def adjacency(self) -> list:
        """Per-site list of ``(neighbor, edge_length)`` pairs."""
        adj = [[] for _ in range(self.n_sites)]
        for (i, j), ell in zip(self.edges, self.edge_lengths):
            adj[i].append((int(j), float(ell)))
            adj[j].append((int(i), float(ell)))
        return adj

    def stiffness_matrix(self, edge_scale=None) -> sp.csr_matrix:
        """Symmetric positive semi-definite graph Laplacian ``S``."""
        n = self.n_sites
        c = self.edge_faces / self.edge_lengths
        if edge_scale is not None:
            c = c * np.broadcast_to(np.asarray(edge_scale, float), c.shape)
        i, j = self.edges[:, 0], self.edges[:, 1]
        rows = np.concatenate([i, j, i, j])
        cols = np.concatenate([j, i, i, j])
        vals = np.concatenate([-c, -c, c, c])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def same_as(self, other: "Mesh") -> bool:
        if self is other:
            return True
        return (
            isinstance(other, Mesh)
            and self.n_sites == other.n_sites
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.dirichlet, other.dirichlet)
        )

    def subset(self, sites: Sequence[int], dirichlet: Iterable[int] = ()) -> tuple:
        """Induced submesh on ``sites`` (sorted).

        Returns ``(submesh, edge_ids)`` where ``edge_ids`` indexes the parent
        edges kept in the submesh, in submesh edge order.
        """
        sites = np.unique(np.asarray(list(sites), dtype=int))
        local = -np.ones(self.n_sites, int)
        local[sites] = np.arange(len(sites))
        keep = (local[self.edges[:, 0]] >= 0) & (local[self.edges[:, 1]] >= 0)
        edge_ids = np.flatnonzero(keep)
        dmask = self.dirichlet[sites].copy()
        extra = np.asarray(list(dirichlet), dtype=int)
        if extra.size:
            dmask[local[extra]] = True
        topo = {"circle": "interval", "annulus": "product"}.get(self.topology, self.topology)
        if len(edge_ids) == 0:
            topo = "points"
        sub = Mesh(
            positions=self.positions[sites],
            weights=self.weights[sites],
            edges=local[self.edges[edge_ids]],
            edge_lengths=self.edge_lengths[edge_ids],
            edge_faces=self.edge_faces[edge_ids],
            topology=topo,
            dirichlet=dmask,
        )
        return sub, edge_ids


def build_circle_mesh(n_sites: int, circumference: float) -> Mesh:
    """Uniform periodic chain; positions are arc length from site 0."""
    if int(n_sites) != n_sites or n_sites < 3:
        raise InvalidMeshError(f"a circle needs at least 3 sites, got {n_sites}")
    if not circumference > 0:
        raise InvalidGeometryError("circumference must be positive")
    n = int(n_sites)
    h = circumference / n
    i = np.arange(n)
    edges = np.stack([i, (i + 1) % n], axis=1)
    return Mesh(
        positions=(i * h)[:, None],
        weights=np.full(n, h),
        edges=edges,
        edge_lengths=np.full(n, h),
        edge_faces=np.ones(n),
        topology="circle",
        measure=float(circumference),
    )


def build_interval_mesh(n_sites: int, length: float, dirichlet: bool = True) -> Mesh:
    """Uniform chain on ``[0, length]`` including both end points.

    End sites carry half weights (midpoint rule on the dual cells).
    """
    if int(n_sites) != n_sites or n_sites < 2:
        raise InvalidMeshError(f"an interval needs at least 2 sites, got {n_sites}")
    if not length > 0:
        raise InvalidGeometryError("length must be positive")
    n = int(n_sites)
    h = length / (n - 1)
    w = np.full(n, h)
    w[[0, -1]] = h / 2
    dmask = np.zeros(n, bool)
    if dirichlet:
        dmask[[0, -1]] = True
    i = np.arange(n - 1)
    return Mesh(
        positions=(np.arange(n) * h)[:, None],
        weights=w,
        edges=np.stack([i, i + 1], axis=1),
        edge_lengths=np.full(n - 1, h),
        edge_faces=np.ones(n - 1),
        topology="interval",
        dirichlet=dmask,
        measure=float(length),
    )


def build_annulus_mesh(n_r: int, n_theta: int, r1: float, r2: float) -> Mesh:
    """Polar grid, periodic in theta, with both radial rings flagged Dirichlet.

    Site ``i * n_theta + j`` sits at radius ``r_i`` and angle ``j * dtheta``.
    Weights are dual-cell areas ``r dr dtheta`` (half ``dr`` on the rings),
    which sum to the exact annulus area.
    """
    if not (r1 > 0 and r2 > r1):
        raise InvalidGeometryError(f"need r2 > r1 > 0, got r1={r1}, r2={r2}")
    if n_r < 2 or n_theta < 8:
        raise InvalidMeshError(f"need n_r >= 2 and n_theta >= 8, got {n_r}, {n_theta}")
    n_r, n_theta = int(n_r), int(n_theta)
    r = np.linspace(r1, r2, n_r)
    dr = (r2 - r1) / (n_r - 1)
    dth = 2 * np.pi / n_theta
    th = np.arange(n_theta) * dth
    R, TH = np.meshgrid(r, th, indexing="ij")
    dr_cell = np.full(n_r, dr)
    dr_cell[[0, -1]] = dr / 2
    weights = (r * dr_cell)[:, None] * dth * np.ones((1, n_theta))

    idx = np.arange(n_r * n_theta).reshape(n_r, n_theta)
    ang = np.stack([idx.ravel(), np.roll(idx, -1, axis=1).ravel()], axis=1)
    ang_len = (R * dth).ravel()
    ang_face = np.repeat(dr_cell, n_theta)
    rad = np.stack([idx[:-1].ravel(), idx[1:].ravel()], axis=1)
    rad_len = np.full(len(rad), dr)
    rad_face = np.repeat((r[:-1] + dr / 2) * dth, n_theta)

    dmask = np.zeros((n_r, n_theta), bool)
    dmask[[0, -1]] = True
    return Mesh(
        positions=np.stack([(R * np.cos(TH)).ravel(), (R * np.sin(TH)).ravel()], axis=1),
        weights=weights.ravel(),
        edges=np.concatenate([ang, rad]),
        edge_lengths=np.concatenate([ang_len, rad_len]),
        edge_faces=np.concatenate([ang_face, rad_face]),
        topology="annulus",
        dirichlet=dmask.ravel(),
        measure=float(np.pi * (r2**2 - r1**2)),
        grid_shape=(n_r, n_theta),
    )


def build_point_mesh(n_sites: int, weights=None) -> Mesh:
    """Edgeless mesh: each site is one coordinate of a particle system."""
    n = int(n_sites)
    if n < 1:
        raise InvalidMeshError("need at least one site")
    w = np.ones(n) if weights is None else np.asarray(weights, float)
    return Mesh(
        positions=np.arange(n, dtype=float)[:, None],
        weights=w,
        edges=np.zeros((0, 2), int),
        edge_lengths=np.zeros(0),
        edge_faces=np.zeros(0),
        topology="points",
    )


@dataclass(frozen=True, eq=False)
class FieldConfig:
    """One point of configuration space: a real value per site."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if v.shape != (self.mesh.n_sites,):
            raise MeshMismatchError(f"field has {v.size} values for {self.mesh.n_sites} sites")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, mesh: Mesh, c: float = 0.0) -> "FieldConfig":
        return cls(mesh, np.full(mesh.n_sites, float(c)))

    @classmethod
    def from_function(cls, mesh: Mesh, fn: Callable) -> "FieldConfig":
        return cls(mesh, fn(mesh.positions))

    def __add__(self, other):
        _check_same(self.mesh, other.mesh)
        return FieldConfig(self.mesh, self.values + other.values)

    def __sub__(self, other):
        _check_same(self.mesh, other.mesh)
        return FieldConfig(self.mesh, self.values - other.values)

    def __mul__(self, a):
        return FieldConfig(self.mesh, self.values * float(a))

    __rmul__ = __mul__


def _check_same(a: Mesh, b: Mesh):
    if not a.same_as(b):
        raise MeshMismatchError("fields live on different meshes")


@dataclass(frozen=True, eq=False)
class SuperMetric:
    """Diagonal inner product on configuration space.

    ``flat_L2`` is ``sum_x w(x) u(x) v(x)``.  ``conformal`` multiplies the
    site weights by ``conformal_weight(base_values)``, which may return a
    scalar (a global conformal factor, as for the Jacobi metric) or a per-site
    array.
    """

    kind: str = "flat_L2"
    conformal_weight: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in ("flat_L2", "conformal"):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.kind == "conformal" and self.conformal_weight is None:
            raise ValueError("a conformal metric needs a conformal_weight function")

    def factor(self, base_values: np.ndarray) -> np.ndarray:
        n = len(base_values)
        if self.kind == "flat_L2":
            return np.ones(n)
        f = np.broadcast_to(np.asarray(self.conformal_weight(base_values), float), (n,))
        return np.array(f)

    def site_weights(self, mesh: Mesh, base_values=None) -> np.ndarray:
        if self.kind == "flat_L2":
            return np.asarray(mesh.weights)
        if base_values is None:
            raise ValueError("a conformal metric needs a base configuration")
        f = self.factor(np.asarray(base_values, float))
        bad = np.flatnonzero(~(f > 0))
        if bad.size:
            raise MetricDegenerateError(f"conformal weight is not positive at sites {bad[:10].tolist()}")
        return mesh.weights * f

    def matrix(self, mesh: Mesh, base_values=None) -> np.ndarray:
        return np.diag(self.site_weights(mesh, base_values))


FLAT_L2 = SuperMetric()


def inner_product(u: FieldConfig, v: FieldConfig, metric: SuperMetric = FLAT_L2, base: FieldConfig = None) -> float:
    _check_same(u.mesh, v.mesh)
    if base is not None:
        _check_same(u.mesh, base.mesh)
    w = metric.site_weights(u.mesh, None if base is None else base.values)
    return float(np.sum(w * u.values * v.values))


def norm(u: FieldConfig, metric: SuperMetric = FLAT_L2, base: FieldConfig = None) -> float:
    return float(np.sqrt(max(inner_product(u, u, metric, base), 0.0)))


@dataclass(frozen=True, eq=False)
class RegionDecomposition:
    """Split of the sites into ``interior_O``, ``interior_N`` and ``boundary``.

    The boundary is the set of unselected sites adjacent to the selection, so
    no edge joins ``interior_O`` to ``interior_N`` directly.
    """

    parent: Mesh
    interior_O: np.ndarray
    interior_N: np.ndarray
    boundary: np.ndarray
    _subs: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("interior_O", "interior_N", "boundary"):
            object.__setattr__(self, name, _frozen(np.unique(getattr(self, name)), int))
        n = self.parent.n_sites
        allsites = np.concatenate([self.interior_O, self.interior_N, self.boundary])
        if len(allsites) != n or len(np.unique(allsites)) != n:
            raise DegenerateRegionError("O, N and boundary must partition the sites")
        label = self.labels
        e = self.parent.edges
        cross = ((label[e[:, 0]] == 0) & (label[e[:, 1]] == 1)) | ((label[e[:, 0]] == 1) & (label[e[:, 1]] == 0))
        if np.any(cross):
            raise DegenerateRegionError("boundary does not separate O from N")

    @property
    def labels(self) -> np.ndarray:
        """Per-site label: 0 for O, 1 for N, 2 for boundary."""
        lab = np.empty(self.parent.n_sites, int)
        lab[self.interior_O] = 0
        lab[self.interior_N] = 1
        lab[self.boundary] = 2
        return lab

    def sites(self, side: str) -> np.ndarray:
        """Sorted parent ids of ``interior_side`` together with the boundary."""
        interior = {"O": self.interior_O, "N": self.interior_N}[side]
        return np.union1d(interior, self.boundary)

    def submesh(self, side: str) -> Mesh:
        """Region submesh with the separating boundary marked Dirichlet."""
        if side not in self._subs:
            self._subs[side] = self.parent.subset(self.sites(side), dirichlet=self.boundary)
        return self._subs[side][0]

    def subedges(self, side: str) -> np.ndarray:
        self.submesh(side)
        return self._subs[side][1]

    def swapped(self) -> "RegionDecomposition":
        return RegionDecomposition(self.parent, self.interior_N, self.interior_O, self.boundary)


RegionSpec = Union[Callable[[np.ndarray], np.ndarray], Iterable[int]]


def arc_predicate(start: float, length: float, circumference: float) -> Callable:
    """Selects circle sites with arc coordinate in ``(start, start + length)``."""

    def pred(pos):
        s = np.mod(pos[:, 0] - start, circumference)
        return (s > 1e-12 * circumference) & (s < length - 1e-12 * circumference)

    return pred


def decompose(mesh: Mesh, region_spec: RegionSpec) -> RegionDecomposition:
    """Split ``mesh`` into the selected interior, its boundary and the rest."""
    if callable(region_spec):
        sel = np.asarray(region_spec(mesh.positions), bool).reshape(-1)
        if sel.shape != (mesh.n_sites,):
            raise ValueError("region predicate must return one flag per site")
    else:
        sel = np.zeros(mesh.n_sites, bool)
        sel[np.asarray(list(region_spec), int)] = True
    if not sel.any():
        raise DegenerateRegionError("region O is empty")
    e = mesh.edges
    touch = np.zeros(mesh.n_sites, bool)
    touch[e[:, 1][sel[e[:, 0]]]] = True
    touch[e[:, 0][sel[e[:, 1]]]] = True
    boundary = touch & ~sel
    rest = ~sel & ~boundary
    if not rest.any():
        raise DegenerateRegionError("region N is empty")
    if len(e) and not _connected(mesh, np.flatnonzero(sel)):
        raise DegenerateRegionError("region O is not connected")
    return RegionDecomposition(mesh, np.flatnonzero(sel), np.flatnonzero(rest), np.flatnonzero(boundary))


def _connected(mesh: Mesh, nodes: np.ndarray) -> bool:
    nodes = set(nodes.tolist())
    adj = mesh.adjacency
    start = next(iter(nodes))
    seen = {start}
    queue = deque([start])
    while queue:
        i = queue.popleft()
        for j, _ in adj[i]:
            if j in nodes and j not in seen:
                seen.add(j)
                queue.append(j)
    return len(seen) == len(nodes)


def project(config: FieldConfig, dec: RegionDecomposition, side: str = "O") -> FieldConfig:
    """Restriction of a global field to ``interior_side`` plus the boundary."""
    _check_same(config.mesh, dec.parent)
    return FieldConfig(dec.submesh(side), config.values[dec.sites(side)])


def project_O(config: FieldConfig, dec: RegionDecomposition) -> FieldConfig:
    return project(config, dec, "O")


def project_N(config: FieldConfig, dec: RegionDecomposition) -> FieldConfig:
    return project(config, dec, "N")


def glue(f_O: FieldConfig, f_N: FieldConfig, dec: RegionDecomposition, tol: float = TOL_GLUE) -> FieldConfig:
    """Inverse of the pair of projections for fields agreeing on the boundary."""
    so, sn = dec.sites("O"), dec.sites("N")
    if f_O.values.shape != so.shape or f_N.values.shape != sn.shape:
        raise MeshMismatchError("partial fields do not match the region submeshes")
    out = np.empty(dec.parent.n_sites)
    out[so] = f_O.values
    out[sn] = f_N.values
    bo = f_O.values[np.searchsorted(so, dec.boundary)]
    bn = f_N.values[np.searchsorted(sn, dec.boundary)]
    bad = np.abs(bo - bn) > tol
    if np.any(bad):
        sites = dec.boundary[bad]
        raise BoundaryMismatchError(f"partial fields disagree on boundary sites {sites.tolist()}", sites)
    return FieldConfig(dec.parent, out)
