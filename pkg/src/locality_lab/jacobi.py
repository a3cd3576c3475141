"""Jacobi metric ``h = 2 (E - V) g`` and the extremal/geodesic correspondence."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ClassicallyForbiddenError
from .extremal import ExtremalPath, newton_solve, on_shell_energy
from .lattice import SuperMetric
from .model import ActionSpec, Path


@dataclass(frozen=True, eq=False)
class JacobiMetric:
    """Conformal rescaling of the kinetic metric ``g = diag(mass * weights)``."""

    spec: ActionSpec
    energy: float

    @property
    def base(self) -> np.ndarray:
        return self.spec.mass_vector

    def factor(self, phi) -> float:
        return 2.0 * (self.energy - self.spec.potential(phi))

    def factor_grad(self, phi) -> np.ndarray:
        return -2.0 * self.spec.potential_grad(phi)

    def factor_hess(self, phi) -> np.ndarray:
        return -2.0 * self.spec.potential_hess(phi).toarray()

    def matrix(self, phi) -> np.ndarray:
        return self.factor(phi) * np.diag(self.base)

    def as_supermetric(self) -> SuperMetric:
        return SuperMetric("conformal", lambda v: self.factor(v) * self.spec.mass_vector / self.spec.mesh.weights)


def build(spec: ActionSpec, energy: float) -> JacobiMetric:
    return JacobiMetric(spec, float(energy))


def _midpoint_factors(metric: JacobiMetric, values: np.ndarray) -> np.ndarray:
    mids = 0.5 * (values[1:] + values[:-1])
    f = np.array([metric.factor(m) for m in mids])
    bad = np.flatnonzero(~(f > 0))
    if bad.size:
        raise ClassicallyForbiddenError(
            f"conformal factor 2(E - V) is not positive on segments {bad[:10].tolist()}", bad
        )
    return f


def length(metric: JacobiMetric, path: Path) -> float:
    """``sum_k sqrt(<dphi_k, dphi_k>_h)`` with ``h`` evaluated at segment midpoints."""
    v = path.values
    f = _midpoint_factors(metric, v)
    q = np.sum(metric.base * np.diff(v, axis=0) ** 2, axis=1)
    return float(np.sum(np.sqrt(f * q)))


def _energy_derivatives(metric: JacobiMetric, v: np.ndarray, ds: float):
    # E[gamma] = sum_k f(mid_k) |d_k|_g^2 / (2 ds)
    K = v.shape[0] - 1
    n = v.shape[1]
    G = metric.base
    c = 1.0 / (2.0 * ds)
    grad = np.zeros_like(v)
    diag = np.zeros((K + 1, n, n))
    low = np.zeros((K, n, n))  # d g_{k+1} / d phi_k
    Gm = np.diag(G)
    for k in range(K):
        m = 0.5 * (v[k] + v[k + 1])
        d = v[k + 1] - v[k]
        Gd = G * d
        q = float(d @ Gd)
        f = metric.factor(m)
        gf = metric.factor_grad(m)
        hf = metric.factor_hess(m)
        grad[k + 1] += c * (0.5 * q * gf + 2 * f * Gd)
        grad[k] += c * (0.5 * q * gf - 2 * f * Gd)
        a = np.outer(gf, Gd)
        qh = 0.25 * q * hf
        diag[k + 1] += c * (qh + a + a.T + 2 * f * Gm)
        diag[k] += c * (qh - a - a.T + 2 * f * Gm)
        low[k] += c * (qh - a + a.T - 2 * f * Gm)
    return grad, diag, low


def geodesic(metric: JacobiMetric, initial_guess: Path, tol: float = 1e-10, max_iters: int = 200) -> Path:
    """Affinely parametrized geodesic of ``h`` with the guess's endpoints.

    Extremizes the energy functional ``int |gamma'|_h^2 ds / 2`` over the
    interior slices (free sites only); the parameter runs over ``[0, 1]``.
    """
    base = np.array(initial_guess.values)
    K = base.shape[0] - 1
    ds = 1.0 / K
    free = metric.spec.mesh.free
    nf = len(free)
    shape = (K - 1, nf)

    def assemble(x):
        v = base.copy()
        v[1:-1, free] = x.reshape(shape)
        return v

    def residual(x):
        v = assemble(x)
        _midpoint_factors(metric, v)
        g, _, _ = _energy_derivatives(metric, v, ds)
        return g[1:-1][:, free].ravel()

    def hessian(x):
        _, d, lo = _energy_derivatives(metric, assemble(x), ds)
        d = d[1:-1][:, free][:, :, free]
        lo = lo[1:-1][:, free][:, :, free]
        blocks = [[None] * (K - 1) for _ in range(K - 1)]
        for i in range(K - 1):
            blocks[i][i] = sp.csr_matrix(d[i])
            if i + 1 < K - 1:
                blocks[i + 1][i] = sp.csr_matrix(lo[i])
                blocks[i][i + 1] = sp.csr_matrix(lo[i].T)
        return sp.bmat(blocks, format="csr")

    x, _, _ = newton_solve(base[1:-1, free].ravel(), residual, hessian, tol, max_iters)
    return Path(metric.spec.mesh, assemble(x), 1.0)


def image_distance(a: np.ndarray, b: np.ndarray, weights=None) -> float:
    """Symmetric Hausdorff distance between two polylines given by their vertices."""
    w = np.ones(a.shape[1]) if weights is None else np.sqrt(np.asarray(weights, float))
    a = a * w
    b = b * w

    def one_way(p, poly):
        p0 = poly[:-1]
        dseg = poly[1:] - p0
        dd = np.sum(dseg**2, axis=1)
        rel = p[:, None, :] - p0[None, :, :]
        t = np.where(dd > 0, np.einsum("ijk,jk->ij", rel, dseg) / np.where(dd > 0, dd, 1.0), 0.0)
        t = np.clip(t, 0.0, 1.0)
        closest = p0[None] + t[..., None] * dseg[None]
        return float(np.max(np.min(np.linalg.norm(p[:, None, :] - closest, axis=2), axis=1)))

    return max(one_way(a, b), one_way(b, a))


@dataclass(frozen=True, eq=False)
class EquivalenceReport:
    max_deviation: float
    passed: bool
    energy: float
    geodesic: Path

    def to_dict(self) -> dict:
        return {"max_deviation": self.max_deviation, "pass": self.passed, "energy": self.energy}


def reparametrize(metric: JacobiMetric, values: np.ndarray, n_steps: int = None) -> np.ndarray:
    """Resample a polyline at uniform ``h``-arclength (piecewise linear)."""
    f = _midpoint_factors(metric, values)
    seg = np.sqrt(f * np.sum(metric.base * np.diff(values, axis=0) ** 2, axis=1))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    n_steps = len(values) - 1 if n_steps is None else n_steps
    target = np.linspace(0.0, cum[-1], n_steps + 1)
    return np.stack([np.interp(target, cum, values[:, i]) for i in range(values.shape[1])], axis=1)


def verify_equivalence(spec: ActionSpec, ex: ExtremalPath, metric: JacobiMetric, tol: float) -> EquivalenceReport:
    """Compare the image of the Jacobi geodesic with the image of the extremal.

    The geodesic is relaxed by Newton from the extremal's image resampled at
    uniform h-arclength; several geodesics can join the same endpoints, and
    this picks the one in the extremal's neighbourhood.  With a mismatched
    energy the relaxation moves away from the extremal image.
    """
    v = ex.path.values
    _midpoint_factors(metric, v)
    guess = Path(spec.mesh, reparametrize(metric, v), 1.0)
    geo = geodesic(metric, guess)
    _midpoint_factors(metric, geo.values)
    dev = image_distance(geo.values, v, metric.base)
    return EquivalenceReport(dev, dev < tol, metric.energy, geo)


def energy_of(spec: ActionSpec, ex: ExtremalPath) -> float:
    """On-shell energy used to build the matching Jacobi metric."""
    return on_shell_energy(spec, ex)
