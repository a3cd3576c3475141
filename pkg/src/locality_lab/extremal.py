"""Two-point boundary-value solver for extremal paths of a discrete action."""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConjugatePointError, MeshMismatchError, NonconvergenceError
from .lattice import FieldConfig
from .model import ActionSpec, Path, _values, action, action_hessian, eom_residual

MAX_ITERS = 200
HESSIAN_DELTA = 1e-10
CAUSTIC_RTOL = 1e-3
DEDUP_THRESHOLD = 1e-4
_DENSE_LIMIT = 600


@dataclass(frozen=True, eq=False)
class ExtremalPath:
    path: Path
    on_shell_action: float
    residual_norm: float
    seed_label: str = "line"
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class ExtremalSet:
    extremals: tuple
    endpoints: tuple
    dedup_threshold: float
    seed_labels: tuple = ()
    failures: tuple = ()

    def __len__(self):
        return len(self.extremals)

    def __iter__(self):
        return iter(self.extremals)

    def __getitem__(self, i):
        return self.extremals[i]

    @property
    def empty(self) -> bool:
        return not self.extremals


def newton_solve(
    x0: np.ndarray,
    residual: Callable[[np.ndarray], np.ndarray],
    hessian: Callable[[np.ndarray], sp.spmatrix],
    tol: float,
    max_iters: int = MAX_ITERS,
    delta: float = HESSIAN_DELTA,
):
    """Damped Newton for ``residual(x) = 0`` with a symmetric sparse Jacobian.

    Backtracking halves the step until the Euclidean residual norm decreases;
    a residual function raising ``ValueError`` rejects the trial point.
    Returns ``(x, max_abs_residual, iterations)``.
    """
    x = np.array(x0, dtype=float)
    r = residual(x)
    it = 0
    while np.max(np.abs(r), initial=0.0) >= tol:
        if it >= max_iters:
            raise NonconvergenceError(
                f"no convergence after {max_iters} iterations, residual {np.max(np.abs(r)):.3e}",
                float(np.max(np.abs(r))),
            )
        H = hessian(x)
        H = (H + delta * sp.identity(H.shape[0])).tocsc()
        try:
            step = spla.splu(H, permc_spec="NATURAL").solve(-r)
        except RuntimeError as exc:
            raise ConjugatePointError(f"singular action Hessian: {exc}", 0.0) from exc
        if not np.all(np.isfinite(step)):
            raise ConjugatePointError("singular action Hessian (non-finite Newton step)", 0.0)
        merit = np.linalg.norm(r)
        a = 1.0
        while True:
            xn = x + a * step
            try:
                rn = residual(xn)
            except ValueError:
                rn = None
            if rn is not None and np.linalg.norm(rn) < (1 - 1e-4 * a) * merit:
                break
            a *= 0.5
            if a < 1e-10:
                raise NonconvergenceError(
                    f"line search stalled at residual {np.max(np.abs(r)):.3e}", float(np.max(np.abs(r)))
                )
        x, r = xn, rn
        it += 1
    return x, float(np.max(np.abs(r), initial=0.0)), it


def _endpoint_match(spec: ActionSpec, a: np.ndarray, b: np.ndarray, atol=1e-9) -> bool:
    d = a - b
    if spec.period:
        d = d - spec.period * np.round(d / spec.period)
    return bool(np.all(np.abs(d) <= atol * max(1.0, np.max(np.abs(b), initial=0.0))))


def caustic_ratio(spec: ActionSpec, path: Path) -> float:
    """Smallest |eigenvalue| of the mass-normalized Hessian over the free-particle one."""
    H = action_hessian(spec, path)
    if H.shape[0] == 0:
        return 1.0
    m = np.tile(spec.mass_vector[spec.mesh.free], spec.time_steps - 1)
    dinv = sp.diags(1.0 / np.sqrt(m))
    Hn = (dinv @ H @ dinv).tocsc()
    K = spec.time_steps
    lam_free = 4.0 * np.sin(np.pi / (2 * K)) ** 2 / spec.dt
    if Hn.shape[0] <= _DENSE_LIMIT:
        lam = np.min(np.abs(sla.eigvalsh(Hn.toarray())))
    else:
        # shift-invert about zero; slice-major ordering keeps the factor banded
        try:
            lu = spla.splu(Hn, permc_spec="NATURAL")
            op = spla.LinearOperator(Hn.shape, lu.solve, dtype=float)
            vals = spla.eigsh(Hn, k=1, sigma=0.0, which="LM", OPinv=op, return_eigenvectors=False)
            lam = float(np.min(np.abs(vals)))
        except RuntimeError:
            lam = 0.0
    return float(lam / lam_free)


def solve(
    spec: ActionSpec,
    phi_i,
    phi_f,
    initial_guess: Optional[Path] = None,
    tol: float = 1e-10,
    max_iters: int = MAX_ITERS,
    check_caustic: bool = True,
    caustic_rtol: float = CAUSTIC_RTOL,
    seed_label: str = "line",
) -> ExtremalPath:
    """Extremal path between two configurations.

    Dirichlet sites keep the values of the initial guess at every slice.
    Raises :class:`ConjugatePointError` when the converged Hessian is
    singular relative to the free-particle Hessian by less than
    ``caustic_rtol``.
    """
    a, b = _values(phi_i), _values(phi_f)
    if a.shape != (spec.mesh.n_sites,) or b.shape != a.shape:
        raise MeshMismatchError("endpoints do not live on the action's mesh")
    guess = Path.linear(spec, a, b) if initial_guess is None else initial_guess
    if not spec.mesh.same_as(guess.mesh) or guess.n_steps != spec.time_steps:
        raise MeshMismatchError("initial guess does not match the action's mesh or time grid")
    if not (_endpoint_match(spec, guess.values[0], a) and _endpoint_match(spec, guess.values[-1], b)):
        raise ValueError("initial guess does not match the endpoint configurations")

    free = spec.mesh.free
    base = np.array(guess.values)
    shape = (spec.time_steps - 1, len(free))

    def assemble(x):
        v = base.copy()
        v[1:-1, free] = x.reshape(shape)
        return Path(spec.mesh, v, spec.total_time)

    def residual(x):
        return eom_residual(spec, assemble(x))[:, free].ravel()

    def hessian(x):
        return action_hessian(spec, assemble(x))

    x, res, it = newton_solve(base[1:-1, free].ravel(), residual, hessian, tol, max_iters)
    path = assemble(x)
    if check_caustic:
        ratio = caustic_ratio(spec, path)
        if ratio < caustic_rtol:
            raise ConjugatePointError(
                f"endpoints are (nearly) conjugate: Hessian ratio {ratio:.3e} < {caustic_rtol:g}", ratio
            )
    return ExtremalPath(path, action(spec, path), res, seed_label, it)


def path_distance(p: Path, q: Path) -> float:
    """Sup over slices of the flat L2 distance between two paths."""
    if p.values.shape != q.values.shape:
        raise MeshMismatchError("paths have different shapes")
    d2 = np.sum(p.mesh.weights * (p.values - q.values) ** 2, axis=1)
    return float(np.sqrt(np.max(d2)))


def _labelled(seeds):
    if isinstance(seeds, Mapping):
        return list(seeds.items())
    out = []
    for i, s in enumerate(seeds):
        out.append(s if isinstance(s, tuple) else (f"seed{i}", s))
    return out


def enumerate_extremals(
    spec: ActionSpec,
    phi_i,
    phi_f,
    seeds,
    tol: float = 1e-10,
    dedup_threshold: float = DEDUP_THRESHOLD,
    jobs: int = 1,
    check_caustic: bool = True,
) -> ExtremalSet:
    """Solve from every seed and keep one representative per distinct extremal.

    Seeds may be a list of paths, ``(label, path)`` pairs, or a mapping.
    Failed seeds are recorded, never raised; results are merged in seed order.
    """
    labelled = _labelled(seeds)
    if not labelled:
        raise ValueError("enumerate needs at least one seed")

    def run(item):
        label, seed = item
        try:
            return solve(spec, phi_i, phi_f, seed, tol=tol, check_caustic=check_caustic, seed_label=label)
        except (NonconvergenceError, ConjugatePointError) as exc:
            return (label, str(exc))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, labelled))
    else:
        results = [run(item) for item in labelled]

    kept, failures = [], []
    for res in results:
        if isinstance(res, tuple):
            failures.append(res)
            continue
        if all(path_distance(res.path, k.path) >= dedup_threshold for k in kept):
            kept.append(res)
    ends = (FieldConfig(spec.mesh, _values(phi_i)), FieldConfig(spec.mesh, _values(phi_f)))
    return ExtremalSet(tuple(kept), ends, dedup_threshold, tuple(l for l, _ in labelled), tuple(failures))


def on_shell_momentum(spec: ActionSpec, ex: ExtremalPath, end: str = "final") -> FieldConfig:
    """Endpoint momentum ``p_f = dS/dphi_f`` or ``p_i = -dS/dphi_i``."""
    phi = ex.path.values
    m = spec.mass_vector
    dt = spec.dt
    if end == "final":
        p = m * (phi[-1] - phi[-2]) / dt - 0.5 * dt * spec.potential_grad(phi[-1])
    elif end == "initial":
        p = m * (phi[1] - phi[0]) / dt + 0.5 * dt * spec.potential_grad(phi[0])
    else:
        raise ValueError("end must be 'initial' or 'final'")
    return FieldConfig(spec.mesh, p)


def _low_modes(spec: ActionSpec, n_modes: int) -> np.ndarray:
    mesh = spec.mesh
    free = mesh.free
    nf = len(free)
    if nf == 0:
        return np.zeros((0, mesh.n_sites))
    S = mesh.stiffness_matrix()[free][:, free].toarray()
    if not np.any(S):
        vecs = np.eye(nf)
    else:
        _, vecs = sla.eigh(S, np.diag(mesh.weights[free]))
    out = np.zeros((min(n_modes, nf), mesh.n_sites))
    for i in range(len(out)):
        v = vecs[:, i]
        out[i, free] = v / np.max(np.abs(v))
    return out


def default_seeds(spec: ActionSpec, phi_i, phi_f, n_modes: int = 2, amplitude: float = 0.5) -> list:
    """Straight line plus ``+-amplitude * sin(pi t / T)`` bumps along low Laplacian modes."""
    line = Path.linear(spec, phi_i, phi_f)
    seeds = [("line", line)]
    bump = np.sin(np.pi * line.times / spec.total_time)[:, None]
    for i, mode in enumerate(_low_modes(spec, n_modes)):
        for sign, tag in ((1, "+"), (-1, "-")):
            v = line.values + sign * amplitude * bump * mode
            seeds.append((f"mode{i}{tag}", Path(spec.mesh, v, spec.total_time)))
    return seeds


def winding_seeds(spec: ActionSpec, phi_i, phi_f, windings: Sequence) -> list:
    """Straight-line seeds ending on ``phi_f + period * w`` for each winding ``w``.

    ``w`` is an integer (same winding on every free site) or a tuple with one
    integer per free site.
    """
    if not spec.period:
        raise ValueError("winding seeds need a circle-valued action (period set)")
    a, b = _values(phi_i), _values(phi_f)
    free = spec.mesh.free
    seeds = []
    for w in windings:
        shift = np.zeros(spec.mesh.n_sites)
        shift[free] = spec.period * np.broadcast_to(np.asarray(w, float), (len(free),))
        label = "w=" + ",".join(str(int(x)) for x in np.atleast_1d(w))
        seeds.append((label, Path.linear(spec, a, b + shift)))
    return seeds


def winding_product(*ranges) -> list:
    """All per-site winding tuples, e.g. ``winding_product((-1, 0, 1), (0, 1))``."""
    return list(itertools.product(*ranges))


def on_shell_energy(spec: ActionSpec, ex: ExtremalPath) -> float:
    from .model import discrete_energy

    return float(np.mean(discrete_energy(spec, ex.path)))
