import math

import numpy as np
import pytest

from locality_lab.errors import ConjugatePointError, MeshMismatchError, NonconvergenceError
from locality_lab.extremal import (
    default_seeds,
    enumerate_extremals,
    on_shell_momentum,
    path_distance,
    solve,
    winding_seeds,
)
from locality_lab.lattice import build_circle_mesh, build_point_mesh
from locality_lab.model import ActionSpec, Path, SitePotential, oscillator_action, wave_action


def free_particle(K=100, period=None):
    return ActionSpec(build_point_mesh(1), 1.0, K, period=period)


def test_free_particle_straight_line():
    spec = free_particle()
    ex = solve(spec, [0.0], [1.0])
    assert np.allclose(ex.path.values[:, 0], np.linspace(0, 1, 101), atol=1e-12)
    assert ex.on_shell_action == pytest.approx(0.5, abs=1e-12)
    assert ex.residual_norm <= 1e-10


def test_oscillator_closed_form():
    ex = solve(oscillator_action([1.0], 1.0, 200), [0.0], [1.0])
    assert abs(ex.on_shell_action - math.cos(1) / (2 * math.sin(1))) < 1e-4


def test_focal_endpoints_raise_conjugate_point():
    spec = oscillator_action([1.0], math.pi, 200)
    with pytest.raises(ConjugatePointError):
        solve(spec, [0.0], [0.0])


def _dense_oracle(spec, a, b):
    # block-tridiagonal Euler-Lagrange system for V = 1/2 phi^T S phi, built by hand
    n, K, dt = spec.mesh.n_sites, spec.time_steps, spec.dt
    M = np.diag(spec.mass_vector)
    S = spec.mesh.stiffness_matrix().toarray()
    D = 2 * M / dt - dt * S
    A = np.zeros(((K - 1) * n, (K - 1) * n))
    rhs = np.zeros((K - 1) * n)
    for k in range(K - 1):
        A[k * n:(k + 1) * n, k * n:(k + 1) * n] = D
        if k > 0:
            A[k * n:(k + 1) * n, (k - 1) * n:k * n] = -M / dt
        if k < K - 2:
            A[k * n:(k + 1) * n, (k + 1) * n:(k + 2) * n] = -M / dt
    rhs[:n] += M @ a / dt
    rhs[-n:] += M @ b / dt
    return np.linalg.solve(A, rhs).reshape(K - 1, n)


def test_quadratic_solve_matches_dense_oracle():
    mesh = build_circle_mesh(8, 1.0)
    spec = wave_action(mesh, 0.3, 40)
    x = mesh.positions[:, 0]
    a, b = np.sin(2 * np.pi * x), 0.5 * np.cos(4 * np.pi * x)
    ex = solve(spec, a, b, tol=1e-12)
    ref = _dense_oracle(spec, a, b)
    assert np.max(np.abs(ex.path.values[1:-1] - ref)) <= 1e-10 * np.max(np.abs(ref))
    assert ex.iterations <= 2


def test_winding_sectors_on_circle():
    spec = free_particle(50, period=2 * np.pi)
    seeds = winding_seeds(spec, [0.0], [np.pi / 2], (-1, 0, 1))
    s = enumerate_extremals(spec, [0.0], [np.pi / 2], seeds)
    assert len(s) == 3
    for ex, w in zip(s, (-1, 0, 1)):
        assert ex.on_shell_action == pytest.approx((np.pi / 2 + 2 * np.pi * w) ** 2 / 2, rel=1e-10)
    assert [ex.seed_label for ex in s] == ["w=-1", "w=0", "w=1"]


def test_quadratic_action_has_one_extremal():
    spec = oscillator_action([1.0, 2.0], 1.0, 60)
    s = enumerate_extremals(spec, [0.1, 0.2], [0.5, -0.4], default_seeds(spec, [0.1, 0.2], [0.5, -0.4], 2, 0.8))
    assert len(s) == 1


def test_duplicate_seeds_deduplicated():
    spec = oscillator_action([1.0], 1.0, 40)
    line = Path.linear(spec, [0.0], [1.0])
    s = enumerate_extremals(spec, [0.0], [1.0], [line, line, line])
    assert len(s) == 1
    assert s[0].seed_label == "seed0"


def test_pairwise_distance_exceeds_threshold():
    mesh = build_circle_mesh(6, 1.0)
    sg = SitePotential(lambda p: 1 - np.cos(p), np.sin, np.cos, 40.0)
    spec = ActionSpec(mesh, 1.5, 60, terms=(sg,))
    a = np.zeros(6)
    s = enumerate_extremals(spec, a, a, default_seeds(spec, a, a, 3, 2.0), check_caustic=False)
    for i in range(len(s)):
        for j in range(i):
            assert path_distance(s[i].path, s[j].path) >= s.dedup_threshold


def test_failed_seeds_give_empty_set_not_error():
    spec = oscillator_action([1.0], math.pi, 100)
    s = enumerate_extremals(spec, [0.0], [0.0], [Path.linear(spec, [0.0], [0.0])])
    assert s.empty
    assert len(s.failures) == 1


def test_enumerate_is_deterministic_and_thread_safe():
    mesh = build_circle_mesh(6, 1.0)
    sg = SitePotential(lambda p: 1 - np.cos(p), np.sin, np.cos, 3.0)
    spec = ActionSpec(mesh, 1.0, 40, terms=(sg,))
    a, b = 0.3 * np.ones(6), -0.2 * np.ones(6)
    seeds = default_seeds(spec, a, b, 3, 1.0)
    s1 = enumerate_extremals(spec, a, b, seeds)
    s2 = enumerate_extremals(spec, a, b, seeds, jobs=4)
    assert len(s1) == len(s2)
    for p, q in zip(s1, s2):
        assert np.array_equal(p.path.values, q.path.values)
        assert p.seed_label == q.seed_label


def test_momentum_examples():
    spec = free_particle()
    ex = solve(spec, [0.0], [1.0])
    assert on_shell_momentum(spec, ex, "final").values[0] == pytest.approx(1.0, abs=1e-10)
    static = solve(spec, [0.4], [0.4])
    assert on_shell_momentum(spec, static, "initial").values[0] == pytest.approx(0.0, abs=1e-12)
    osc = oscillator_action([1.0], 1.0, 200)
    p = on_shell_momentum(osc, solve(osc, [0.0], [1.0]), "final").values[0]
    assert abs(p - math.cos(1) / math.sin(1)) < 1e-3


def test_momentum_is_action_derivative():
    spec = oscillator_action([1.0], 1.0, 100)
    ex = solve(spec, [0.0], [1.0], tol=1e-13)
    h = 1e-5
    sp_ = solve(spec, [0.0], [1.0 + h], tol=1e-13).on_shell_action
    sm = solve(spec, [0.0], [1.0 - h], tol=1e-13).on_shell_action
    assert on_shell_momentum(spec, ex).values[0] == pytest.approx((sp_ - sm) / (2 * h), rel=1e-7)


def test_guess_validation():
    spec = oscillator_action([1.0], 1.0, 20)
    with pytest.raises(ValueError):
        solve(spec, [0.0], [1.0], Path.linear(spec, [0.0], [2.0]))
    with pytest.raises(MeshMismatchError):
        solve(spec, [0.0, 1.0], [1.0, 0.0])


def test_nonconvergence_reported():
    spec = ActionSpec(build_point_mesh(1), 1.0, 30, terms=(SitePotential(np.exp, np.exp, np.exp, 1.0),))
    with pytest.raises(NonconvergenceError):
        solve(spec, [0.0], [40.0], max_iters=2, check_caustic=False)
