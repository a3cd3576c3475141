import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from locality_lab import jacobi
from locality_lab.checks import anisotropic_oscillator
from locality_lab.errors import ClassicallyForbiddenError
from locality_lab.extremal import on_shell_energy, solve
from locality_lab.lattice import build_point_mesh
from locality_lab.model import ActionSpec, Path, oscillator_action


def test_free_metric_with_half_energy_is_base():
    spec = ActionSpec(build_point_mesh(2), 1.0, 10)
    h = jacobi.build(spec, 0.5)
    assert h.factor(np.array([3.0, -1.0])) == 1.0
    assert np.array_equal(h.matrix([0.0, 0.0]), np.eye(2))


def test_oscillator_factor_at_origin():
    spec = oscillator_action([1.0, 1.0], 1.0, 10)
    assert jacobi.build(spec, 1.0).factor(np.zeros(2)) == 2.0


def test_energy_below_potential_is_forbidden():
    spec = oscillator_action([1.0], 1.0, 10).with_(offset=1.0)
    h = jacobi.build(spec, 0.5)
    with pytest.raises(ClassicallyForbiddenError) as info:
        jacobi.length(h, Path.linear(spec, [0.0], [1.0]))
    assert len(info.value.slices) == 10


def test_static_path_has_zero_length():
    spec = oscillator_action([1.0], 1.0, 10)
    assert jacobi.length(jacobi.build(spec, 1.0), Path(spec.mesh, np.full((11, 1), 0.2), 1.0)) == 0.0


@given(st.lists(st.floats(0.01, 1.0), min_size=3, max_size=30))
def test_free_length_independent_of_parametrization(steps):
    x = np.concatenate([[0.0], np.cumsum(steps)])
    x /= x[-1]
    mesh = build_point_mesh(1)
    spec = ActionSpec(mesh, 1.0, len(steps))
    h = jacobi.build(spec, 0.5)
    assert jacobi.length(h, Path(mesh, x[:, None], 1.0)) == pytest.approx(1.0, rel=1e-12)


def test_oscillator_length_against_quadrature():
    spec = oscillator_action([1.0], 1.0, 400)
    ex = solve(spec, [0.0], [1.0])
    E = on_shell_energy(spec, ex)
    h = jacobi.build(spec, E)
    ref, _ = quad(lambda x: np.sqrt(2 * (E - 0.5 * x**2)), 0.0, 1.0, epsabs=1e-13)
    assert abs(jacobi.length(h, ex.path) - ref) < 1e-4


def test_length_reparametrization_invariance():
    spec = oscillator_action([1.0, 4.0], 1.0, 10)
    h = jacobi.build(spec, 3.0)
    n = 40000
    s = np.linspace(0, 1, n + 1)
    curve = lambda u: np.stack([np.cos(u), 0.5 * np.sin(2 * u)], axis=1)
    a = jacobi.length(h, Path(spec.mesh, curve(s), 1.0))
    b = jacobi.length(h, Path(spec.mesh, curve(s**2 * (3 - 2 * s)), 1.0))
    assert abs(a - b) <= 1e-8 * a


def test_reparametrize_gives_uniform_arclength():
    spec = oscillator_action([1.0, 4.0], 1.0, 10)
    h = jacobi.build(spec, 3.0)
    u = np.linspace(0, 1, 301) ** 2
    v = jacobi.reparametrize(h, np.stack([u, u**2], axis=1), 100)
    seg = np.sqrt([h.factor(m) for m in 0.5 * (v[1:] + v[:-1])] * np.sum(np.diff(v, axis=0) ** 2, axis=1))
    assert np.ptp(seg) < 1e-2 * np.mean(seg)


def test_free_equivalence_is_exact():
    spec = ActionSpec(build_point_mesh(2), 1.0, 50)
    ex = solve(spec, [0.0, 0.0], [1.0, 2.0])
    rep = jacobi.verify_equivalence(spec, ex, jacobi.build(spec, on_shell_energy(spec, ex)), 1e-8)
    assert rep.passed and rep.max_deviation < 1e-8


def test_anisotropic_oscillator_equivalence_and_wrong_energy():
    spec = anisotropic_oscillator(400)
    ex = solve(spec, [1.0, 0.0], [0.0, 1.0])
    E = on_shell_energy(spec, ex)
    good = jacobi.verify_equivalence(spec, ex, jacobi.build(spec, E), 1e-3)
    bad = jacobi.verify_equivalence(spec, ex, jacobi.build(spec, E + 0.5), 1e-3)
    assert good.passed and good.max_deviation < 1e-3
    assert not bad.passed and bad.max_deviation > 1e-2


def test_image_distance_ignores_parametrization():
    t = np.linspace(0, 1, 200)
    a = np.stack([t, t**2], axis=1)
    b = np.stack([t**3, t**6], axis=1)
    assert jacobi.image_distance(a, b) < 1e-3
    assert jacobi.image_distance(a, a + [0.0, 0.1]) == pytest.approx(0.1, rel=0.2)
