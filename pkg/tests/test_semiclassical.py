import math

import numpy as np
import pytest

from locality_lab.checks import _vv_fixtures, coupled_pair, rotor_pair
from locality_lab.errors import CausticError
from locality_lab.extremal import ExtremalSet, enumerate_extremals, solve, winding_product, winding_seeds
from locality_lab.lattice import arc_predicate, build_circle_mesh, build_point_mesh, decompose
from locality_lab.model import ActionSpec, cut_boundary_stencil, oscillator_action, wave_action
from locality_lab.semiclassical import cluster_check, cross_sensitivity, kernel, relative_defect, van_vleck

METHODS = ("finite_difference", "hessian_block")


def _vv(spec, a, b, method):
    ex = solve(spec, a, b, tol=1e-12)
    return van_vleck(spec, ex, method, tol=1e-13) if method == "finite_difference" else van_vleck(spec, ex, method)


@pytest.mark.parametrize("method", METHODS)
def test_free_particle_determinant(method):
    spec = ActionSpec(build_point_mesh(1), 1.0, 100)
    assert abs(_vv(spec, [0.0], [1.0], method).determinant - 1.0) < 1e-6


@pytest.mark.parametrize("method", METHODS)
def test_oscillator_determinant(method):
    spec = oscillator_action([1.0], 1.0, 200)
    assert abs(_vv(spec, [0.0], [1.0], method).determinant - 1 / math.sin(1)) < 1e-4


@pytest.mark.parametrize("method", METHODS)
def test_uncoupled_oscillators_factorize(method):
    joint = _vv(oscillator_action([1.0, 4.0], 1.0, 200), [0.2, -0.1], [1.0, 0.5], method).determinant
    one = _vv(oscillator_action([1.0], 1.0, 200), [0.2], [1.0], method).determinant
    two = _vv(oscillator_action([4.0], 1.0, 200), [-0.1], [0.5], method).determinant
    assert abs(joint - one * two) <= 1e-6 * abs(joint)


@pytest.mark.parametrize("name, spec, a, b", _vv_fixtures(), ids=[f[0] for f in _vv_fixtures()])
def test_methods_agree(name, spec, a, b):
    ex = solve(spec, a, b, tol=1e-12)
    fd = van_vleck(spec, ex, "finite_difference", tol=1e-13).determinant
    hb = van_vleck(spec, ex, "hessian_block").determinant
    assert abs(fd - hb) <= 1e-4 * abs(hb)


def _near_caustic_extremal():
    # bisect on the sign change of the discrete determinant near omega T = pi
    def vv(T):
        s = oscillator_action([1.0], T, 50)
        return s, solve(s, [0.0], [0.0], check_caustic=False)

    lo, hi = 3.0, 3.2
    sign_lo = np.sign(van_vleck(*vv(lo)).determinant)
    for _ in range(55):
        mid = 0.5 * (lo + hi)
        if np.sign(van_vleck(*vv(mid)).determinant) == sign_lo:
            lo = mid
        else:
            hi = mid
    return vv(lo)


def test_near_caustic_flag_and_kernel_error():
    spec, ex = _near_caustic_extremal()
    assert van_vleck(spec, ex).near_caustic
    with pytest.raises(CausticError):
        kernel(spec, [ex])
    assert abs(kernel(spec, [ex], allow_caustic=True).amplitude) > 1e3
    far = oscillator_action([1.0], 1.0, 50)
    assert not van_vleck(far, solve(far, [0.0], [1.0])).near_caustic


def test_kernel_trivial_extremal():
    spec = ActionSpec(build_point_mesh(1), 1.0, 20)
    k = kernel(spec, [solve(spec, [0.3], [0.3])])
    assert abs(k.amplitude - 1.0) < 1e-12
    assert len(k.per_extremal) == 1 and k.hbar == 1.0


def test_kernel_free_particle_phase():
    T, xi, xf = 2.0, 0.0, 1.5
    spec = ActionSpec(build_point_mesh(1), T, 40)
    k = kernel(spec, [solve(spec, [xi], [xf])], hbar=1.0)
    exact = math.sqrt(1 / T) * np.exp(1j * (xf - xi) ** 2 / (2 * T))
    assert abs(k.amplitude - exact) < 1e-10


def test_destructive_interference():
    spec = ActionSpec(build_point_mesh(1), 1.0, 20, period=2 * np.pi)
    s = enumerate_extremals(spec, [0.0], [np.pi / 2], winding_seeds(spec, [0.0], [np.pi / 2], (-1, 0)))
    dS = s[0].on_shell_action - s[1].on_shell_action
    assert dS == pytest.approx(np.pi**2)
    k = kernel(spec, s, hbar=dS / np.pi)
    assert abs(k.amplitude) < 1e-12


def test_kernel_magnitude_invariant_under_potential_shift():
    spec = oscillator_action([1.0, 2.0], 1.0, 50)
    a, b = [0.1, 0.2], [0.4, -0.3]
    k0 = kernel(spec, [solve(spec, a, b)], 0.3)
    shifted = spec.with_(offset=1.7)
    k1 = kernel(shifted, [solve(shifted, a, b)], 0.3)
    assert abs(abs(k0.amplitude) - abs(k1.amplitude)) < 1e-12
    phase = k1.amplitude / k0.amplitude
    assert abs(phase - np.exp(-1j * 1.7 / 0.3)) < 1e-10


def test_kernel_rejects_bad_hbar():
    spec = ActionSpec(build_point_mesh(1), 1.0, 20)
    with pytest.raises(ValueError):
        kernel(spec, [solve(spec, [0.0], [1.0])], hbar=0.0)


def _wave64(T, K, cut=False):
    mesh = build_circle_mesh(64, 2 * np.pi)
    dec = decompose(mesh, arc_predicate(0.0, np.pi / 2, 2 * np.pi))
    spec = wave_action(mesh, T, K)
    if cut:
        spec = cut_boundary_stencil(spec, dec)
    x = mesh.positions[:, 0]
    return spec, dec, solve(spec, 0.1 * np.sin(x), 0.1 * np.cos(2 * x))


def test_cross_sensitivity_decoupled():
    spec, dec, ex = _wave64(1.0, 50, cut=True)
    assert cross_sensitivity(spec, dec, ex).offdiag_norm < 1e-8


def test_cross_sensitivity_boundary_coupled():
    spec, dec, ex = _wave64(1.0, 50)
    assert cross_sensitivity(spec, dec, ex).offdiag_norm > 1e-3


def test_cross_sensitivity_vanishes_for_short_times():
    vals = [cross_sensitivity(*_wave64(T, 2)).offdiag_norm for T in (0.1, 0.01, 0.001)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 1e-5


def test_cluster_uncoupled_oscillators():
    spec = oscillator_action([1.0, 3.0], 1.0, 64)
    dec = decompose(spec.mesh, [0])
    rep = cluster_check(spec, dec, [0.1, 0.2], [0.6, -0.4], hbar=0.1)
    assert rep.relative_defect < 1e-8
    assert rep.joint_count == 1 and rep.intrinsic_counts == (1, 1)


def test_cluster_winding_three_by_two():
    dec = decompose(build_point_mesh(2), [0])
    wO, wN = (-1, 0, 1), (0, 1)
    rep = cluster_check(
        rotor_pair(),
        dec,
        [0.3, -0.2],
        [1.0, 0.5],
        seeds=lambda s, x, y: winding_seeds(s, x, y, winding_product(wO, wN)),
        seeds_O=lambda s, x, y: winding_seeds(s, x, y, wO),
        seeds_N=lambda s, x, y: winding_seeds(s, x, y, wN),
        hbar=0.5,
    )
    assert rep.joint_count == 6 and rep.intrinsic_counts == (3, 2) and rep.bijection
    assert rep.relative_defect < 1e-6


def test_cluster_coupled_pair_fails():
    dec = decompose(build_point_mesh(2), [0])
    rep = cluster_check(coupled_pair(), dec, [0.3, -0.2], [1.0, 0.5], hbar=0.05)
    assert rep.relative_defect > 0.1


def test_zero_joint_kernel_defect_undefined():
    assert math.isnan(relative_defect(0j, 1 + 0j))


def test_empty_set_kernel_is_zero():
    spec = ActionSpec(build_point_mesh(1), 1.0, 20)
    empty = ExtremalSet((), (None, None), 1e-4)
    assert kernel(spec, empty).amplitude == 0
