import os

import numpy as np
import pytest

from locality_lab import exemplars
from locality_lab.errors import InvalidMeshError
from locality_lab.extremal import solve


def test_annulus_oracle_boundary_data():
    th = np.linspace(0, 2 * np.pi, 17)
    assert np.allclose(exemplars.annulus_oracle(2.0, th), 0.0, atol=1e-13)
    assert np.allclose(exemplars.annulus_oracle(4.0, th), 4 * np.sin(5 * th), atol=1e-12)


def test_annulus_oracle_coefficients_at_r3():
    A = 4 / (4**5 - 2**10 * 4**-5)
    B = -A * 2**10
    assert exemplars.annulus_oracle(3.0, np.pi / 10) == pytest.approx(A * 3**5 + B * 3**-5, rel=1e-12)


def test_run_annulus(tmp_path):
    res = exemplars.run_annulus(out_dir=str(tmp_path))
    m = res.metrics
    assert res.passed, res.failures()
    assert m["inner_ring_max_abs"] == 0.0
    assert m["outer_ring_at_pi_over_10"] == pytest.approx(4.0, abs=1e-12)
    assert m["interior_r3_error"] < 1e-3
    assert m["max_error"] < 1e-3
    assert os.path.exists(tmp_path / "annulus_field.csv") and os.path.exists(tmp_path / "annulus.svg")


def test_five_point_scheme_is_reported_not_hidden():
    res = exemplars.run_annulus(method="five_point")
    assert res.metrics["fourier_max_error"] < 1e-3
    # the plain five-point stencil is first-order accurate near the rings at this grid
    assert res.metrics["max_error"] > 1e-3
    assert not res.passed


def test_annulus_five_point_converges():
    errs = [exemplars.run_annulus(n, 4 * (n - 1), "five_point").metrics["max_error"] for n in (17, 33, 65)]
    assert errs[0] > errs[1] > errs[2]


def test_annulus_grid_too_small():
    with pytest.raises(InvalidMeshError):
        exemplars.run_annulus(9, 64)


def test_circle_wave_quarter():
    res = exemplars.run_circle_wave(1, 4)
    m = res.metrics
    assert res.passed, res.failures()
    assert m["O_surjective"] == 1.0 and m["N_surjective"] == 0.0
    assert m["O_fundamental_matched"] == 1.0 and m["N_fundamental_matched"] == 0.0
    assert m["max_restricted_residual"] < 1e-6
    assert m["N_fundamental_global_residual"] > 1e-3
    assert res.details["ratio_O_over_N"] == "1/3"
    assert res.details["O"].matched[0] == (1, 4)


def test_circle_wave_irrational():
    res = exemplars.run_circle_wave(irrational="1/sqrt(2)")
    assert res.passed and res.metrics["only_constant"] == 1.0 and res.metrics["matched_O"] == 0.0


def test_circle_wave_bad_ratio():
    with pytest.raises(ValueError):
        exemplars.run_circle_wave(4, 4)


def test_dense_oracle_matches_newton():
    spec, _ = exemplars.nonlocal_fixture(1.0)
    z = np.zeros(spec.mesh.n_sites)
    ref = exemplars.dense_extremal(spec, z, z)
    got = solve(spec, z, z, tol=1e-12).path.values
    assert np.max(np.abs(got - ref)) < 1e-10 * np.max(np.abs(ref))


def test_run_nonlocal_source(tmp_path):
    res = exemplars.run_nonlocal_source(out_dir=str(tmp_path))
    m = res.metrics
    assert res.passed, res.failures()
    assert m["deviation_unit_source"] > 0.01
    assert m["condition_i_unit_source"] == 0.0
    assert m["localized_no_source"] == 1.0
    devs = res.details["deviations"]
    assert devs[0] <= devs[1] <= devs[2]
    assert res.details["verdicts"][-1] != "localized"
    assert (tmp_path / "nonlocal_source.csv").exists()
