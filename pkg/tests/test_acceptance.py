"""Acceptance criteria: each test prints one PASS/FAIL line and asserts the same outcome."""
import filecmp
import os
import time
from fractions import Fraction

import pytest
from click.testing import CliRunner

from locality_lab import checks, exemplars, runner
from locality_lab.cli import main
from locality_lab.modes import circle_mode_analysis, commensurability


@pytest.fixture
def report(capsys):
    def _report(number, title, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
        assert ok, detail

    return _report


def _metrics(res, *keys):
    return ", ".join(f"{k}={res.metrics[k]:.4g}" for k in keys)


def test_criterion_1_annulus(report):
    t0 = time.perf_counter()
    res = exemplars.run_annulus(33, 128)
    dt = time.perf_counter() - t0
    ok = res.metrics["max_error"] < 1e-3 and dt < 5.0
    report(1, "annulus vs separation-of-variables oracle", ok, f"max_error={res.metrics['max_error']:.3g}, runtime={dt:.2f}s")


def test_criterion_2_commensurability(report):
    t0 = time.perf_counter()
    rep = commensurability(Fraction(1, 4), 1, n_max=32)
    n_side = circle_mode_analysis(Fraction(1, 4))["N"]
    dt = time.perf_counter() - t0
    all_4n = rep.matched == tuple((n, 4 * n) for n in range(1, 33))
    ok = all_4n and 1 in n_side.unmatched_intrinsic and dt < 1.0
    report(2, "circle commensurability 1/4 and 1/3", ok, f"O modes matched by 4n: {all_4n}, N fundamental unmatched: {1 in n_side.unmatched_intrinsic}, runtime={dt:.3f}s")


def test_criterion_3_van_vleck(report):
    res = checks.suite_van_vleck()
    detail = _metrics(res, "oscillator_fd_error", "oscillator_schur_error", "free_particle_fd_error", "free_particle_schur_error", "max_method_disagreement")
    report(3, "Van Vleck determinant oracles", res.passed, detail)


def test_criterion_4_cluster(report):
    res = checks.suite_cluster()
    detail = _metrics(res, "decoupled_defect", "decoupled_joint_count", "decoupled_product_count", "coupled_defect")
    report(4, "semi-classical cluster decomposition", res.passed, detail)


def test_criterion_5_localization(report):
    loc = checks.suite_localization()
    src = exemplars.run_nonlocal_source()
    ok = loc.metrics["cut_localized"] == 1.0 and src.passed
    detail = _metrics(loc, "epsilon", "cut_localized") + "; " + _metrics(src, "deviation_unit_source", "condition_i_unit_source", "monotone", "max_oracle_rel_error")
    report(5, "epsilon-localization detector", ok, detail)


def test_criterion_6_jacobi(report):
    res = checks.suite_jacobi()
    report(6, "Jacobi geodesic vs action extremal", res.passed, _metrics(res, "deviation", "wrong_energy_deviation"))


def test_criterion_7_solver(report):
    res = checks.suite_solver()
    detail = _metrics(res, "eom_vs_fd_gradient_rel", "action_order_min", "action_order_max", "drift_order_min", "drift_order_max")
    report(7, "solver and discretization properties", res.passed, detail)


def _tree(root):
    return sorted(os.path.relpath(os.path.join(d, f), root) for d, _, fs in os.walk(root) for f in fs)


def test_criterion_8_end_to_end(report, tmp_path, monkeypatch):
    monkeypatch.delenv(runner.OUT_ENV, raising=False)
    cli = CliRunner()
    runs = []
    for name, jobs in (("a", "1"), ("b", "4")):
        t0 = time.perf_counter()
        r = cli.invoke(main, ["verify-all", "--jobs", jobs, "--out", str(tmp_path / name)])
        runs.append((r.exit_code, time.perf_counter() - t0))
    files_a = [f for f in _tree(tmp_path / "a") if f != runner.METADATA_FILE]
    files_b = [f for f in _tree(tmp_path / "b") if f != runner.METADATA_FILE]
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", files_a, shallow=False)
    n_json = sum(f.endswith(".json") for f in files_a)
    ok = all(code == 0 and dt < 300 for code, dt in runs) and files_a == files_b and not mismatch and not errors
    detail = f"exit codes {[c for c, _ in runs]}, runtimes {[round(t, 1) for _, t in runs]}s, {len(files_a)} files ({n_json} JSON) compared, mismatched={mismatch + errors}"
    report(8, "verify-all end to end, byte-stable outputs", ok, detail)
