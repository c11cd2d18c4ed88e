"""Convergence harness: error norms, rate tables, CSV output."""

import csv

import numpy as np
import pytest

from polydarcy import linsolve, ncvem, polymesh, study
from polydarcy.cases import get_case, polynomial_case
from polydarcy.polybasis import n_monomials
from polydarcy.study import ConvergenceRow, RtRow


def test_solve_case_field_shapes():
    mesh = polymesh.generate_distorted_polygonal(2, 2, seed=4, distortion=0.2)
    case = polynomial_case(1, seed=2)
    result = study.solve_case(mesh, case, 1, solver_tol=1e-14)
    assert result.k == 1
    assert result.pressure.degree == 2
    assert result.grad_pressure.degree == 1
    assert result.velocity.projected.degree == 1
    assert result.pressure.coeffs.shape == (4, n_monomials(2))
    assert result.grad_pressure.coeffs.shape == (4, 2 * n_monomials(1))


def test_error_norms_vanish_on_polynomial_patch():
    # degree-2 pressure with constant K is reproduced exactly by the k=1 space
    mesh = polymesh.generate_distorted_polygonal(2, 2, seed=4, distortion=0.2)
    case = polynomial_case(1, seed=2)
    result = study.solve_case(mesh, case, 1, solver_tol=1e-14)
    row = study.error_norms(result, case)
    assert row.n_elements == 4
    assert row.error_u <= 1e-9 * max(row.ref_u, 1.0)
    assert row.error_p <= 1e-9 * max(row.ref_p, 1.0)
    assert row.error_grad_p <= 1e-9 * max(row.ref_grad_p, 1.0)
    assert row.error_div <= 1e-9 * max(row.ref_div, 1.0)


def _row(n, e, **orders):
    return ConvergenceRow(n_elements=n, error_u=e, error_p=e,
                          error_grad_p=e, error_div=e,
                          ref_u=1.0, ref_p=1.0, ref_grad_p=1.0, ref_div=1.0,
                          **orders)


def test_compute_orders_is_log2_of_error_ratio():
    rows = [_row(16, 1.0), _row(64, 0.25), _row(256, 0.03125)]
    study.compute_orders(rows)
    assert rows[0].order_u is None
    assert rows[1].order_u == pytest.approx(2.0)
    assert rows[2].order_u == pytest.approx(3.0)
    assert rows[2].order_div == pytest.approx(3.0)


def test_orders_at_machine_precision_report_exact():
    rows = [_row(16, 1e-13), _row(64, 2e-13)]
    study.compute_orders(rows)
    assert rows[1].order_u == study.EXACT_MARK


def test_generate_level_mesh_families():
    uniform = study.generate_level_mesh("uniform", 3, seed=0)
    assert uniform.num_cells == 9
    distorted = study.generate_level_mesh("distorted", 3, seed=0)
    assert distorted.num_cells == 9
    assert not np.array_equal(uniform.vertices, distorted.vertices)
    with pytest.raises(ValueError):
        study.generate_level_mesh("hexagonal", 3, seed=0)


def test_convergence_study_needs_three_levels():
    with pytest.raises(ValueError):
        study.convergence_study(get_case("bubble-unit"), 0, levels=2)


def test_convergence_study_first_order_rates():
    rows = study.convergence_study(get_case("bubble-sine"), 0, levels=3)
    assert [r.n_elements for r in rows] == [16, 64, 256]
    assert rows[0].order_u is None
    for prev, cur in zip(rows, rows[1:]):
        assert cur.error_u < prev.error_u
        assert cur.error_p < prev.error_p
        assert cur.error_grad_p < prev.error_grad_p
        assert cur.error_div < prev.error_div
    # k=0: velocity, gradient and divergence are first order, pressure second
    assert 0.8 < rows[-1].order_u < 1.2
    assert 0.8 < rows[-1].order_grad_p < 1.2
    assert 0.8 < rows[-1].order_div < 1.2
    assert 1.7 < rows[-1].order_p < 2.3


def test_convergence_study_exact_case_is_marked():
    case = polynomial_case(0, seed=1)
    rows = study.convergence_study(case, 0, levels=3, base_n=2,
                                   solver_tol=1e-14)
    for row in rows[1:]:
        assert row.order_u == study.EXACT_MARK
        assert row.order_p == study.EXACT_MARK
        assert row.order_grad_p == study.EXACT_MARK
    # constant velocity: the forcing is zero, so no divergence marker applies
    assert rows[-1].error_div < 1e-9


def test_partial_table_after_solver_failure(monkeypatch):
    real = ncvem.solve_pressure
    calls = {"n": 0}

    def flaky(system, tol=1e-12):
        calls["n"] += 1
        if calls["n"] >= 3:
            raise linsolve.SolverError("no convergence", residual=1.0)
        return real(system, tol=tol)

    monkeypatch.setattr(ncvem, "solve_pressure", flaky)
    rows = study.convergence_study(get_case("bubble-unit"), 0, levels=4,
                                   base_n=2)
    assert len(rows) == 2
    assert rows[1].order_u is not None


def test_rt_errors_require_lowest_order():
    mesh = polymesh.generate_uniform_quads(2, 2)
    case = get_case("bubble-unit")
    result = study.solve_case(mesh, case, 1)
    with pytest.raises(ValueError):
        study.rt_errors(result, case)


def test_rt_comparison_study_small():
    rows = study.rt_comparison_study(levels=3, base_n=2)
    assert [r.n_elements for r in rows] == [4, 16, 64]
    for row in rows:
        assert 0.0 < row.error_rt < row.error_proj
    for prev, cur in zip(rows, rows[1:]):
        assert cur.error_proj < prev.error_proj
        assert cur.error_rt < prev.error_rt
    assert rows[-1].order_rt > 0.8


def test_convergence_csv_layout(tmp_path):
    rows = [
        _row(16, 0.1),
        ConvergenceRow(n_elements=64, error_u=0.025, error_p=0.025,
                       error_grad_p=0.025, error_div=0.025,
                       order_u=2.0, order_p="exact"),
    ]
    path = tmp_path / "conv.csv"
    study.write_convergence_csv(rows, str(path))
    with open(path, newline="", encoding="utf-8") as fh:
        got = list(csv.reader(fh))
    assert got[0] == ["nElements", "errorU", "orderU", "errorP", "orderP",
                      "errorGradP", "orderGradP", "errorDiv", "orderDiv"]
    assert got[1] == ["16", "1.00000e-01", "", "1.00000e-01", "",
                      "1.00000e-01", "", "1.00000e-01", ""]
    assert got[2][1] == "2.50000e-02"
    assert got[2][2] == "2.00000e+00"
    assert got[2][4] == "exact"
    assert got[2][6] == ""


def test_rt_csv_layout(tmp_path):
    rows = [
        RtRow(n_elements=4, error_proj=0.5, error_rt=0.25),
        RtRow(n_elements=16, error_proj=0.25, error_rt=0.125,
              order_proj=1.0, order_rt=1.0),
    ]
    path = tmp_path / "rt.csv"
    study.write_rt_csv(rows, str(path))
    with open(path, newline="", encoding="utf-8") as fh:
        got = list(csv.reader(fh))
    assert got[0] == ["nElements", "errorProjU", "orderProjU",
                      "errorRtU", "orderRtU"]
    assert got[1] == ["4", "5.00000e-01", "", "2.50000e-01", ""]
    assert got[2] == ["16", "2.50000e-01", "1.00000e+00",
                      "1.25000e-01", "1.00000e+00"]


def test_format_table_strings():
    assert study.format_table([]) == "(no completed levels)"
    rows = [
        _row(16, 0.1),
        _row(64, 0.05, order_u=1.25, order_p="exact"),
    ]
    text = study.format_table(rows)
    lines = text.splitlines()
    assert "errorU" in lines[0]
    assert "-" in lines[1]
    assert "1.250" in lines[2]
    assert "exact" in lines[2]


def test_format_table_rt_branch():
    rows = [RtRow(n_elements=4, error_proj=0.5, error_rt=0.25)]
    text = study.format_table(rows)
    assert "errProjU" in text.splitlines()[0]
    assert "-" in text.splitlines()[1]
