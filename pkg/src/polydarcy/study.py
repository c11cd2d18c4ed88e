"""Convergence studies: solve, recover, measure errors, tabulate rates.

Error norms are broken (cellwise) L2 norms against the exact solution of a
manufactured case, integrated at exactness 2(k+3).  Rate tables assume each
level halves the mesh width, so the estimated order of convergence is the
log2 of the error ratio between consecutive levels; rows whose errors sit at
machine precision relative to the exact solution report "exact" instead of a
meaningless ratio.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import linsolve, ncvem, polymesh, recovery
from .cases import ManufacturedCase, get_case
from .polybasis import n_monomials, polygon_quadrature
from .recovery import PiecewisePolyField, RecoveredVelocity, ScalarPolyField

EXACT_MARK = "exact"
_EXACT_REL = 1e-11


@dataclass
class SolveResult:
    """One mesh-level solve with recovered velocity and projected fields."""

    mesh: polymesh.PolyMesh
    k: int
    system: ncvem.SpdSystem
    velocity: RecoveredVelocity
    pressure: ScalarPolyField
    grad_pressure: PiecewisePolyField


@dataclass
class ConvergenceRow:
    """Errors at one refinement level, with orders against the previous row."""

    n_elements: int
    error_u: float
    error_p: float
    error_grad_p: float
    error_div: float
    order_u: object = None
    order_p: object = None
    order_grad_p: object = None
    order_div: object = None
    ref_u: float = 0.0
    ref_p: float = 0.0
    ref_grad_p: float = 0.0
    ref_div: float = 0.0


@dataclass
class RtRow:
    """RT-versus-projection comparison at one refinement level."""

    n_elements: int
    error_proj: float
    error_rt: float
    order_proj: object = None
    order_rt: object = None


def solve_case(mesh: polymesh.PolyMesh, case: ManufacturedCase, k: int,
               solver_tol: float = 1e-12) -> SolveResult:
    """Assemble, solve and recover one manufactured case on one mesh."""
    if not polymesh.euler_check(mesh):
        raise polymesh.MeshError("edge-count identity violated")
    system = ncvem.assemble(mesh, case.permeability, case.forcing, k,
                            boundary=case.pressure)
    ncvem.solve_pressure(system, tol=solver_tol)
    velocity = recovery.recover_velocity(system)
    nc = mesh.num_cells
    nk1 = n_monomials(k + 1)
    nk = n_monomials(k)
    p_coeffs = np.zeros((nc, nk1))
    g_coeffs = np.zeros((nc, 2 * nk))
    centers = np.zeros((nc, 2))
    diameters = np.zeros(nc)
    for c in range(nc):
        element = system.elements[c]
        p_loc = system.local_pressure(c)
        p_coeffs[c] = element.p0 @ p_loc
        g_coeffs[c] = element.grad_proj @ p_loc
        centers[c] = element.basis.center
        diameters[c] = element.basis.diameter
    pressure = ScalarPolyField(degree=k + 1, coeffs=p_coeffs,
                               centers=centers, diameters=diameters)
    grad_pressure = PiecewisePolyField(degree=k, coeffs=g_coeffs,
                                       centers=centers, diameters=diameters)
    return SolveResult(mesh=mesh, k=k, system=system, velocity=velocity,
                       pressure=pressure, grad_pressure=grad_pressure)


def error_norms(result: SolveResult, case: ManufacturedCase) -> ConvergenceRow:
    """Broken L2 errors of velocity, pressure, gradient and divergence."""
    mesh = result.mesh
    k = result.k
    proj = result.velocity.projected
    err = np.zeros(4)
    ref = np.zeros(4)
    for c in range(mesh.num_cells):
        coords = mesh.cell_coords(c)
        quad = polygon_quadrature(coords, 2 * (k + 3))
        pts, w = quad.points, quad.weights
        u_ex = case.velocity(pts)
        p_ex = case.pressure(pts)
        gp_ex = case.grad_pressure(pts)
        f_ex = case.forcing(pts)
        u_h = proj.evaluate(c, pts)
        p_h = result.pressure.evaluate(c, pts)
        gp_h = result.grad_pressure.evaluate(c, pts)
        div_h = proj.evaluate_div(c, pts)
        err[0] += float(w @ ((u_ex - u_h) ** 2).sum(axis=1))
        err[1] += float(w @ (p_ex - p_h) ** 2)
        err[2] += float(w @ ((gp_ex - gp_h) ** 2).sum(axis=1))
        err[3] += float(w @ (f_ex - div_h) ** 2)
        ref[0] += float(w @ (u_ex ** 2).sum(axis=1))
        ref[1] += float(w @ p_ex ** 2)
        ref[2] += float(w @ (gp_ex ** 2).sum(axis=1))
        ref[3] += float(w @ f_ex ** 2)
    err = np.sqrt(np.maximum(err, 0.0))
    ref = np.sqrt(np.maximum(ref, 0.0))
    return ConvergenceRow(
        n_elements=mesh.num_cells,
        error_u=err[0], error_p=err[1], error_grad_p=err[2], error_div=err[3],
        ref_u=ref[0], ref_p=ref[1], ref_grad_p=ref[2], ref_div=ref[3],
    )


def _order(e_prev: float, e_cur: float, ref: float):
    if e_cur <= _EXACT_REL * max(ref, 1e-300) or e_prev <= _EXACT_REL * max(ref, 1e-300):
        return EXACT_MARK
    return math.log2(e_prev / e_cur)


def compute_orders(rows: list) -> None:
    """Fill order fields from row 2 onward (one halving per level)."""
    for prev, cur in zip(rows, rows[1:]):
        cur.order_u = _order(prev.error_u, cur.error_u, cur.ref_u)
        cur.order_p = _order(prev.error_p, cur.error_p, cur.ref_p)
        cur.order_grad_p = _order(prev.error_grad_p, cur.error_grad_p, cur.ref_grad_p)
        cur.order_div = _order(prev.error_div, cur.error_div, cur.ref_div)


def generate_level_mesh(family: str, n: int, seed: int,
                        distortion: float = 0.2) -> polymesh.PolyMesh:
    if family == "uniform":
        return polymesh.generate_uniform_quads(n, n)
    if family == "distorted":
        return polymesh.generate_distorted_polygonal(n, n, seed=seed,
                                                     distortion=distortion)
    raise ValueError(f"unknown mesh family '{family}'")


def convergence_study(
    case: ManufacturedCase,
    k: int,
    family: str = "distorted",
    levels: int = 5,
    base_n: int = 4,
    seed: int = 2026,
    distortion: float = 0.2,
    solver_tol: float = 1e-12,
) -> list:
    """Run `levels` refinements (h halves each level) and tabulate errors.

    A solver failure aborts the study and the partial table is returned.
    """
    if levels < 3:
        raise ValueError("a convergence study needs at least 3 levels")
    rows = []
    for level in range(levels):
        n = base_n * 2 ** level
        mesh = generate_level_mesh(family, n, seed=seed + level,
                                   distortion=distortion)
        try:
            result = solve_case(mesh, case, k, solver_tol=solver_tol)
        except linsolve.SolverError:
            break
        rows.append(error_norms(result, case))
    compute_orders(rows)
    return rows


def rt_errors(result: SolveResult, case: ManufacturedCase) -> tuple:
    """(projection error, RT-type error) of the velocity in broken L2."""
    if result.velocity.rt is None:
        raise ValueError("RT-type field requires order k = 0")
    mesh = result.mesh
    err_proj = 0.0
    err_rt = 0.0
    for c in range(mesh.num_cells):
        coords = mesh.cell_coords(c)
        quad = polygon_quadrature(coords, 2 * (result.k + 3))
        pts, w = quad.points, quad.weights
        u_ex = case.velocity(pts)
        u_p = result.velocity.projected.evaluate(c, pts)
        u_rt = result.velocity.rt.evaluate(c, pts)
        err_proj += float(w @ ((u_ex - u_p) ** 2).sum(axis=1))
        err_rt += float(w @ ((u_ex - u_rt) ** 2).sum(axis=1))
    return math.sqrt(err_proj), math.sqrt(err_rt)


def rt_comparison_study(
    levels: int = 5,
    base_n: int = 4,
    seed: int = 2026,
    family: str = "distorted",
    distortion: float = 0.2,
    solver_tol: float = 1e-12,
) -> list:
    """Projected versus RT-type velocity errors for k = 0, K = 1."""
    case = get_case("bubble-unit")
    rows = []
    for level in range(levels):
        n = base_n * 2 ** level
        mesh = generate_level_mesh(family, n, seed=seed + level,
                                   distortion=distortion)
        try:
            result = solve_case(mesh, case, 0, solver_tol=solver_tol)
        except linsolve.SolverError:
            break
        e_proj, e_rt = rt_errors(result, case)
        rows.append(RtRow(n_elements=mesh.num_cells,
                          error_proj=e_proj, error_rt=e_rt))
    for prev, cur in zip(rows, rows[1:]):
        cur.order_proj = _order(prev.error_proj, cur.error_proj, 1.0)
        cur.order_rt = _order(prev.error_rt, cur.error_rt, 1.0)
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.5e}"


def write_convergence_csv(rows: list, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["nElements", "errorU", "orderU", "errorP", "orderP",
                         "errorGradP", "orderGradP", "errorDiv", "orderDiv"])
        for r in rows:
            writer.writerow([
                _fmt(r.n_elements),
                _fmt(r.error_u), _fmt(r.order_u),
                _fmt(r.error_p), _fmt(r.order_p),
                _fmt(r.error_grad_p), _fmt(r.order_grad_p),
                _fmt(r.error_div), _fmt(r.order_div),
            ])


def write_rt_csv(rows: list, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["nElements", "errorProjU", "orderProjU",
                         "errorRtU", "orderRtU"])
        for r in rows:
            writer.writerow([
                _fmt(r.n_elements),
                _fmt(r.error_proj), _fmt(r.order_proj),
                _fmt(r.error_rt), _fmt(r.order_rt),
            ])


def format_table(rows: list) -> str:
    """Human-readable rate table for terminal output."""
    if not rows:
        return "(no completed levels)"
    if isinstance(rows[0], RtRow):
        header = f"{'cells':>8} {'errProjU':>12} {'ord':>7} {'errRtU':>12} {'ord':>7}"
        lines = [header]
        for r in rows:
            lines.append(
                f"{r.n_elements:>8d} {r.error_proj:>12.5e} {_ord_str(r.order_proj):>7} "
                f"{r.error_rt:>12.5e} {_ord_str(r.order_rt):>7}"
            )
        return "\n".join(lines)
    header = (f"{'cells':>8} {'errorU':>12} {'ord':>7} {'errorP':>12} {'ord':>7} "
              f"{'errGradP':>12} {'ord':>7} {'errorDiv':>12} {'ord':>7}")
    lines = [header]
    for r in rows:
        lines.append(
            f"{r.n_elements:>8d} {r.error_u:>12.5e} {_ord_str(r.order_u):>7} "
            f"{r.error_p:>12.5e} {_ord_str(r.order_p):>7} "
            f"{r.error_grad_p:>12.5e} {_ord_str(r.order_grad_p):>7} "
            f"{r.error_div:>12.5e} {_ord_str(r.order_div):>7}"
        )
    return "\n".join(lines)


def _ord_str(order) -> str:
    if order is None:
        return "-"
    if isinstance(order, str):
        return order
    return f"{order:.3f}"
