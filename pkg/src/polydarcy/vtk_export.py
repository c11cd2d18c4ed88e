"""Legacy ASCII VTK export of a solved case.

Writes an unstructured grid of polygon cells with cell-data arrays sampled
at cell centroids: the projected velocity, its divergence, the RT-type
velocity when available (k = 0), and the projected pressure.
"""

from __future__ import annotations

import numpy as np

from .study import SolveResult


def export_vtk(result: SolveResult, path: str) -> None:
    mesh = result.mesh
    nc = mesh.num_cells
    velocity = np.zeros((nc, 2))
    div_u = np.zeros(nc)
    pressure = np.zeros(nc)
    rt = np.zeros((nc, 2)) if result.velocity.rt is not None else None
    for c in range(nc):
        center = result.pressure.centers[c][None, :]
        velocity[c] = result.velocity.projected.evaluate(c, center)[0]
        div_u[c] = result.velocity.projected.evaluate_div(c, center)[0]
        pressure[c] = result.pressure.evaluate(c, center)[0]
        if rt is not None:
            rt[c] = result.velocity.rt.evaluate(c, center)[0]

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("polydarcy fields\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.num_vertices} double\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.16e} {y:.16e} 0.0\n")
        total = sum(len(loop) + 1 for loop in mesh.cells)
        fh.write(f"CELLS {nc} {total}\n")
        for loop in mesh.cells:
            fh.write(f"{len(loop)} " + " ".join(str(int(v)) for v in loop) + "\n")
        fh.write(f"CELL_TYPES {nc}\n")
        for _ in range(nc):
            fh.write("7\n")  # VTK_POLYGON
        fh.write(f"CELL_DATA {nc}\n")
        fh.write("SCALARS pressure double 1\nLOOKUP_TABLE default\n")
        for v in pressure:
            fh.write(f"{v:.16e}\n")
        fh.write("SCALARS div_velocity double 1\nLOOKUP_TABLE default\n")
        for v in div_u:
            fh.write(f"{v:.16e}\n")
        fh.write("VECTORS velocity double\n")
        for vx, vy in velocity:
            fh.write(f"{vx:.16e} {vy:.16e} 0.0\n")
        if rt is not None:
            fh.write("VECTORS rt_velocity double\n")
            for vx, vy in rt:
                fh.write(f"{vx:.16e} {vy:.16e} 0.0\n")
