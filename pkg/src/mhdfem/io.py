"""Ledger CSV and VTK legacy snapshot output."""

from __future__ import annotations

import numpy as np

from . import assembly, fem_core


def write_ledger_csv(ledger, path):
    with open(path, "w") as fh:
        fh.write(ledger.to_csv())


def write_vtk(cx, state, path, title="mhdfem snapshot"):
    """Legacy ASCII UNSTRUCTURED_GRID snapshot.

    Velocity (sampled at vertices) and pressure go out as point data;
    the magnetic and electric fields, evaluated at cell barycenters, as
    cell data.
    """
    mesh = cx.mesh
    ctx = assembly.get_context(cx)
    nv, nt = mesh.num_vertices, mesh.num_tets

    # vertex values of the velocity are the first nv vector coefficients
    u_pts = state.u.reshape(-1, 3)[:nv]

    bary = np.full((1, 4), 0.25)
    rt = fem_core._rt0_values(bary, ctx.grads)
    nd = fem_core._nd0_values(bary, ctx.grads)
    b_cells = np.einsum("tjqd,tj->td", rt, state.B[mesh.tet2face])
    e_cells = np.einsum("tjqd,tj->td", nd, state.E[mesh.tet2edge])

    lines = ["# vtk DataFile Version 2.0", title, "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    lines += [" ".join(f"{c:.17g}" for c in p) for p in mesh.vertices]
    lines.append(f"CELLS {nt} {5 * nt}")
    lines += ["4 " + " ".join(str(i) for i in tet) for tet in mesh.tets]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["10"] * nt

    lines.append(f"POINT_DATA {nv}")
    lines.append("VECTORS velocity double")
    lines += [" ".join(f"{c:.17g}" for c in v) for v in u_pts]
    lines.append("SCALARS pressure double")
    lines.append("LOOKUP_TABLE default")
    lines += [f"{v:.17g}" for v in state.p]

    lines.append(f"CELL_DATA {nt}")
    lines.append("VECTORS magnetic_field double")
    lines += [" ".join(f"{c:.17g}" for c in v) for v in b_cells]
    lines.append("VECTORS electric_field double")
    lines += [" ".join(f"{c:.17g}" for c in v) for v in e_cells]

    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
