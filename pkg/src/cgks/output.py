"""Deterministic file writers: legacy VTK fields, CSV line extracts, reports.

Every writer emits identical bytes for identical inputs; no timestamps or
machine details go into the files.
"""

from __future__ import annotations

import os

import numpy as np

from .gas import prim_from_cons

VTK_TRI, VTK_QUAD = 5, 9


def _fmt(v):
    return f"{v:.10e}"


def write_vtk(solver, path, point_data=True):
    """Write the current solution as an ASCII UNSTRUCTURED_GRID file.

    Cell data carries (rho, U, V, p, Mach) from the cell averages; point
    data, when requested, carries the same fields point-evaluated from the
    reconstruction polynomials at the mesh nodes.
    """
    from .cases import sample_points  # local import to avoid a cycle

    mesh = solver.mesh
    lines = [
        "# vtk DataFile Version 3.0",
        "cgks solution",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    for x, y in mesh.nodes:
        lines.append(f"{_fmt(x)} {_fmt(y)} 0.0000000000e+00")

    nv = mesh.cell_nv
    lines.append(f"CELLS {mesh.n_cells} {int(nv.sum()) + mesh.n_cells}")
    for i in range(mesh.n_cells):
        verts = " ".join(str(v) for v in mesh.cell_nodes[i, : nv[i]])
        lines.append(f"{nv[i]} {verts}")
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines.extend(str(VTK_TRI if k == 3 else VTK_QUAD) for k in nv)

    def scalar_block(name, vals):
        out = [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out.extend(_fmt(v) for v in vals)
        return out

    def field_columns(w):
        q = prim_from_cons(w, solver.model, check=False)
        rho, u, v = q[:, 0], q[:, 1], q[:, 2]
        p = rho / (2.0 * q[:, 3])
        mach = np.sqrt((u * u + v * v) * rho / (solver.model.gamma * p))
        return [("rho", rho), ("U", u), ("V", v), ("p", p), ("Mach", mach)]

    lines.append(f"CELL_DATA {mesh.n_cells}")
    for name, vals in field_columns(solver.w):
        lines.extend(scalar_block(name, vals))

    if point_data:
        wn = sample_points(solver, mesh.nodes)
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, vals in field_columns(wn):
            lines.extend(scalar_block(name, vals))

    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_line_csv(points, prim, path):
    """CSV of line samples: x, y, rho, u, v, p; one row per point."""
    points = np.asarray(points)
    prim = np.asarray(prim)
    with open(path, "w") as fh:
        fh.write("x,y,rho,u,v,p\n")
        for (x, y), (rho, u, v, p) in zip(points, prim):
            fh.write(f"{x:.17g},{y:.17g},{rho:.17g},{u:.17g},{v:.17g},{p:.17g}\n")


def write_report(rows, txt_path, csv_path=None, title=None):
    """Write tabular results as aligned plain text and optionally as CSV.

    rows is a list of dicts sharing the same keys; blank cells are allowed
    (e.g. no order on the coarsest mesh).
    """
    if not rows:
        raise ValueError("empty report")
    cols = list(rows[0].keys())

    def cell(r, c):
        v = r.get(c, "")
        if isinstance(v, float):
            return f"{v:.6e}"
        return str(v)

    table = [[cell(r, c) for c in cols] for r in rows]
    widths = [max(len(c), *(len(t[i]) for t in table)) for i, c in enumerate(cols)]
    with open(txt_path, "w") as fh:
        if title:
            fh.write(title + "\n")
        fh.write("  ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip() + "\n")
        for t in table:
            fh.write("  ".join(v.ljust(w) for v, w in zip(t, widths)).rstrip() + "\n")
    if csv_path:
        with open(csv_path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for r in rows:
                fh.write(",".join(cell(r, c) for c in cols) + "\n")


def validate_vtk(path):
    """Structural check of a legacy VTK file; returns (n_points, n_cells).

    Raises ValueError when section counts disagree with their headers.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("# vtk DataFile"):
        raise ValueError("missing VTK header")
    idx = {ln.split()[0]: i for i, ln in enumerate(lines) if ln[:1].isalpha()}
    for key in ("DATASET", "POINTS", "CELLS", "CELL_TYPES"):
        if key not in idx:
            raise ValueError(f"missing {key} section")
    n_pts = int(lines[idx["POINTS"]].split()[1])
    i = idx["POINTS"] + 1
    for k in range(n_pts):
        if len(lines[i + k].split()) != 3:
            raise ValueError("bad point row")
    n_cells, size = (int(v) for v in lines[idx["CELLS"]].split()[1:])
    total = 0
    for k in range(n_cells):
        row = lines[idx["CELLS"]] and lines[idx["CELLS"] + 1 + k].split()
        if int(row[0]) != len(row) - 1:
            raise ValueError("bad cell row")
        total += len(row)
    if total != size:
        raise ValueError("CELLS size mismatch")
    if int(lines[idx["CELL_TYPES"]].split()[1]) != n_cells:
        raise ValueError("CELL_TYPES count mismatch")
    for key, count in (("CELL_DATA", n_cells), ("POINT_DATA", n_pts)):
        if key in idx:
            if int(lines[idx[key]].split()[1]) != count:
                raise ValueError(f"{key} count mismatch")
    return n_pts, n_cells


def ensure_dir(path):
    if path and not os.path.isdir(path):
        os.makedirs(path, exist_ok=True)
    return path
