"""Deterministic mesh generators for the benchmark domains.

Boundary markers are small positive ints with per-generator meaning;
rectangle-based generators use LEFT/RIGHT/BOTTOM/TOP, the others document
their own set.  All generators are deterministic for fixed arguments
(jitter uses a seeded generator, triangulation is qhull on a fixed point
set).
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import Delaunay

from .errors import MeshError
from .mesh import Mesh, build_mesh

LEFT, RIGHT, BOTTOM, TOP = 1, 2, 3, 4
WALL_EXTRA = 5  # plate: no-slip section of the bottom


def _edge_marker_rect(x0, x1, y0, y1):
    def fn(centers, normals):
        m = np.zeros(centers.shape[0], dtype=np.int64)
        tol = 1e-9 * max(x1 - x0, y1 - y0)
        m[np.abs(centers[:, 0] - x0) < tol] = LEFT
        m[np.abs(centers[:, 0] - x1) < tol] = RIGHT
        m[np.abs(centers[:, 1] - y0) < tol] = BOTTOM
        m[np.abs(centers[:, 1] - y1) < tol] = TOP
        if np.any(m == 0):
            raise MeshError("boundary face off the rectangle edges")
        return m

    return fn


def _grid_to_tris(nx, ny, diag):
    """Split an (nx x ny)-quad grid into triangles; diag picks the pattern."""
    cells = []
    for j in range(ny):
        for i in range(nx):
            bl = j * (nx + 1) + i
            br = bl + 1
            tl = bl + (nx + 1)
            tr = tl + 1
            if diag == "alt":
                d = (i + j) % 2
            elif diag == "sym_y":
                jm = ny - 1 - j
                d = (i + j) % 2 if j < jm else 1 - (i + jm) % 2
            else:
                d = 0
            if d == 0:
                cells.append((bl, br, tr))
                cells.append((bl, tr, tl))
            else:
                cells.append((bl, br, tl))
                cells.append((br, tr, tl))
    return cells


def rect_tri_mesh(x0, x1, y0, y1, nx=None, ny=None, h=None, jitter=0.0, seed=0,
                  diag="alt", xs=None, ys=None) -> Mesh:
    """Triangulated rectangle from a tensor grid.

    Pass h for a uniform grid, nx/ny for explicit counts, or xs/ys for
    graded point sets.  jitter displaces interior nodes by that fraction
    of the local spacing (keep below ~0.3).
    """
    if xs is None:
        if nx is None:
            nx = max(2, round((x1 - x0) / h))
        xs = np.linspace(x0, x1, nx + 1)
    if ys is None:
        if ny is None:
            ny = max(2, round((y1 - y0) / h))
        ys = np.linspace(y0, y1, ny + 1)
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    nx, ny = xs.size - 1, ys.size - 1
    X, Y = np.meshgrid(xs, ys)
    if jitter:
        rng = np.random.default_rng(seed)
        dx = np.minimum(np.diff(xs)[:-1], np.diff(xs)[1:])
        dy = np.minimum(np.diff(ys)[:-1], np.diff(ys)[1:])
        X[1:-1, 1:-1] += jitter * dx[None, :] * rng.uniform(-0.5, 0.5, (ny - 1, nx - 1))
        Y[1:-1, 1:-1] += jitter * dy[:, None] * rng.uniform(-0.5, 0.5, (ny - 1, nx - 1))
    nodes = np.stack([X.ravel(), Y.ravel()], axis=-1)
    mesh = build_mesh(nodes, _grid_to_tris(nx, ny, diag))
    mesh.assign_markers(_edge_marker_rect(x0, x1, y0, y1))
    return mesh


def rect_quad_mesh(x0, x1, y0, y1, nx=None, ny=None, h=None, xs=None, ys=None) -> Mesh:
    """Axis-aligned rectangle mesh of quads (for the rectangular variant)."""
    if xs is None:
        nx = max(2, round((x1 - x0) / h)) if nx is None else nx
        xs = np.linspace(x0, x1, nx + 1)
    if ys is None:
        ny = max(2, round((y1 - y0) / h)) if ny is None else ny
        ys = np.linspace(y0, y1, ny + 1)
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    nx, ny = xs.size - 1, ys.size - 1
    X, Y = np.meshgrid(xs, ys)
    nodes = np.stack([X.ravel(), Y.ravel()], axis=-1)
    cells = []
    for j in range(ny):
        for i in range(nx):
            bl = j * (nx + 1) + i
            cells.append((bl, bl + 1, bl + nx + 2, bl + nx + 1))
    mesh = build_mesh(nodes, cells)
    mesh.assign_markers(_edge_marker_rect(x0, x1, y0, y1))
    return mesh


def hex_tri_mesh(x0, x1, y0, y1, h, jitter=0.0, seed=0) -> Mesh:
    """Near-equilateral Delaunay triangulation of a rectangle.

    Boundary points at spacing h, interior points on a hexagonal lattice
    (row offset h/2, row spacing h*sqrt(3)/2), optionally jittered.  The
    triangle quality is isotropic, unlike the split-quad generator whose
    lattice directions bias under-resolved flow features.
    """
    pts = []
    for xa, ya, xb, yb in (
        (x0, y0, x1, y0),
        (x1, y0, x1, y1),
        (x1, y1, x0, y1),
        (x0, y1, x0, y0),
    ):
        n = max(1, round(np.hypot(xb - xa, yb - ya) / h))
        for s in np.arange(n) / n:
            pts.append([xa + s * (xb - xa), ya + s * (yb - ya)])
    n_bnd = len(pts)
    dy = h * np.sqrt(3.0) / 2.0
    j, y = 0, y0 + dy
    while y < y1 - 0.3 * dy:
        x = x0 + (0.5 * h if j % 2 else h)
        while x < x1 - 0.3 * h:
            pts.append([x, y])
            x += h
        y += dy
        j += 1
    pts = np.asarray(pts)
    if jitter:
        rng = np.random.default_rng(seed)
        pts[n_bnd:] += jitter * h * rng.uniform(-0.5, 0.5, (pts.shape[0] - n_bnd, 2))
    tri = Delaunay(pts)
    cells = []
    for simplex in tri.simplices:
        a, b, c = pts[simplex]
        if (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]) < 0:
            simplex = simplex[::-1]
        cells.append(tuple(simplex))
    mesh = build_mesh(pts, cells)
    mesh.assign_markers(_edge_marker_rect(x0, x1, y0, y1))
    return mesh


def march_points(start, end, h_at, ratio=1.2, h_cap=np.inf):
    """1D points from start to end, spacing h_at(dist from start) capped
    geometrically, rescaled so the last point lands exactly on end."""
    span = end - start
    sgn = 1.0 if span > 0 else -1.0
    length = abs(span)
    pts = [0.0]
    s_prev = None
    while pts[-1] < length:
        s = min(h_at(pts[-1]), h_cap)
        if s_prev is not None:
            s = min(s, ratio * s_prev)
        s_prev = s
        pts.append(pts[-1] + s)
    pts = np.asarray(pts)
    if pts.size < 3:
        pts = np.array([0.0, 0.5 * length, length])
    pts *= length / pts[-1]
    return start + sgn * pts


def graded_wall_points(a, b, h_wall, h_inner, ratio=1.2):
    """Symmetric 1D grading: h_wall at both ends, h_inner in the middle."""
    mid = 0.5 * (a + b)
    half = march_points(a, mid, lambda d: max(h_wall, h_inner * min(1.0, d / (b - a) * 8)), ratio, h_inner)
    lo = half
    hi = (a + b) - half[::-1]
    return np.concatenate([lo, hi[1:]])


def cavity_mesh(h_inner=1.0 / 25.0, h_wall=1.0 / 50.0) -> Mesh:
    pts = graded_wall_points(0.0, 1.0, h_wall, h_inner)
    return rect_tri_mesh(0.0, 1.0, 0.0, 1.0, xs=pts, ys=pts, diag="alt")


def cylinder_half_mesh(h, r_in=0.5, r_out=3.0) -> Mesh:
    """Half annulus upstream of a cylinder; markers 1=wall, 2=outer, 3=cuts."""
    n_r = max(6, round((r_out - r_in) / h))
    n_t = max(12, round(0.5 * np.pi * (r_in + r_out) / h))
    rs = np.linspace(r_in, r_out, n_r + 1)
    ts = np.linspace(0.5 * np.pi, 1.5 * np.pi, n_t + 1)
    R, T = np.meshgrid(rs, ts, indexing="ij")
    nodes = np.stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()], axis=-1)
    cells = []
    for i in range(n_r):
        for j in range(n_t):
            a = i * (n_t + 1) + j
            b = a + (n_t + 1)
            if (i + j) % 2 == 0:
                cells.append((a, b, b + 1))
                cells.append((a, b + 1, a + 1))
            else:
                cells.append((a, b, a + 1))
                cells.append((b, b + 1, a + 1))
    mesh = build_mesh(nodes, cells)

    def marker(centers, normals):
        r = np.hypot(centers[:, 0], centers[:, 1])
        m = np.full(centers.shape[0], 3, dtype=np.int64)
        m[r < r_in + 0.25 * (r_out - r_in) / n_r] = 1
        m[r > r_out - 0.25 * (r_out - r_in) / n_r] = 2
        return m

    mesh.assign_markers(marker)
    return mesh


def step_mesh(h, refine=3.0) -> Mesh:
    """Forward step channel [0,3]x[0,1], step corner at (0.6, 0.2).

    Tensor bands around the corner are refined by the given factor.
    Markers: 1=left inflow, 2=right outflow, 3=solid walls, 4=top wall.
    """

    def spacing(d):
        return h * min(1.0, max(1.0 / refine, d / (8.0 * h)))

    xs = np.concatenate(
        [march_points(0.6, 0.0, spacing)[::-1], march_points(0.6, 3.0, spacing)[1:]]
    )
    ys = np.concatenate(
        [march_points(0.2, 0.0, spacing)[::-1], march_points(0.2, 1.0, spacing)[1:]]
    )
    nx, ny = xs.size - 1, ys.size - 1
    X, Y = np.meshgrid(xs, ys)
    nodes = np.stack([X.ravel(), Y.ravel()], axis=-1)
    ic = int(np.argmin(np.abs(xs - 0.6)))
    jc = int(np.argmin(np.abs(ys - 0.2)))
    cells = []
    for j in range(ny):
        for i in range(nx):
            if i >= ic and j < jc:
                continue
            bl = j * (nx + 1) + i
            br, tl, tr = bl + 1, bl + nx + 1, bl + nx + 2
            if (i + j) % 2 == 0:
                cells.append((bl, br, tr))
                cells.append((bl, tr, tl))
            else:
                cells.append((bl, br, tl))
                cells.append((br, tr, tl))
    mesh = build_mesh(nodes, cells)

    def marker(centers, normals):
        m = np.full(centers.shape[0], 3, dtype=np.int64)
        tol = 1e-9
        m[np.abs(centers[:, 0] - 0.0) < tol] = LEFT
        m[np.abs(centers[:, 0] - 3.0) < tol] = RIGHT
        m[np.abs(centers[:, 1] - 1.0) < tol] = TOP
        return m

    mesh.assign_markers(marker)
    return mesh


WEDGE_ANGLE = np.deg2rad(30.0)
WEDGE_X0, WEDGE_X1, WEDGE_H = -0.2, 2.3, 1.4


def wedge_mesh(h) -> Mesh:
    """30-degree ramp channel for the Mach 10 reflection case.

    Convex pentagon triangulated by Delaunay over boundary points at
    spacing h plus a hexagonal interior lattice.  Markers: 1=left inflow,
    2=right outflow, 3=bottom wall and ramp, 4=top.
    """
    t = np.tan(WEDGE_ANGLE)
    y1 = WEDGE_X1 * t
    poly = np.array(
        [
            [WEDGE_X0, 0.0],
            [0.0, 0.0],
            [WEDGE_X1, y1],
            [WEDGE_X1, WEDGE_H],
            [WEDGE_X0, WEDGE_H],
        ]
    )
    pts = []
    for k in range(len(poly)):
        a, b = poly[k], poly[(k + 1) % len(poly)]
        n = max(1, round(np.hypot(*(b - a)) / h))
        for s in np.arange(n) / n:
            pts.append(a + s * (b - a))
    edges = [(poly[k], poly[(k + 1) % len(poly)]) for k in range(len(poly))]

    def interior_margin(p):
        dmin = np.inf
        for a, b in edges:
            e = b - a
            nrm = np.array([e[1], -e[0]]) / np.hypot(*e)
            dmin = min(dmin, -np.dot(p - a, nrm))  # CCW polygon: inside is left
        return dmin

    dy = h * np.sqrt(3.0) / 2.0
    j = 0
    y = dy
    while y < WEDGE_H:
        x = WEDGE_X0 + (0.5 * h if j % 2 else h)
        while x < WEDGE_X1:
            p = np.array([x, y])
            if interior_margin(p) > 0.65 * h:
                pts.append(p)
            x += h
        y += dy
        j += 1
    pts = np.asarray(pts)
    tri = Delaunay(pts)
    cells = []
    for simplex in tri.simplices:
        a, b, c = pts[simplex]
        if (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]) < 0:
            simplex = simplex[::-1]
        cells.append(tuple(simplex))
    mesh = build_mesh(pts, cells)

    def marker(centers, normals):
        m = np.full(centers.shape[0], 3, dtype=np.int64)
        tol = 1e-9
        m[np.abs(centers[:, 0] - WEDGE_X0) < tol] = LEFT
        m[np.abs(centers[:, 0] - WEDGE_X1) < tol] = RIGHT
        m[np.abs(centers[:, 1] - WEDGE_H) < tol] = TOP
        return m

    mesh.assign_markers(marker)
    return mesh


def plate_mesh() -> Mesh:
    """Laminar flat-plate domain; plate occupies y=0, x>0.

    Markers: 1=inflow, 2=outflow, 3=upstream symmetry, 4=far field,
    5=no-slip plate.
    """
    up = march_points(0.0, -30.0, lambda d: 1.0 + 0.15 * d)
    down = march_points(0.0, 100.0, lambda d: 1.0 + 0.08 * d, h_cap=4.0)
    xs = np.concatenate([up[::-1], down[1:]])
    ys = march_points(0.0, 40.0, lambda d: 0.15 + 0.3 * d, h_cap=4.0)
    mesh = rect_tri_mesh(-30.0, 100.0, 0.0, 40.0, xs=xs, ys=ys)

    def marker(centers, normals):
        m = np.zeros(centers.shape[0], dtype=np.int64)
        tol = 1e-9
        m[np.abs(centers[:, 0] + 30.0) < tol] = LEFT
        m[np.abs(centers[:, 0] - 100.0) < tol] = RIGHT
        m[np.abs(centers[:, 1] - 40.0) < tol] = TOP
        bottom = np.abs(centers[:, 1]) < tol
        m[bottom & (centers[:, 0] < 0.0)] = BOTTOM
        m[bottom & (centers[:, 0] >= 0.0)] = WALL_EXTRA
        return m

    mesh.assign_markers(marker)
    return mesh


def generate_case_mesh(case_id, target_h, **kw) -> Mesh:
    """Build the named benchmark domain at characteristic size target_h.

    Known ids: rect_domain (kw x0/x1/y0/y1, default the shock-tube strip),
    wedge_dmr, step, cylinder_half, flat_plate (fixed grading, target_h
    unused), cavity (target_h inner, target_h/2 near the walls).
    """
    if case_id == "rect_domain":
        x0 = kw.get("x0", 0.0)
        x1 = kw.get("x1", 1.0)
        y0 = kw.get("y0", 0.0)
        y1 = kw.get("y1", 0.5)
        return rect_tri_mesh(x0, x1, y0, y1, h=target_h)
    if case_id == "wedge_dmr":
        return wedge_mesh(target_h)
    if case_id == "step":
        return step_mesh(target_h, **kw)
    if case_id == "cylinder_half":
        return cylinder_half_mesh(target_h, **kw)
    if case_id == "flat_plate":
        return plate_mesh()
    if case_id == "cavity":
        return cavity_mesh(h_inner=target_h, h_wall=0.5 * target_h)
    raise MeshError(f"unknown mesh id '{case_id}'")
