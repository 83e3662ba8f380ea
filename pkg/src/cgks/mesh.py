"""Unstructured 2D mesh: connectivity, face frames, exact basis moments.

Cells are triangles or convex quadrilaterals with counter-clockwise
vertex order.  Faces are oriented edges; the unit normal points out of
the owner cell (face_cells[:, 0]).  Per-cell basis moments are the cell
means of (x - xc)^m (y - yc)^n for the five quadratic monomials, taken
about the area centroid so the first moments vanish; they are computed
with an edge-midpoint rule on a centroid fan, exact for quadratics.
"""

from __future__ import annotations

import numpy as np

from .errors import MeshError

MAX_NV = 4


class Mesh:
    """Immutable mesh built by build_mesh; all fields are numpy arrays."""

    def __init__(self, nodes, cell_nodes, cell_nv):
        self.nodes = nodes
        self.cell_nodes = cell_nodes
        self.cell_nv = cell_nv
        self._build_cells()
        self._build_faces()
        self._check_invariants()

    # -- construction ---------------------------------------------------

    def _build_cells(self):
        nc = self.cell_nodes.shape[0]
        pts = self.nodes[np.where(self.cell_nodes >= 0, self.cell_nodes, 0)]
        nv = self.cell_nv

        area = np.zeros(nc)
        cx = np.zeros(nc)
        cy = np.zeros(nc)
        for k in range(MAX_NV):
            a = pts[:, k]
            b = np.where((k + 1 < nv)[:, None], pts[:, (k + 1) % MAX_NV], pts[:, 0])
            use = (k < nv).astype(float)
            cross = a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]
            area += 0.5 * use * cross
            cx += use * cross * (a[:, 0] + b[:, 0])
            cy += use * cross * (a[:, 1] + b[:, 1])
        if np.any(area <= 0.0):
            bad = int(np.argmax(area <= 0.0))
            raise MeshError(f"cell {bad} degenerate or not counter-clockwise")
        self.cell_area = area
        self.cell_centroid = np.stack([cx, cy], axis=-1) / (6.0 * area[:, None])

        # second moments about the centroid: centroid fan, midpoint rule
        m = np.zeros((nc, 3))
        c = self.cell_centroid
        for k in range(MAX_NV):
            a = pts[:, k] - c
            b = np.where((k + 1 < nv)[:, None], pts[:, (k + 1) % MAX_NV], pts[:, 0]) - c
            use = (k < nv).astype(float)
            tri_a = 0.5 * (a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1])
            w = use * tri_a / 3.0
            for pt in (0.5 * a, 0.5 * (a + b), 0.5 * b):
                m[:, 0] += w * pt[:, 0] * pt[:, 0]
                m[:, 1] += w * pt[:, 0] * pt[:, 1]
                m[:, 2] += w * pt[:, 1] * pt[:, 1]
        self.cell_moments = m / self.cell_area[:, None]

        perim = np.zeros(nc)
        for k in range(MAX_NV):
            a = pts[:, k]
            b = np.where((k + 1 < nv)[:, None], pts[:, (k + 1) % MAX_NV], pts[:, 0])
            perim += (k < nv) * np.hypot(*(b - a).T)
        self.cell_h = 4.0 * self.cell_area / perim

    def _build_faces(self):
        nc = self.cell_nodes.shape[0]
        edge_map: dict = {}
        face_nodes = []
        face_cells = []
        cell_faces = -np.ones((nc, MAX_NV), dtype=np.int64)
        cell_face_sign = np.zeros((nc, MAX_NV))

        for i in range(nc):
            nv = int(self.cell_nv[i])
            verts = self.cell_nodes[i, :nv]
            for k in range(nv):
                a, b = int(verts[k]), int(verts[(k + 1) % nv])
                key = (a, b) if a < b else (b, a)
                f = edge_map.get(key)
                if f is None:
                    f = len(face_nodes)
                    edge_map[key] = f
                    face_nodes.append((a, b))
                    face_cells.append([i, -1])
                    cell_face_sign[i, k] = 1.0
                else:
                    if face_cells[f][1] != -1:
                        raise MeshError(f"edge {key} shared by more than two cells")
                    fa, fb = face_nodes[f]
                    if (fa, fb) != (b, a):
                        raise MeshError(f"cells across edge {key} have the same orientation")
                    face_cells[f][1] = i
                    cell_face_sign[i, k] = -1.0
                cell_faces[i, k] = f

        self.face_nodes = np.asarray(face_nodes, dtype=np.int64)
        self.face_cells = np.asarray(face_cells, dtype=np.int64)
        self.cell_faces = cell_faces
        self.cell_face_sign = cell_face_sign

        a = self.nodes[self.face_nodes[:, 0]]
        b = self.nodes[self.face_nodes[:, 1]]
        self.face_center = 0.5 * (a + b)
        dxy = b - a
        self.face_len = np.hypot(dxy[:, 0], dxy[:, 1])
        if np.any(self.face_len <= 0.0):
            raise MeshError("zero-length face")
        # owner vertex order is counter-clockwise, so (dy, -dx) points out
        self.face_normal = np.stack([dxy[:, 1], -dxy[:, 0]], axis=-1) / self.face_len[:, None]
        self.face_marker = np.zeros(self.face_nodes.shape[0], dtype=np.int64)
        self.interior_faces = np.flatnonzero(self.face_cells[:, 1] >= 0)
        self.boundary_faces = np.flatnonzero(self.face_cells[:, 1] < 0)

    def _check_invariants(self):
        nc = self.n_cells
        resid = np.zeros((nc, 2))
        for k in range(MAX_NV):
            sel = self.cell_faces[:, k] >= 0
            f = np.where(sel, self.cell_faces[:, k], 0)
            contrib = (
                self.face_normal[f]
                * self.face_len[f][:, None]
                * self.cell_face_sign[:, k][:, None]
            )
            resid += np.where(sel[:, None], contrib, 0.0)
        scale = np.sqrt(self.cell_area)
        if np.max(np.abs(resid) / scale[:, None]) > 1e-12:
            raise MeshError("closed-polygon identity violated")
        mom = self.cell_moments
        if np.any(mom[:, 0] < 0) or np.any(mom[:, 2] < 0):
            raise MeshError("negative second basis moment")
        if np.any(mom[:, 1] ** 2 > mom[:, 0] * mom[:, 2] * (1 + 1e-12)):
            raise MeshError("basis moments violate the Cauchy-Schwarz bound")

    # -- queries ----------------------------------------------------------

    @property
    def n_cells(self) -> int:
        return self.cell_nodes.shape[0]

    @property
    def n_faces(self) -> int:
        return self.face_nodes.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def assign_markers(self, fn) -> None:
        """Set boundary markers from fn(centers (NB,2), normals (NB,2)) -> int array."""
        bf = self.boundary_faces
        m = np.asarray(fn(self.face_center[bf], self.face_normal[bf]), dtype=np.int64)
        if m.shape != bf.shape or np.any(m <= 0):
            raise MeshError("marker function must return positive ints per boundary face")
        self.face_marker[bf] = m

    # -- io ----------------------------------------------------------------

    def save(self, path) -> None:
        bf = self.boundary_faces
        with open(path, "w") as fh:
            fh.write("cgks-mesh 1\n")
            fh.write(f"{self.n_nodes} {self.n_cells} {bf.size}\n")
            for x, y in self.nodes:
                fh.write(f"{float(x)!r} {float(y)!r}\n")
            for i in range(self.n_cells):
                nv = int(self.cell_nv[i])
                fh.write(" ".join(str(v) for v in [nv, *self.cell_nodes[i, :nv]]) + "\n")
            for f in bf:
                a, b = self.face_nodes[f]
                fh.write(f"{a} {b} {self.face_marker[f]}\n")

    @classmethod
    def load(cls, path) -> "Mesh":
        with open(path) as fh:
            header = fh.readline().split()
            if header[:1] != ["cgks-mesh"]:
                raise MeshError(f"{path}: not a mesh file")
            nn, nc, nb = (int(v) for v in fh.readline().split())
            nodes = np.array(
                [[float(v) for v in fh.readline().split()] for _ in range(nn)]
            )
            cell_nodes = -np.ones((nc, MAX_NV), dtype=np.int64)
            cell_nv = np.zeros(nc, dtype=np.int64)
            for i in range(nc):
                row = [int(v) for v in fh.readline().split()]
                cell_nv[i] = row[0]
                cell_nodes[i, : row[0]] = row[1:]
            mesh = cls(nodes, cell_nodes, cell_nv)
            marker_of_edge = {}
            for _ in range(nb):
                a, b, mk = (int(v) for v in fh.readline().split())
                marker_of_edge[(min(a, b), max(a, b))] = mk
        for f in mesh.boundary_faces:
            a, b = (int(v) for v in mesh.face_nodes[f])
            key = (min(a, b), max(a, b))
            if key not in marker_of_edge:
                raise MeshError(f"boundary edge {key} missing a marker line")
            mesh.face_marker[f] = marker_of_edge[key]
        return mesh


def build_mesh(nodes, cells) -> Mesh:
    """Build a mesh from vertex coordinates and CCW cell vertex lists."""
    nodes = np.asarray(nodes, dtype=float)
    if not np.all(np.isfinite(nodes)):
        raise MeshError("non-finite vertex coordinates")
    nc = len(cells)
    cell_nodes = -np.ones((nc, MAX_NV), dtype=np.int64)
    cell_nv = np.zeros(nc, dtype=np.int64)
    for i, verts in enumerate(cells):
        nv = len(verts)
        if nv not in (3, 4):
            raise MeshError(f"cell {i} has {nv} vertices; only 3 or 4 supported")
        cell_nodes[i, :nv] = verts
        cell_nv[i] = nv
    return Mesh(nodes, cell_nodes, cell_nv)


def face_angles(mesh: Mesh) -> tuple:
    """cos/sin of each face normal's angle (the face-local frame)."""
    return mesh.face_normal[:, 0].copy(), mesh.face_normal[:, 1].copy()


def reflect_across_face(mesh: Mesh, faces: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Mirror points (..., 2) across the lines carrying the given faces."""
    n = mesh.face_normal[faces]
    c = mesh.face_center[faces]
    d = np.einsum("...k,...k->...", points - c, n)
    return points - 2.0 * d[..., None] * n
