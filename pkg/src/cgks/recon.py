"""Compact third-order weighted least-squares reconstruction.

Each cell carries a quadratic expansion about its centroid in the
zero-mean basis (x, y, (x^2 - <x^2>)/2, xy - <xy>, (y^2 - <y^2>)/2), so
the cell mean of the polynomial equals the stored average identically.
The data are the nv neighbor cell averages plus the evolved midpoint
values of the cell's own faces and the neighbors' outer faces (nv^2
points), weighted by w = 1/(s^2 + eps) with s the data jump per unit
distance from the centroid.

Faces are processed in their own local frame (x along the unit normal).
Smooth faces evaluate the side polynomials analytically.  In
characteristic mode the sides are rebuilt from eigenvector-projected
data, sampled on one-sided 3x3 grids with spacing d = |AB|/4 and
recovered by second-order differences.  Cells flagged by the jump
detector (or with a rank-deficient stencil) drop to a slope-limited
linear fallback.  The equilibrium interface state merges the two side
values by half-range moments at the centered 3x3 grid.

Boundary faces reconstruct the interior side normally; the exterior side
follows one of four algebraic recipes (parity mirror, fixed state,
copy-through, isothermal wall transform) prepared by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gas import (
    GasModel,
    cons_from_prim,
    is_valid_state,
    prim_from_cons,
    rotate_cons,
)
from .mesh import Mesh, reflect_across_face
from .moments import merge_half_states

PARITY, DIRICHLET, OUTFLOW, ISOTHERMAL = 0, 1, 2, 3

# derivative slot order shared with the flux kernel
DX, DY, DXX, DXY, DYY = 0, 1, 2, 3, 4

_GX_LEFT = np.array([-2.0, -1.0, 0.0])
_GX_RIGHT = np.array([0.0, 1.0, 2.0])
_GX_CENTER = np.array([-1.0, 0.0, 1.0])
_GY = np.array([-1.0, 0.0, 1.0])


@dataclass
class BoundaryData:
    """Per-boundary-face exterior-side recipes, in boundary_faces order.

    sign holds local-frame conserved-variable parities for PARITY faces;
    state holds the local-frame conserved DIRICHLET state; wall_ut and
    wall_temp feed the ISOTHERMAL transform (wall normal speed is zero).
    """

    code: np.ndarray
    sign: np.ndarray
    state: np.ndarray
    wall_ut: np.ndarray
    wall_temp: np.ndarray

    @classmethod
    def zeros(cls, nb: int) -> "BoundaryData":
        return cls(
            code=np.zeros(nb, dtype=np.int64),
            sign=np.ones((nb, 4)),
            state=np.zeros((nb, 4)),
            wall_ut=np.zeros(nb),
            wall_temp=np.ones(nb),
        )


@dataclass
class FaceRecon:
    """Face-local side states and derivatives ready for the flux kernel."""

    wl: np.ndarray
    dwl: np.ndarray
    wr: np.ndarray
    dwr: np.ndarray
    w0: np.ndarray
    dw0: np.ndarray
    flags: np.ndarray
    order: np.ndarray


def _rot_vec(v, c, s):
    return np.stack(
        [c * v[..., 0] + s * v[..., 1], -s * v[..., 0] + c * v[..., 1]], axis=-1
    )


def _rot_sym(m, c, s):
    xx, xy, yy = m[..., 0], m[..., 1], m[..., 2]
    return np.stack(
        [
            c * c * xx + 2.0 * c * s * xy + s * s * yy,
            -c * s * xx + (c * c - s * s) * xy + c * s * yy,
            s * s * xx - 2.0 * c * s * xy + c * c * yy,
        ],
        axis=-1,
    )


def characteristic_matrices(w_local: np.ndarray, model: GasModel):
    """Right eigenvectors R of the local normal-flux Jacobian and R^{-1}."""
    q = prim_from_cons(w_local, model)
    u, v, lam = q[:, 1], q[:, 2], q[:, 3]
    a = np.sqrt(model.gamma / (2.0 * lam))
    h = a * a / (model.gamma - 1.0) + 0.5 * (u * u + v * v)
    n = w_local.shape[0]
    r = np.zeros((n, 4, 4))
    r[:, 0, 0] = 1.0
    r[:, 1, 0] = u - a
    r[:, 2, 0] = v
    r[:, 3, 0] = h - u * a
    r[:, 0, 1] = 1.0
    r[:, 1, 1] = u
    r[:, 2, 1] = v
    r[:, 3, 1] = 0.5 * (u * u + v * v)
    r[:, 2, 2] = 1.0
    r[:, 3, 2] = v
    r[:, 0, 3] = 1.0
    r[:, 1, 3] = u + a
    r[:, 2, 3] = v
    r[:, 3, 3] = h + u * a
    return r, np.linalg.inv(r)


class ReconContext:
    """Precomputed stencil geometry plus the per-step reconstruction passes.

    Ghost cells mirror each boundary-face owner across the face line; the
    owner's other faces mirror with it.  Ghosts only supply stencil data
    (averages and point values filled by the caller each step).
    """

    def __init__(self, mesh: Mesh, model: GasModel, mode: str = "smooth",
                 detector: bool = False, c_detect: float = 5.0, eps: float = 1e-6):
        if mode not in ("smooth", "characteristic"):
            raise ValueError(f"unknown reconstruction mode {mode!r}")
        self.mesh = mesh
        self.model = model
        self.mode = mode
        self.detector = detector
        self.c_detect = c_detect
        self.eps = eps
        self._build()

    # -- static geometry --------------------------------------------------

    def _build(self):
        mesh = self.mesh
        nc, nf = mesh.n_cells, mesh.n_faces
        bf = mesh.boundary_faces
        nb = bf.size
        self.n_ghost = nb
        self.ghost_owner = mesh.face_cells[bf, 0]
        self.ghost_bface = bf
        bpos = -np.ones(nf, dtype=np.int64)
        bpos[bf] = np.arange(nb)
        self._bpos = bpos

        own = self.ghost_owner
        g_cent = reflect_across_face(mesh, bf, mesh.cell_centroid[own])
        n = mesh.face_normal[bf]
        hc = 1.0 - 2.0 * n[:, 0] * n[:, 0]
        hs = -2.0 * n[:, 0] * n[:, 1]
        # reflection H = [[hc, hs], [hs, -hc]]; moments map M -> H M H^T
        m = mesh.cell_moments[own]
        g_mom = np.stack(
            [
                hc * hc * m[:, 0] + 2.0 * hc * hs * m[:, 1] + hs * hs * m[:, 2],
                hc * hs * m[:, 0] - (hc * hc - hs * hs) * m[:, 1] - hs * hc * m[:, 2],
                hs * hs * m[:, 0] - 2.0 * hs * hc * m[:, 1] + hc * hc * m[:, 2],
            ],
            axis=-1,
        )
        self.ext_centroid = np.vstack([mesh.cell_centroid, g_cent])
        self.ext_moments = np.vstack([mesh.cell_moments, g_mom])

        # ghost faces: mirror the owner's remaining faces across bf
        gf_src, gf_b = [], []
        ghost_face_of = {}
        for gi in range(nb):
            i = own[gi]
            for k in range(int(mesh.cell_nv[i])):
                fk = int(mesh.cell_faces[i, k])
                if fk == bf[gi]:
                    continue
                ghost_face_of[(gi, fk)] = nf + len(gf_src)
                gf_src.append(fk)
                gf_b.append(gi)
        self.ghost_face_src = np.asarray(gf_src, dtype=np.int64)
        self.ghost_face_b = np.asarray(gf_b, dtype=np.int64)
        g_fc = reflect_across_face(
            mesh, bf[self.ghost_face_b], mesh.face_center[self.ghost_face_src]
        )
        self.ext_face_center = np.vstack([mesh.face_center, g_fc])

        nvmax = int(mesh.cell_nv.max())
        npts = nvmax * nvmax
        self.n_nbr, self.n_pts = nvmax, npts
        nbr_ext = np.tile(np.arange(nc)[:, None], (1, nvmax))
        nbr_mask = np.zeros((nc, nvmax))
        pts_ext = np.zeros((nc, npts), dtype=np.int64)
        pts_mask = np.zeros((nc, npts))
        for i in range(nc):
            nv = int(mesh.cell_nv[i])
            col = 0
            for k in range(nv):
                pts_ext[i, col] = mesh.cell_faces[i, k]
                pts_mask[i, col] = 1.0
                col += 1
            for k in range(nv):
                f = int(mesh.cell_faces[i, k])
                o, nn = mesh.face_cells[f]
                j = nn if o == i else o
                if j >= 0:
                    nbr_ext[i, k] = j
                    nbr_mask[i, k] = 1.0
                    for kk in range(int(mesh.cell_nv[j])):
                        fj = int(mesh.cell_faces[j, kk])
                        if fj != f:
                            pts_ext[i, col] = fj
                            pts_mask[i, col] = 1.0
                            col += 1
                else:
                    gi = bpos[f]
                    nbr_ext[i, k] = nc + gi
                    nbr_mask[i, k] = 1.0
                    for kk in range(nv):
                        fk = int(mesh.cell_faces[i, kk])
                        if fk != f:
                            pts_ext[i, col] = ghost_face_of[(gi, fk)]
                            pts_mask[i, col] = 1.0
                            col += 1
        self.nbr_ext = nbr_ext
        self.nbr_mask = nbr_mask
        self.pts_ext = pts_ext
        self.pts_mask = pts_mask

        cent = mesh.cell_centroid
        self.d_nbr = self.ext_centroid[nbr_ext] - cent[:, None, :]
        self.d_pts = self.ext_face_center[pts_ext] - cent[:, None, :]
        self.dist_nbr = np.maximum(np.hypot(*np.moveaxis(self.d_nbr, -1, 0)), 1e-300)
        self.dist_pts = np.maximum(np.hypot(*np.moveaxis(self.d_pts, -1, 0)), 1e-300)
        self.i_nbr = self.ext_moments[nbr_ext]
        self.i_own = mesh.cell_moments

        # static global-frame rows for the per-cell pass
        self._rows_global = self._rows(
            self.d_nbr, self.i_nbr, self.d_pts, self.i_own
        )
        self._dist_all = np.concatenate([self.dist_nbr, self.dist_pts], axis=1)
        self._mask_all = np.concatenate([self.nbr_mask, self.pts_mask], axis=1)

    @property
    def n_ext_cells(self) -> int:
        return self.mesh.n_cells + self.n_ghost

    @property
    def n_ext_faces(self) -> int:
        return self.mesh.n_faces + self.ghost_face_src.size

    @staticmethod
    def _rows(d_nbr, i_nbr, d_pts, i_own):
        """Stencil rows of the quadratic zero-mean basis, (..., R, 5)."""
        ixx = i_own[..., None, 0]
        ixy = i_own[..., None, 1]
        iyy = i_own[..., None, 2]
        nx, ny = d_nbr[..., 0], d_nbr[..., 1]
        rows_n = np.stack(
            [
                nx,
                ny,
                0.5 * (nx * nx + i_nbr[..., 0] - ixx),
                nx * ny + i_nbr[..., 1] - ixy,
                0.5 * (ny * ny + i_nbr[..., 2] - iyy),
            ],
            axis=-1,
        )
        px, py = d_pts[..., 0], d_pts[..., 1]
        rows_p = np.stack(
            [
                px,
                py,
                0.5 * (px * px - ixx),
                px * py - ixy,
                0.5 * (py * py - iyy),
            ],
            axis=-1,
        )
        return np.concatenate([rows_n, rows_p], axis=-2)

    # -- weighted least squares -------------------------------------------

    def _wls(self, rows, du, dist, mask):
        """Solve the weighted normal equations per batch item and variable.

        rows (B,R,5), du (B,R,V), dist (B,R), mask (B,R) ->
        coefficients (B,5,V) and a rank-deficiency mask (B,).
        """
        s = du / dist[..., None]
        w = mask[..., None] / (s * s + self.eps)
        nb = rows.shape[0]
        rt = rows.transpose(0, 2, 1)
        nmat = np.empty((nb, w.shape[2], 5, 5))
        rhs = np.empty((nb, w.shape[2], 5))
        for v in range(w.shape[2]):
            nmat[:, v] = np.matmul(rt, rows * w[:, :, v, None])
            rhs[:, v] = np.matmul(rt, (w[:, :, v] * du[:, :, v])[:, :, None])[:, :, 0]
        diag = np.einsum("bvmm->bvm", nmat)
        scale = 1.0 / np.sqrt(np.maximum(diag, 1e-300))
        a = nmat * scale[..., :, None] * scale[..., None, :]
        b = rhs.copy() * scale
        # symmetric elimination on the unit-diagonal system; a trailing pivot
        # below 1e-10 marks the stencil geometry as rank deficient
        deficient = np.zeros(a.shape[:2], dtype=bool)
        for k in range(5):
            piv = a[..., k, k]
            deficient |= ~np.isfinite(piv) | (piv < 1e-10)
            safe = np.where(np.abs(piv) < 1e-300, 1.0, piv)
            if k < 4:
                fac = a[..., k + 1 :, k] / safe[..., None]
                a[..., k + 1 :, :] -= fac[..., None] * a[..., k : k + 1, :]
                b[..., k + 1 :] -= fac * b[..., k : k + 1]
        sol = np.zeros_like(b)
        for k in range(4, -1, -1):
            acc = b[..., k] - np.einsum(
                "...m,...m->...", a[..., k, k + 1 :], sol[..., k + 1 :]
            )
            piv = a[..., k, k]
            sol[..., k] = acc / np.where(np.abs(piv) < 1e-300, 1.0, piv)
        bad = np.any(deficient | ~np.isfinite(sol).all(axis=-1), axis=-1)
        coef = sol * scale
        coef[bad] = 0.0
        return np.moveaxis(coef, 1, 2), bad

    def _gather(self, cells, wbar_ext, wface_ext):
        """Stencil data differences for the given cells, (B, R, 4)."""
        w0 = wbar_ext[cells][:, None, :]
        du_n = wbar_ext[self.nbr_ext[cells]] - w0
        du_p = wface_ext[self.pts_ext[cells]] - w0
        return np.concatenate([du_n, du_p], axis=1)

    # -- per-cell pass (global frame) ---------------------------------------

    def cell_polys(self, wbar_ext, wface_ext):
        """Global-frame quadratic coefficients for every cell, (NC,5,4)."""
        nc = self.mesh.n_cells
        du = self._gather(np.arange(nc), wbar_ext, wface_ext)
        return self._wls(self._rows_global, du, self._dist_all, self._mask_all)

    def detect(self, wbar_ext, coef):
        """Flag cells whose cross-extrapolation jump exceeds C sqrt(S_i+S_j)."""
        mesh = self.mesh
        flags = np.zeros(mesh.n_cells, dtype=bool)
        f = mesh.interior_faces
        i, j = mesh.face_cells[f, 0], mesh.face_cells[f, 1]
        scale = np.maximum(np.abs(wbar_ext[i]), np.abs(wbar_ext[j]))
        rhs = self.c_detect * np.sqrt(mesh.cell_area[i] + mesh.cell_area[j])

        def own_minus_cross(a, b):
            # polynomial of b extrapolated to the centroid of a, minus a's own value
            ia = self.i_own[a]
            own = wbar_ext[a] - (
                0.5 * ia[:, 0:1] * coef[a, DXX]
                + ia[:, 1:2] * coef[a, DXY]
                + 0.5 * ia[:, 2:3] * coef[a, DYY]
            )
            d = mesh.cell_centroid[a] - mesh.cell_centroid[b]
            ib = self.i_own[b]
            basis = np.stack(
                [
                    d[:, 0],
                    d[:, 1],
                    0.5 * (d[:, 0] ** 2 - ib[:, 0]),
                    d[:, 0] * d[:, 1] - ib[:, 1],
                    0.5 * (d[:, 1] ** 2 - ib[:, 2]),
                ],
                axis=-1,
            )
            cross = wbar_ext[b] + np.einsum("bs,bsv->bv", basis, coef[b])
            return own - cross

        jump_i = own_minus_cross(i, j)
        jump_j = own_minus_cross(j, i)
        norm = np.zeros(f.size)
        for q in (0, 3):  # density and total energy
            nq = np.maximum(np.abs(jump_i[:, q]), np.abs(jump_j[:, q])) / scale[:, q]
            norm = np.maximum(norm, nq)
        hit = norm >= rhs
        np.logical_or.at(flags, i[hit], True)
        np.logical_or.at(flags, j[hit], True)
        return flags

    # -- limited linear fallback --------------------------------------------

    def limited_linear(self, wbar_ext, cells):
        """Least-squares slopes from neighbor averages, Barth-Jespersen
        limited at the cell's face midpoints; (n, 2, 4) global frame."""
        mesh = self.mesh
        nbr = self.nbr_ext[cells]
        mask = self.nbr_mask[cells]
        d = self.d_nbr[cells] * mask[..., None]
        du = (wbar_ext[nbr] - wbar_ext[cells][:, None, :]) * mask[..., None]
        nmat = np.einsum("bkm,bkn->bmn", d, d)
        rhs = np.einsum("bkm,bkv->bmv", d, du)
        nmat += 1e-300 * np.eye(2)
        slope = np.linalg.solve(nmat, rhs)

        cf = mesh.cell_faces[cells]  # (n, 4), -1 padded
        f_ok = cf >= 0
        fc = mesh.face_center[np.where(f_ok, cf, 0)]
        p = (fc - mesh.cell_centroid[cells][:, None, :]) * f_ok[..., None]
        val = np.einsum("bkm,bmv->bkv", p, slope)
        hi = np.maximum(du.max(axis=1), 0.0)
        lo = np.minimum(du.min(axis=1), 0.0)
        tiny = 1e-14 * (1.0 + np.abs(wbar_ext[cells]))
        with np.errstate(divide="ignore", invalid="ignore"):
            phi_f = np.where(
                val > tiny[:, None, :],
                hi[:, None, :] / val,
                np.where(val < -tiny[:, None, :], lo[:, None, :] / val, 1.0),
            )
        phi_f = np.where(f_ok[..., None], phi_f, 1.0)
        phi = np.clip(phi_f.min(axis=1), 0.0, 1.0)
        return slope * phi[:, None, :]

    # -- face pass ----------------------------------------------------------

    def _side_poly(self, cells, c, s, rinv, wbar_ext, wface_ext):
        """Local-frame WLS for one side of a batch of faces.

        Returns (u0, coef, bad) in the active variable space (rotated
        conservative, or characteristic when rinv is given).
        """
        cb, sb = c[:, None], s[:, None]
        d_n = _rot_vec(self.d_nbr[cells], cb, sb)
        d_p = _rot_vec(self.d_pts[cells], cb, sb)
        i_n = _rot_sym(self.i_nbr[cells], cb, sb)
        i_o = _rot_sym(self.i_own[cells], c, s)
        rows = self._rows(d_n, i_n, d_p, i_o)
        du = self._gather(cells, wbar_ext, wface_ext)
        du = rotate_cons(du, cb, sb)
        u0 = rotate_cons(wbar_ext[cells], c, s)
        if rinv is not None:
            du = np.einsum("bvw,brw->brv", rinv, du)
            u0 = np.einsum("bvw,bw->bv", rinv, u0)
        dist = np.concatenate([self.dist_nbr[cells], self.dist_pts[cells]], axis=1)
        mask = np.concatenate([self.nbr_mask[cells], self.pts_mask[cells]], axis=1)
        coef, bad = self._wls(rows, du, dist, mask)
        return u0, coef, bad, i_o

    @staticmethod
    def _eval_points(u0, coef, i_own, pts):
        """Polynomial values at local points rel. the cell centroid, (B,P,V)."""
        x, y = pts[..., 0], pts[..., 1]
        basis = np.stack(
            [
                x,
                y,
                0.5 * (x * x - i_own[:, None, 0]),
                x * y - i_own[:, None, 1],
                0.5 * (y * y - i_own[:, None, 2]),
            ],
            axis=-1,
        )
        return u0[:, None, :] + np.einsum("bps,bsv->bpv", basis, coef)

    @staticmethod
    def _eval_derivs(coef, pts):
        """First/second derivatives at local points, (B,5,V) per point set (B,2)."""
        x, y = pts[:, 0:1], pts[:, 1:2]
        out = np.empty_like(coef)
        out[:, DX] = coef[:, DX] + coef[:, DXX] * x + coef[:, DXY] * y
        out[:, DY] = coef[:, DY] + coef[:, DXY] * x + coef[:, DYY] * y
        out[:, DXX] = coef[:, DXX]
        out[:, DXY] = coef[:, DXY]
        out[:, DYY] = coef[:, DYY]
        return out

    @staticmethod
    def _fd(vals, d, side):
        """Value and derivatives from a 3x3 grid (B,3,3,V), x index first.

        side "left": x at (-2d,-d,0); "right": (0,d,2d); "center": (-d,0,d).
        The face midpoint is the x=0, y=0 node.
        """
        f = vals
        two_d = 2.0 * d[:, None]
        d2 = (d * d)[:, None]
        gy = (f[:, :, 2] - f[:, :, 0]) / two_d[:, None, :]
        if side == "left":
            val = f[:, 2, 1]
            wx = (3.0 * f[:, 2, 1] - 4.0 * f[:, 1, 1] + f[:, 0, 1]) / two_d
            wxx = (f[:, 2, 1] - 2.0 * f[:, 1, 1] + f[:, 0, 1]) / d2
            wy = (f[:, 2, 2] - f[:, 2, 0]) / two_d
            wyy = (f[:, 2, 2] - 2.0 * f[:, 2, 1] + f[:, 2, 0]) / d2
            wxy = (3.0 * gy[:, 2] - 4.0 * gy[:, 1] + gy[:, 0]) / two_d
        elif side == "right":
            val = f[:, 0, 1]
            wx = (-3.0 * f[:, 0, 1] + 4.0 * f[:, 1, 1] - f[:, 2, 1]) / two_d
            wxx = (f[:, 0, 1] - 2.0 * f[:, 1, 1] + f[:, 2, 1]) / d2
            wy = (f[:, 0, 2] - f[:, 0, 0]) / two_d
            wyy = (f[:, 0, 2] - 2.0 * f[:, 0, 1] + f[:, 0, 0]) / d2
            wxy = (-3.0 * gy[:, 0] + 4.0 * gy[:, 1] - gy[:, 2]) / two_d
        else:
            val = f[:, 1, 1]
            wx = (f[:, 2, 1] - f[:, 0, 1]) / two_d
            wxx = (f[:, 2, 1] - 2.0 * f[:, 1, 1] + f[:, 0, 1]) / d2
            wy = (f[:, 1, 2] - f[:, 1, 0]) / two_d
            wyy = (f[:, 1, 2] - 2.0 * f[:, 1, 1] + f[:, 1, 0]) / d2
            wxy = (gy[:, 2] - gy[:, 0]) / two_d
        return val, np.stack([wx, wy, wxx, wxy, wyy], axis=1)

    def _grid_points(self, pm, d, gx):
        """Local grid coordinates rel. cell centroid, (B,9,2), x fastest."""
        px = pm[:, 0:1] + gx[None, :] * d[:, None]  # (B,3)
        py = pm[:, 1:2] + _GY[None, :] * d[:, None]
        pts = np.empty((pm.shape[0], 3, 3, 2))
        pts[..., 0] = px[:, :, None]
        pts[..., 1] = py[:, None, :]
        return pts.reshape(pm.shape[0], 9, 2)

    def faces(self, wbar_ext, wface_ext, bd: BoundaryData) -> FaceRecon:
        """Reconstruct both sides and the merged equilibrium state per face."""
        mesh, model = self.mesh, self.model
        nc, nf = mesh.n_cells, mesh.n_faces
        own = mesh.face_cells[:, 0]
        nbr = mesh.face_cells[:, 1]
        bmask = nbr < 0
        binds = self._bpos[np.flatnonzero(bmask)]  # positions into bd arrays
        bfaces = np.flatnonzero(bmask)
        ifaces = np.flatnonzero(~bmask)
        nbr_e = np.where(bmask, nc + self._bpos, nbr)
        c, s = mesh.face_normal[:, 0], mesh.face_normal[:, 1]
        d4 = mesh.face_len / 4.0

        flags = np.zeros(nc, dtype=bool)
        if self.detector:
            coef_a, bad_a = self.cell_polys(wbar_ext, wface_ext)
            flags = self.detect(wbar_ext, coef_a) | bad_a

        rinv = None
        rmat = None
        if self.mode == "characteristic":
            w_star = 0.5 * (wbar_ext[own] + wbar_ext[nbr_e])
            rmat, rinv = characteristic_matrices(rotate_cons(w_star, c, s), model)

        u0_l, coef_l, bad_l, i_ol = self._side_poly(own, c, s, rinv, wbar_ext, wface_ext)
        u0_r, coef_r, bad_r, i_or = self._side_poly(
            nbr[ifaces], c[ifaces], s[ifaces],
            None if rinv is None else rinv[ifaces], wbar_ext, wface_ext,
        )
        np.logical_or.at(flags, own[bad_l], True)
        np.logical_or.at(flags, nbr[ifaces][bad_r], True)

        pm_l = _rot_vec(mesh.face_center - mesh.cell_centroid[own], c, s)
        pm_r = _rot_vec(
            mesh.face_center[ifaces] - mesh.cell_centroid[nbr[ifaces]],
            c[ifaces], s[ifaces],
        )

        wl = np.zeros((nf, 4))
        dwl = np.zeros((nf, 5, 4))
        wr = np.zeros((nf, 4))
        dwr = np.zeros((nf, 5, 4))
        # also keep centered-grid samples of each side for the merge
        gl = np.zeros((nf, 9, 4))
        gr = np.zeros((nf, 9, 4))
        pts_c_l = self._grid_points(pm_l, d4, _GX_CENTER)

        if self.mode == "smooth":
            wl[:] = self._eval_points(u0_l, coef_l, i_ol, pm_l[:, None, :])[:, 0]
            dwl[:] = self._eval_derivs(coef_l, pm_l)
            gl[:] = self._eval_points(u0_l, coef_l, i_ol, pts_c_l)
            wr[ifaces] = self._eval_points(
                u0_r, coef_r, i_or, pm_r[:, None, :]
            )[:, 0]
            dwr[ifaces] = self._eval_derivs(coef_r, pm_r)
            gr[ifaces] = self._eval_points(
                u0_r, coef_r, i_or, self._grid_points(pm_r, d4[ifaces], _GX_CENTER)
            )
        else:
            # one-sided grids in characteristic space, unproject, difference
            pts = self._grid_points(pm_l, d4, _GX_LEFT)
            ul = self._eval_points(u0_l, coef_l, i_ol, pts)
            wgrid = np.einsum("bvw,bpw->bpv", rmat, ul).reshape(nf, 3, 3, 4)
            wl[:], dwl[:] = self._fd(wgrid, d4, "left")
            ulc = self._eval_points(u0_l, coef_l, i_ol, pts_c_l)
            gl[:] = np.einsum("bvw,bpw->bpv", rmat, ulc)

            pts = self._grid_points(pm_r, d4[ifaces], _GX_RIGHT)
            ur = self._eval_points(u0_r, coef_r, i_or, pts)
            wgrid = np.einsum("bvw,bpw->bpv", rmat[ifaces], ur).reshape(-1, 3, 3, 4)
            wr[ifaces], dwr[ifaces] = self._fd(wgrid, d4[ifaces], "right")
            urc = self._eval_points(
                u0_r, coef_r, i_or, self._grid_points(pm_r, d4[ifaces], _GX_CENTER)
            )
            gr[ifaces] = np.einsum("bvw,bpw->bpv", rmat[ifaces], urc)

        # flagged faces drop to the limited linear polynomials of both cells
        face_flag = flags[own] | np.where(bmask, False, flags[np.maximum(nbr, 0)])
        if np.any(flags):
            fcells = np.flatnonzero(flags)
            slot = -np.ones(nc, dtype=np.int64)
            slot[fcells] = np.arange(fcells.size)
            slopes = self.limited_linear(wbar_ext, fcells)

            def lin_side(faces_idx, cells):
                sl = slopes[slot[cells]]  # (b, 2, 4) global frame
                cf, sf = c[faces_idx], s[faces_idx]
                slx = rotate_cons(sl[:, 0], cf, sf)
                sly = rotate_cons(sl[:, 1], cf, sf)
                sx = cf[:, None] * slx + sf[:, None] * sly
                sy = -sf[:, None] * slx + cf[:, None] * sly
                u0 = rotate_cons(wbar_ext[cells], cf, sf)
                pm = _rot_vec(
                    mesh.face_center[faces_idx] - mesh.cell_centroid[cells], cf, sf
                )
                val = u0 + pm[:, 0:1] * sx + pm[:, 1:2] * sy
                dw = np.zeros((faces_idx.size, 5, 4))
                dw[:, DX] = sx
                dw[:, DY] = sy
                pts = self._grid_points(pm, d4[faces_idx], _GX_CENTER)
                grid = (
                    u0[:, None, :]
                    + pts[..., 0:1] * sx[:, None, :]
                    + pts[..., 1:2] * sy[:, None, :]
                )
                return val, dw, grid

            # both sides of every flagged face use the linear data
            idx = np.flatnonzero(face_flag)
            val, dw, grid = lin_side(idx, own[idx])
            wl[idx], dwl[idx], gl[idx] = val, dw, grid
            iidx = idx[~bmask[idx]]
            val, dw, grid = lin_side(iidx, nbr[iidx])
            wr[iidx], dwr[iidx], gr[iidx] = val, dw, grid

        # exterior side of boundary faces
        if bfaces.size:
            code = bd.code[binds]
            sign = bd.sign[binds]
            for kind in (PARITY, DIRICHLET, OUTFLOW, ISOTHERMAL):
                sel = bfaces[code == kind]
                if sel.size == 0:
                    continue
                sb = sign[code == kind]
                if kind == PARITY:
                    wr[sel] = wl[sel] * sb
                    dwr[sel] = dwl[sel] * sb[:, None, :]
                    dwr[sel[:, None], [DX, DXY]] *= -1.0
                    gr[sel] = gl[sel].reshape(-1, 3, 3, 4)[:, ::-1] \
                        .reshape(-1, 9, 4) * sb[:, None, :]
                elif kind == DIRICHLET:
                    st = bd.state[binds][code == kind]
                    wr[sel] = st
                    dwr[sel] = 0.0
                    gr[sel] = st[:, None, :]
                elif kind == OUTFLOW:
                    wr[sel] = wl[sel]
                    dwr[sel] = dwl[sel]
                    gr[sel] = gl[sel]
                else:
                    ut = bd.wall_ut[binds][code == kind]
                    tw = bd.wall_temp[binds][code == kind]
                    mirror = gl[sel].reshape(-1, 3, 3, 4)[:, ::-1].reshape(-1, 9, 4)
                    q = prim_from_cons(mirror.reshape(-1, 4), model, check=False)
                    qw = q.reshape(sel.size, 9, 4)
                    p_in = qw[..., 0] / (2.0 * qw[..., 3])
                    t_in = 1.0 / (2.0 * qw[..., 3])
                    t_g = np.maximum(2.0 * tw[:, None] - t_in, 0.05 * tw[:, None])
                    qg = np.empty_like(qw)
                    qg[..., 0] = p_in / t_g
                    qg[..., 1] = -qw[..., 1]
                    qg[..., 2] = 2.0 * ut[:, None] - qw[..., 2]
                    qg[..., 3] = 0.5 / t_g
                    gr[sel] = cons_from_prim(qg.reshape(-1, 4), model).reshape(
                        sel.size, 9, 4
                    )
                    grid33 = gr[sel].reshape(-1, 3, 3, 4)
                    wr[sel], dwr[sel] = self._fd(grid33, d4[sel], "center")

        # positivity fallback: replace a bad side by its rotated cell average
        bad_l_state = ~is_valid_state(wl)
        if np.any(bad_l_state):
            idx = np.flatnonzero(bad_l_state)
            wl[idx] = rotate_cons(wbar_ext[own[idx]], c[idx], s[idx])
            dwl[idx] = 0.0
            gl[idx] = wl[idx][:, None, :]
            np.logical_or.at(flags, own[idx], True)
            face_flag[idx] = True
        bad_r_state = ~is_valid_state(wr)
        if np.any(bad_r_state):
            idx = np.flatnonzero(bad_r_state)
            wr[idx] = rotate_cons(wbar_ext[nbr_e[idx]], c[idx], s[idx])
            dwr[idx] = 0.0
            gr[idx] = wr[idx][:, None, :]
            keep = ~bmask[idx]
            np.logical_or.at(flags, nbr[idx[keep]], True)
            face_flag[idx] = True

        # equilibrium part: merge the side samples at the centered grid
        okl = is_valid_state(gl.reshape(-1, 4)).reshape(nf, 9).all(axis=1)
        okr = is_valid_state(gr.reshape(-1, 4)).reshape(nf, 9).all(axis=1)
        for okm, g, w_mid, cells in (
            (okl, gl, wl, own),
            (okr, gr, wr, nbr_e),
        ):
            badm = np.flatnonzero(~okm)
            if badm.size:
                avg = rotate_cons(wbar_ext[cells[badm]], c[badm], s[badm])
                g[badm] = avg[:, None, :]
        ql = prim_from_cons(gl.reshape(-1, 4), model)
        qr = prim_from_cons(gr.reshape(-1, 4), model)
        merged = merge_half_states(ql, qr, model.K).reshape(nf, 3, 3, 4)
        w0, dw0 = self._fd(merged, d4, "center")

        order = np.where(face_flag, 2, 3)
        return FaceRecon(wl, dwl, wr, dwr, w0, dw0, flags, order)
