"""Reconstruction: exactness, weights, detector, fallback, merge, frames."""

import numpy as np
import pytest

from cgks import meshgen
from cgks.gas import GasModel, cons_from_prim, prim_from_cons, rotate_cons
from cgks.moments import FULL, NEG, POS, MomentTable, MomentWork, merge_half_states
from cgks.recon import (
    DIRICHLET,
    DX,
    DXX,
    DXY,
    DY,
    DYY,
    OUTFLOW,
    PARITY,
    BoundaryData,
    ReconContext,
    characteristic_matrices,
)

MODEL = GasModel(gamma=1.4)


def quad_field(seed=0, scale=0.15):
    """Random per-variable quadratic W(x,y), kept well inside validity."""
    rng = np.random.default_rng(seed)
    q = scale * rng.uniform(-1.0, 1.0, (4, 6))
    q[:, 0] = [2.0, 0.6, -0.4, 4.0]
    return q


def field_value(q, pts):
    x, y = pts[..., 0], pts[..., 1]
    mono = np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=-1)
    return mono @ q.T


def field_average(q, cent, moms):
    base = field_value(q, cent)
    corr = (
        moms[..., 0:1] * q[:, 3]
        + moms[..., 1:2] * q[:, 4]
        + moms[..., 2:3] * q[:, 5]
    )
    return base + corr


def field_gradients(q, pts):
    x, y = pts[..., 0], pts[..., 1]
    gx = q[:, 1] + 2.0 * x[..., None] * q[:, 3] + y[..., None] * q[:, 4]
    gy = q[:, 2] + x[..., None] * q[:, 4] + 2.0 * y[..., None] * q[:, 5]
    hxx = 2.0 * q[:, 3] * np.ones_like(x)[..., None]
    hxy = q[:, 4] * np.ones_like(x)[..., None]
    hyy = 2.0 * q[:, 5] * np.ones_like(x)[..., None]
    return gx, gy, hxx, hxy, hyy


def exact_local(q, ctx, faces):
    """Exact rotated values and face-local derivatives of the field."""
    mesh = ctx.mesh
    c, s = mesh.face_normal[faces, 0], mesh.face_normal[faces, 1]
    pts = mesh.face_center[faces]
    w = rotate_cons(field_value(q, pts), c[:, None], s[:, None])[..., 0, :] \
        if pts.ndim == 3 else rotate_cons(field_value(q, pts), c, s)
    gx, gy, hxx, hxy, hyy = field_gradients(q, pts)
    rot = lambda a: rotate_cons(a, c, s)
    gx, gy, hxx, hxy, hyy = rot(gx), rot(gy), rot(hxx), rot(hxy), rot(hyy)
    cc, ss = c[:, None], s[:, None]
    dw = np.stack(
        [
            cc * gx + ss * gy,
            -ss * gx + cc * gy,
            cc * cc * hxx + 2 * cc * ss * hxy + ss * ss * hyy,
            -cc * ss * hxx + (cc * cc - ss * ss) * hxy + cc * ss * hyy,
            ss * ss * hxx - 2 * cc * ss * hxy + cc * cc * hyy,
        ],
        axis=1,
    )
    return w, dw


def fill_ext(ctx, q):
    wbar = field_average(q, ctx.ext_centroid, ctx.ext_moments)
    wface = field_value(q, ctx.ext_face_center)
    return wbar, wface


def outflow_bd(ctx):
    bd = BoundaryData.zeros(ctx.mesh.boundary_faces.size)
    bd.code[:] = OUTFLOW
    return bd


class TestQuadraticExactness:
    def run_mode(self, mode, mesh=None, tol=1e-10):
        if mesh is None:
            mesh = meshgen.rect_tri_mesh(0, 1, 0, 1, nx=6, ny=5, jitter=0.3, seed=3)
        ctx = ReconContext(mesh, MODEL, mode=mode)
        q = quad_field(seed=1)
        wbar, wface = fill_ext(ctx, q)
        out = ctx.faces(wbar, wface, outflow_bd(ctx))
        fi = mesh.interior_faces
        w_exact, dw_exact = exact_local(q, ctx, fi)
        assert np.allclose(out.wl[fi], w_exact, rtol=0, atol=tol)
        assert np.allclose(out.wr[fi], w_exact, rtol=0, atol=tol)
        assert np.allclose(out.dwl[fi], dw_exact, rtol=0, atol=tol * 30)
        assert np.allclose(out.dwr[fi], dw_exact, rtol=0, atol=tol * 30)
        assert not out.flags.any()

    def test_smooth_mode(self):
        self.run_mode("smooth")

    def test_characteristic_mode(self):
        self.run_mode("characteristic", tol=2e-9)

    def test_rectangular_cells(self):
        mesh = meshgen.rect_quad_mesh(0, 1, 0, 1, nx=6, ny=5)
        self.run_mode("smooth", mesh=mesh)

    def test_constant_field(self):
        mesh = meshgen.rect_tri_mesh(0, 1, 0, 1, nx=4, ny=4, jitter=0.2, seed=2)
        ctx = ReconContext(mesh, MODEL, mode="smooth")
        q = np.zeros((4, 6))
        q[:, 0] = [1.3, 0.2, -0.1, 2.5]
        wbar, wface = fill_ext(ctx, q)
        out = ctx.faces(wbar, wface, outflow_bd(ctx))
        c, s = mesh.face_normal[:, 0], mesh.face_normal[:, 1]
        w_loc = rotate_cons(np.tile(q[:, 0], (mesh.n_faces, 1)), c, s)
        assert np.allclose(out.wl, w_loc, atol=1e-14)
        assert np.allclose(out.wr, w_loc, atol=1e-14)
        assert np.allclose(out.w0, w_loc, atol=1e-13)
        assert np.allclose(out.dwl, 0.0, atol=1e-14)
        assert np.allclose(out.dw0, 0.0, atol=1e-12)

    def test_equilibrium_merge_smooth_limit(self):
        # identical smooth sides: W0 equals the shared point value
        mesh = meshgen.rect_tri_mesh(0, 1, 0, 1, nx=5, ny=5, jitter=0.25, seed=4)
        ctx = ReconContext(mesh, MODEL, mode="smooth")
        q = quad_field(seed=5)
        wbar, wface = fill_ext(ctx, q)
        out = ctx.faces(wbar, wface, outflow_bd(ctx))
        fi = mesh.interior_faces
        w_exact, dw_exact = exact_local(q, ctx, fi)
        assert np.allclose(out.w0[fi], w_exact, rtol=0, atol=1e-10)
        assert np.allclose(out.dw0[fi], dw_exact, rtol=0, atol=1e-8)


class TestCellPolys:
    def test_matches_dense_least_squares(self):
        mesh = meshgen.rect_tri_mesh(0, 1, 0, 1, nx=5, ny=4, jitter=0.3, seed=7)
        ctx = ReconContext(mesh, MODEL)
        rng = np.random.default_rng(11)
        nc = mesh.n_cells
        wbar = np.tile([1.0, 0.3, -0.2, 2.0], (ctx.n_ext_cells, 1))
        wbar += 0.2 * rng.uniform(-1, 1, wbar.shape)
        wface = np.tile([1.0, 0.3, -0.2, 2.0], (ctx.n_ext_faces, 1))
        wface += 0.2 * rng.uniform(-1, 1, wface.shape)
        coef, bad = ctx.cell_polys(wbar, wface)
        assert not bad.any()
        du = ctx._gather(np.arange(nc), wbar, wface)
        for i in rng.choice(nc, 6, replace=False):
            rows = ctx._rows_global[i]
            dist = ctx._dist_all[i]
            for v in range(4):
                s = du[i, :, v] / dist
                w = 1.0 / (s * s + ctx.eps)
                sw = np.sqrt(w)
                sol, *_ = np.linalg.lstsq(rows * sw[:, None], du[i, :, v] * sw,
                                          rcond=None)
                assert np.allclose(coef[i, :, v], sol, rtol=1e-8, atol=1e-11)
                resid = rows.T @ (w * (rows @ coef[i, :, v] - du[i, :, v]))
                scale = np.linalg.norm(rows.T @ (w * du[i, :, v])) + 1e-30
                assert np.linalg.norm(resid) / scale < 1e-10

    def test_polynomial_mean_is_cell_average(self):
        mesh = meshgen.rect_tri_mesh(0, 1, 0, 1, nx=4, ny=4, jitter=0.25, seed=9)
        ctx = ReconContext(mesh, MODEL)
        q = quad_field(seed=2)
        wbar, wface = fill_ext(ctx, q)
        coef, _ = ctx.cell_polys(wbar, wface)
        # integrate the reconstruction over each cell with the same exact
        # degree-2 rule used for the basis moments (centroid fan, midpoints)
        for i in range(0, mesh.n_cells, 7):
            nv = int(mesh.cell_nv[i])
            verts = mesh.nodes[mesh.cell_nodes[i, :nv]] - mesh.cell_centroid[i]
            acc = np.zeros(4)
            area = 0.0
            for k in range(nv):
                a, b = verts[k], verts[(k + 1) % nv]
                ta = 0.5 * (a[0] * b[1] - a[1] * b[0])
                for pt in (0.5 * a, 0.5 * (a + b), 0.5 * b):
                    x, y = pt
                    basis = np.array(
                        [
                            x,
                            y,
                            0.5 * (x * x - mesh.cell_moments[i, 0]),
                            x * y - mesh.cell_moments[i, 1],
                            0.5 * (y * y - mesh.cell_moments[i, 2]),
                        ]
                    )
                    acc += ta / 3.0 * (wbar[i] + basis @ coef[i])
                area += ta
            assert np.allclose(acc / area, wbar[i], rtol=1e-13, atol=1e-13)


class TestCharacteristic:
    def test_round_trip(self):
        rng = np.random.default_rng(3)
        w = np.tile([1.0, 0.4, -0.3, 2.5], (50, 1)) + 0.3 * rng.uniform(-1, 1, (50, 4))
        r, rinv = characteristic_matrices(w, MODEL)
        eye = np.einsum("bij,bjk->bik", r, rinv)
        assert np.allclose(eye, np.eye(4), atol=1e-13)
        back = np.einsum("bij,bjk,bk->bi", r, rinv, w)
        assert np.allclose(back, w, rtol=1e-12)

    def test_acoustic_split_at_rest(self):
        w = cons_from_prim(np.array([[1.0, 0.0, 0.0, 0.5]]), MODEL)
        _, rinv = characteristic_matrices(w, MODEL)
        dp = np.array([[0.0, 0.0, 0.0, 1.0]])
        alpha = np.einsum("bij,bj->bi", rinv, dp)[0]
        assert alpha[0] == pytest.approx(alpha[3], rel=1e-12)
        assert alpha[2] == pytest.approx(0.0, abs=1e-14)


class TestDetector:
    def test_no_flags_on_smooth_field(self):
        mesh = meshgen.rect_tri_mesh(0, 1, 0, 1, nx=8, ny=8, jitter=0.2, seed=5)
        ctx = ReconContext(mesh, MODEL, detector=True)
        q = quad_field(seed=8)
        wbar, wface = fill_ext(ctx, q)
        coef, _ = ctx.cell_polys(wbar, wface)
        assert not ctx.detect(wbar, coef).any()

    def test_flags_cells_at_strong_jump(self):
        mesh = meshgen.rect_tri_mesh(0, 1, 0, 0.2, nx=50, ny=10)
        ctx = ReconContext(mesh, MODEL, detector=True)
        left = cons_from_prim(np.array([[1.0, 0.0, 0.0, 0.5]]), MODEL)[0]
        right = cons_from_prim(np.array([[0.125, 0.0, 0.0, 0.625]]), MODEL)[0]
        wbar = np.where(
            (ctx.ext_centroid[:, 0] < 0.5)[:, None], left, right
        ).astype(float)
        wface = np.where(
            (ctx.ext_face_center[:, 0] < 0.5)[:, None], left, right
        ).astype(float)
        coef, _ = ctx.cell_polys(wbar, wface)
        flags = ctx.detect(wbar, coef)
        hit = mesh.cell_centroid[flags]
        assert flags.any()
        assert np.all(np.abs(hit[:, 0] - 0.5) < 0.1)
        near = np.abs(mesh.cell_centroid[:, 0] - 0.5) < 0.015
        assert flags[near].any()

    def test_threshold_scales_with_h(self):
        for n, expect in ((10, None), (20, None)):
            pass  # threshold is C*sqrt(S_i+S_j), scaling checked analytically
        m1 = meshgen.rect_tri_mesh(0, 1, 0, 1, nx=10, ny=10)
        m2 = meshgen.rect_tri_mesh(0, 1, 0, 1, nx=20, ny=20)
        r1 = np.sqrt(2.0 * m1.cell_area.mean())
        r2 = np.sqrt(2.0 * m2.cell_area.mean())
        assert r1 / r2 == pytest.approx(2.0, rel=1e-12)


class TestLimitedLinear:
    def test_constant(self):
        mesh = meshgen.rect_tri_mesh(0, 1, 0, 1, nx=4, ny=4, jitter=0.2, seed=1)
        ctx = ReconContext(mesh, MODEL)
        wbar = np.tile([1.0, 0.1, 0.2, 2.0], (ctx.n_ext_cells, 1))
        sl = ctx.limited_linear(wbar, np.arange(mesh.n_cells))
        assert np.allclose(sl, 0.0, atol=1e-12)

    def test_linear_field_exact(self):
        # on quads every face midpoint is halfway to the neighbor centroid,
        # so the limiter stays at 1 for monotone linear data
        mesh = meshgen.rect_quad_mesh(0, 1, 0, 1, nx=5, ny=5)
        ctx = ReconContext(mesh, MODEL)
        g = np.array([[0.3, -0.2, 0.15, 0.4], [0.1, 0.25, -0.3, 0.2]])
        wbar = (
            np.array([2.0, 0.5, -0.5, 4.0])
            + ctx.ext_centroid @ g
        )
        sl = ctx.limited_linear(wbar, np.arange(mesh.n_cells))
        assert np.allclose(sl, np.tile(g, (mesh.n_cells, 1, 1)), atol=1e-11)

    def test_extremum_is_bounded(self):
        mesh = meshgen.rect_tri_mesh(0, 1, 0, 1, nx=6, ny=6, jitter=0.2, seed=8)
        ctx = ReconContext(mesh, MODEL)
        rng = np.random.default_rng(12)
        wbar = 1.0 + rng.uniform(-0.5, 0.5, (ctx.n_ext_cells, 4))
        cells = np.arange(mesh.n_cells)
        sl = ctx.limited_linear(wbar, cells)
        cf = mesh.cell_faces[cells]
        f_ok = cf >= 0
        fc = mesh.face_center[np.where(f_ok, cf, 0)]
        p = (fc - mesh.cell_centroid[cells][:, None, :]) * f_ok[..., None]
        val = wbar[cells][:, None, :] + np.einsum("bkm,bmv->bkv", p, sl)
        nbr_vals = wbar[ctx.nbr_ext[cells]]
        hi = np.maximum(nbr_vals.max(axis=1), wbar[cells])
        lo = np.minimum(nbr_vals.min(axis=1), wbar[cells])
        ok_hi = val <= hi[:, None, :] + 1e-12
        ok_lo = val >= lo[:, None, :] - 1e-12
        assert np.all(ok_hi & ok_lo)


class TestMerge:
    def merged_oracle(self, prim_l, prim_r, k):
        wl = MomentWork(MomentTable(prim_l, k))
        wr = MomentWork(MomentTable(prim_r, k))
        return (
            prim_l[:, 0:1] * wl.conserved(POS) + prim_r[:, 0:1] * wr.conserved(NEG)
        )

    def test_against_full_moment_tables(self):
        prim_l = np.array(
            [[1.0, 0.0, 0.0, 1.0], [1.0, 0.75, 0.0, 1.0], [0.5, -1.2, 0.8, 2.0]]
        )
        prim_r = np.array(
            [[0.125, 0.0, 0.0, 1.25], [0.3, -0.5, 0.2, 0.7], [2.0, 0.4, -0.1, 0.5]]
        )
        for k in (3.0, 1.0):
            got = merge_half_states(prim_l, prim_r, k)
            want = self.merged_oracle(prim_l, prim_r, k)
            assert np.allclose(got, want, rtol=1e-12, atol=1e-14)

    def test_sod_merge_density_between_states(self):
        prim_l = np.array([[1.0, 0.0, 0.0, 1.0]])
        prim_r = np.array([[0.125, 0.0, 0.0, 1.25]])
        w0 = merge_half_states(prim_l, prim_r, 3.0)
        assert 0.125 < w0[0, 0] < 1.0

    def test_supersonic_left_dominates(self):
        prim_l = np.array([[1.0, 5.0, 0.3, 1.0]])
        prim_r = np.array([[0.7, 5.0, -0.2, 1.2]])
        w0 = merge_half_states(prim_l, prim_r, 3.0)
        work = MomentWork(MomentTable(prim_l, 3.0))
        full_l = prim_l[:, 0:1] * work.conserved(FULL)
        assert np.allclose(w0, full_l, rtol=1e-6)
        # right state's u<0 mass fraction is negligible at lam*U^2 = 30
        frac = merge_half_states(prim_r, prim_r, 3.0)[0, 0]
        wr = MomentWork(MomentTable(prim_r, 3.0))
        neg_mass = prim_r[0, 0] * wr.conserved(NEG)[0, 0]
        assert neg_mass / prim_r[0, 0] < 1e-6
        assert frac == pytest.approx(prim_r[0, 0], rel=1e-12)


class TestBoundaryRecipes:
    def setup_ctx(self):
        mesh = meshgen.rect_tri_mesh(0, 1, 0, 1, nx=4, ny=4)
        ctx = ReconContext(mesh, MODEL)
        return mesh, ctx

    def test_parity_slip_wall(self):
        mesh, ctx = self.setup_ctx()
        state = cons_from_prim(np.array([[1.2, 0.8, 0.0, 1.0]]), MODEL)[0]
        wbar = np.tile(state, (ctx.n_ext_cells, 1))
        wface = np.tile(state, (ctx.n_ext_faces, 1))
        bd = BoundaryData.zeros(mesh.boundary_faces.size)
        bd.code[:] = PARITY
        bd.sign[:] = [1.0, -1.0, 1.0, 1.0]
        out = ctx.faces(wbar, wface, bd)
        bot = mesh.boundary_faces[
            np.abs(mesh.face_center[mesh.boundary_faces, 1]) < 1e-12
        ]
        # flow is tangential to the bottom wall: mirror state equals the
        # interior state and the merged normal momentum vanishes
        assert np.allclose(out.wr[bot], out.wl[bot], atol=1e-13)
        assert np.allclose(out.w0[bot][:, 1], 0.0, atol=1e-13)
        lef = mesh.boundary_faces[
            np.abs(mesh.face_center[mesh.boundary_faces, 0]) < 1e-12
        ]
        # at the left wall the normal momentum flips sign
        assert np.allclose(out.wr[lef][:, 1], -out.wl[lef][:, 1], atol=1e-13)

    def test_dirichlet_and_outflow(self):
        mesh, ctx = self.setup_ctx()
        state = cons_from_prim(np.array([[1.0, 0.3, -0.1, 2.0]]), MODEL)[0]
        fixed = cons_from_prim(np.array([[2.0, 1.0, 0.0, 3.0]]), MODEL)[0]
        wbar = np.tile(state, (ctx.n_ext_cells, 1))
        wface = np.tile(state, (ctx.n_ext_faces, 1))
        bd = BoundaryData.zeros(mesh.boundary_faces.size)
        bmid = mesh.face_center[mesh.boundary_faces]
        is_left = np.abs(bmid[:, 0]) < 1e-12
        bd.code[:] = OUTFLOW
        bd.code[is_left] = DIRICHLET
        bd.state[is_left] = fixed  # already normal-aligned on the left wall
        out = ctx.faces(wbar, wface, bd)
        lef = mesh.boundary_faces[is_left]
        oth = mesh.boundary_faces[~is_left]
        assert np.allclose(out.wr[lef], fixed, atol=1e-13)
        assert np.allclose(out.dwr[lef], 0.0, atol=1e-14)
        assert np.allclose(out.wr[oth], out.wl[oth], atol=1e-13)
        assert np.allclose(out.dwr[oth], out.dwl[oth], atol=1e-13)
