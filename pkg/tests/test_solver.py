"""Solver: free-stream preservation, conservation bookkeeping, BCs, init."""

import numpy as np
import pytest

from cgks import meshgen
from cgks.errors import ConfigError
from cgks.gas import GasModel, cons_from_prim, prim_from_cons
from cgks.riemann import solve_riemann
from cgks.solver import BC, Solver

INVISCID = GasModel(gamma=1.4)


def cons_pu(rho, u, v, p, model=INVISCID):
    """Conserved state from (rho, u, v, pressure)."""
    lam = rho / (2.0 * p)
    return cons_from_prim(np.array([[rho, u, v, lam]]), model)[0]


def uniform_ic(pu):
    w = cons_pu(*pu)

    def ic(pts):
        return np.tile(w, (np.asarray(pts).shape[0], 1))

    return ic, w


def all_markers(mesh, bc):
    return {int(m): bc for m in np.unique(mesh.face_marker[mesh.boundary_faces])}


class TestFreeStream:
    @pytest.mark.parametrize("kind", ["outflow_extrapolate", "riemann_invariant_farfield", "inflow"])
    def test_uniform_flow_is_preserved(self, kind):
        mesh = meshgen.rect_tri_mesh(0, 1, 0, 1, nx=6, ny=6, jitter=0.3, seed=11)
        ic, w = uniform_ic([1.0, 0.35, -0.2, 0.8])
        bc = BC(kind=kind, state=w.copy())
        sol = Solver(mesh, INVISCID, all_markers(mesh, bc), mode="smooth")
        sol.initialize(ic)
        for _ in range(25):
            sol.step()
        assert np.abs(sol.w - w).max() < 1e-12
        assert np.abs(sol.w_face - w).max() < 1e-12

    def test_uniform_rest_gas_slip_box(self):
        mesh = meshgen.rect_tri_mesh(0, 1, 0, 1, nx=5, ny=5, jitter=0.25, seed=3)
        ic, w = uniform_ic([1.3, 0.0, 0.0, 1.1])
        sol = Solver(mesh, INVISCID, all_markers(mesh, BC(kind="slip_wall")))
        sol.initialize(ic)
        for _ in range(25):
            sol.step()
        assert np.abs(sol.w - w).max() < 1e-12

    def test_characteristic_mode_and_detector(self):
        mesh = meshgen.rect_tri_mesh(0, 1, 0, 1, nx=5, ny=5, jitter=0.2, seed=7)
        ic, w = uniform_ic([1.0, 0.5, 0.1, 1.0])
        bc = all_markers(mesh, BC(kind="outflow_extrapolate"))
        sol = Solver(mesh, INVISCID, bc, mode="characteristic", detector=True)
        sol.initialize(ic)
        rep = None
        for _ in range(10):
            rep = sol.step()
        assert rep.n_flagged == 0
        assert np.abs(sol.w - w).max() < 1e-12


class TestBookkeeping:
    def smooth_bump_ic(self):
        def ic(pts):
            pts = np.asarray(pts)
            r2 = (pts[:, 0] - 0.45) ** 2 + (pts[:, 1] - 0.5) ** 2
            rho = 1.0 + 0.2 * np.exp(-30.0 * r2)
            q = np.column_stack(
                [rho, np.zeros_like(rho), np.zeros_like(rho), rho / 2.0]
            )
            return cons_from_prim(q, INVISCID)

        return ic

    def test_update_is_flux_divergence(self):
        # the per-cell update must be exactly the signed gather of one
        # shared flux array: equal and opposite contributions by design
        mesh = meshgen.rect_tri_mesh(0, 1, 0, 1, nx=5, ny=5, jitter=0.2, seed=9)
        sol = Solver(mesh, INVISCID, all_markers(mesh, BC(kind="slip_wall")))
        sol.initialize(self.smooth_bump_ic())
        w0 = sol.w.copy()
        dt = sol.timestep()

        captured = {}
        orig = sol._gather

        def spy(flux):
            captured["flux"] = flux.copy()
            return orig(flux)

        sol._gather = spy
        sol.step(dt)
        sol._gather = orig
        flux = captured["flux"]
        cf, ok, sg = sol._cf, sol._cf_ok, sol._cf_sign
        manual = w0 - (sg[..., None] * flux[cf]).sum(axis=1) / mesh.cell_area[:, None]
        assert np.array_equal(manual, sol.w)

    def test_closed_box_conservation(self):
        mesh = meshgen.rect_tri_mesh(0, 1, 0, 1, nx=6, ny=6, jitter=0.25, seed=5)
        sol = Solver(mesh, INVISCID, all_markers(mesh, BC(kind="slip_wall")))
        sol.initialize(self.smooth_bump_ic())
        tot0 = sol.totals()
        for _ in range(60):
            sol.step()
        tot = sol.totals()
        # slip walls carry zero analytic mass and energy flux
        assert abs(tot[0] - tot0[0]) / abs(tot0[0]) < 1e-12
        assert abs(tot[3] - tot0[3]) / abs(tot0[3]) < 1e-12
        # the update telescopes: totals change only by the boundary ledger
        drift = tot - tot0 + sol.boundary_ledger
        scale = np.abs(tot0).max()
        assert np.abs(drift).max() / scale < 1e-12

    def test_y_symmetry_preservation(self):
        mesh = meshgen.rect_tri_mesh(0, 1, 0, 1, nx=6, ny=6, diag="sym_y")
        sol = Solver(mesh, INVISCID, all_markers(mesh, BC(kind="slip_wall")))
        sol.initialize(self.smooth_bump_ic())
        key = np.round(
            np.column_stack(
                [mesh.cell_centroid[:, 0], np.abs(mesh.cell_centroid[:, 1] - 0.5)]
            )
            / 1e-9
        ).astype(np.int64)
        order = np.lexsort((mesh.cell_centroid[:, 1], key[:, 1], key[:, 0]))
        pairs = order.reshape(-1, 2)
        assert np.all(key[pairs[:, 0]] == key[pairs[:, 1]])
        for _ in range(20):
            sol.step()
        a, b = sol.w[pairs[:, 0]], sol.w[pairs[:, 1]]
        flip = np.array([1.0, 1.0, -1.0, 1.0])
        assert np.abs(a - b * flip).max() < 1e-12


class TestInitialize:
    def test_quadratic_ic_exact_averages(self):
        mesh = meshgen.rect_tri_mesh(0, 1, 0, 1, nx=5, ny=4, jitter=0.3, seed=2)
        q = np.array(
            [
                [2.0, 0.3, -0.1, 0.2, 0.15, -0.25],
                [0.5, 0.1, 0.2, -0.1, 0.05, 0.1],
                [-0.3, 0.2, -0.15, 0.12, -0.08, 0.06],
                [4.0, -0.2, 0.3, 0.18, 0.1, -0.14],
            ]
        )

        def ic(pts):
            x, y = pts[:, 0], pts[:, 1]
            mono = np.column_stack([np.ones_like(x), x, y, x * x, x * y, y * y])
            return mono @ q.T

        sol = Solver(mesh, INVISCID, all_markers(mesh, BC(kind="slip_wall")))
        sol.initialize(ic)
        cent = mesh.cell_centroid
        mom = mesh.cell_moments
        exact = ic(cent) + (
            mom[:, 0:1] * q[:, 3] + mom[:, 1:2] * q[:, 4] + mom[:, 2:3] * q[:, 5]
        )
        assert np.abs(sol.w - exact).max() < 1e-13
        assert np.abs(sol.w_face - ic(mesh.face_center)).max() < 1e-14

    def test_cut_cell_area_weighting(self):
        mesh = meshgen.rect_quad_mesh(0, 1, 0, 1, nx=5, ny=5)
        wl = cons_pu(1.0, 0.0, 0.0, 1.0)
        wr = cons_pu(0.125, 0.0, 0.0, 0.1)
        xs = 0.45

        def ic(pts):
            return np.where((np.asarray(pts)[:, 0] < xs)[:, None], wl, wr)

        sol = Solver(mesh, INVISCID, all_markers(mesh, BC(kind="slip_wall")))
        sol.initialize(ic, cut_lines=[((1.0, 0.0), xs)])
        # cells spanning [0.4, 0.6] hold a 1/4 : 3/4 mix
        cut = np.abs(mesh.cell_centroid[:, 0] - 0.5) < 1e-12
        assert cut.sum() == 5
        expect = 0.25 * wl + 0.75 * wr
        assert np.abs(sol.w[cut] - expect).max() < 1e-13
        left = mesh.cell_centroid[:, 0] < 0.4
        assert np.abs(sol.w[left] - wl).max() < 1e-14

    def test_invalid_ic_raises(self):
        mesh = meshgen.rect_quad_mesh(0, 1, 0, 1, nx=3, ny=3)

        def ic(pts):
            n = np.asarray(pts).shape[0]
            return np.tile([-1.0, 0.0, 0.0, 1.0], (n, 1))

        sol = Solver(mesh, INVISCID, all_markers(mesh, BC(kind="slip_wall")))
        from cgks.errors import NumericalError

        with pytest.raises(NumericalError):
            sol.initialize(ic)


class TestTimestep:
    def test_rest_gas_formula(self):
        mesh = meshgen.rect_quad_mesh(0, 1, 0, 1, nx=100, ny=100)
        ic, _ = uniform_ic([1.0, 0.0, 0.0, 1.0])
        sol = Solver(mesh, INVISCID, all_markers(mesh, BC(kind="slip_wall")))
        sol.initialize(ic)
        assert sol.timestep() == pytest.approx(0.35 * 0.01 / np.sqrt(1.4), rel=1e-12)

    def test_viscous_term_reduces_dt(self):
        mesh = meshgen.rect_quad_mesh(0, 1, 0, 1, nx=50, ny=50)
        ic, _ = uniform_ic([1.0, 0.0, 0.0, 1.0])
        visc = GasModel(gamma=1.4, mu=0.05, prandtl=1.0)
        a = Solver(mesh, INVISCID, all_markers(mesh, BC(kind="slip_wall")))
        a.initialize(ic)
        b = Solver(mesh, visc, all_markers(mesh, BC(kind="slip_wall")))
        b.initialize(ic)
        assert b.timestep() < a.timestep()
        # h -> h/2 with viscosity dominant scales dt by ~1/4
        fine = meshgen.rect_quad_mesh(0, 1, 0, 1, nx=100, ny=100)
        stiff = GasModel(gamma=1.4, mu=50.0, prandtl=1.0)
        c = Solver(mesh, stiff, all_markers(mesh, BC(kind="slip_wall")))
        c.initialize(ic)
        d = Solver(fine, stiff, all_markers(fine, BC(kind="slip_wall")))
        d.initialize(ic)
        assert d.timestep() / c.timestep() == pytest.approx(0.25, rel=0.02)


class TestValidation:
    def test_missing_marker_raises(self):
        mesh = meshgen.rect_quad_mesh(0, 1, 0, 1, nx=3, ny=3)
        with pytest.raises(ConfigError):
            Solver(mesh, INVISCID, {1: BC(kind="slip_wall")})

    def test_unknown_kind_raises(self):
        with pytest.raises(ConfigError):
            BC(kind="perfectly_matched_layer")

    def test_inflow_needs_state(self):
        with pytest.raises(ConfigError):
            BC(kind="inflow")

    def test_cfl_range(self):
        mesh = meshgen.rect_quad_mesh(0, 1, 0, 1, nx=3, ny=3)
        with pytest.raises(ConfigError):
            Solver(mesh, INVISCID, all_markers(mesh, BC(kind="slip_wall")), cfl=0.6)


class TestShockTube:
    def test_sod_coarse_matches_exact(self):
        # narrow channel, outflow ends, slip sides; coarse but must track
        # the exact solution
        mesh = meshgen.rect_tri_mesh(0, 1, 0, 0.1, nx=50, ny=5)
        left = np.array([1.0, 0.0, 1.0])
        right = np.array([0.125, 0.0, 0.1])
        wl = cons_pu(1.0, 0.0, 0.0, 1.0)
        wr = cons_pu(0.125, 0.0, 0.0, 0.1)

        def ic(pts):
            return np.where((np.asarray(pts)[:, 0] < 0.5)[:, None], wl, wr)

        bc = {
            meshgen.LEFT: BC(kind="outflow_extrapolate"),
            meshgen.RIGHT: BC(kind="outflow_extrapolate"),
            meshgen.BOTTOM: BC(kind="slip_wall"),
            meshgen.TOP: BC(kind="slip_wall"),
        }
        sol = Solver(mesh, INVISCID, bc, mode="characteristic")
        sol.initialize(ic, cut_lines=[((1.0, 0.0), 0.5)])
        sol.run(t_end=0.2)
        exact = solve_riemann(left, right)
        xi = (mesh.cell_centroid[:, 0] - 0.5) / sol.t
        rho_ex, _, _ = exact.sample(xi)
        err = np.sum(mesh.cell_area * np.abs(sol.w[:, 0] - rho_ex)) / np.sum(
            mesh.cell_area
        )
        assert err < 0.05
        assert np.all(sol.w[:, 0] > 0.05)
