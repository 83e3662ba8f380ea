"""Velocity-space moments of the equilibrium distribution.

All moments are per unit density and factorize as
<u^a v^b xi^{2g}> = <u^a><v^b><xi^{2g}> for a Maxwellian with parameters
(U, V, lam) and K internal degrees of freedom.  Half moments split the
normal velocity u at zero (u > 0 carries the left state across a face,
u < 0 the right state).

The collision-invariant weights are psi = (1, u, v, (u^2+v^2+xi^2)/2).
MomentWork evaluates psi-weighted moments of products of up to two
microslopes (each linear in psi) against those tables with memoization;
the highest velocity powers reached by the third-order flux assembly are
u^9, v^8 and xi^6, so tables are built a little past that and access is
asserted in range.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erfc

U_ORDER = 11
V_ORDER = 11
XI_ORDER = 3  # xi^0, xi^2, xi^4, xi^6

FULL, POS, NEG = 0, 1, 2


class MomentTable:
    """Batched one-sided and full velocity moments for N states.

    prim is an (N, 4) array of (rho, U, V, lam).  rho is kept so callers
    can scale assembled per-unit-density moments back to fluid units.
    """

    def __init__(self, prim: np.ndarray, K: float):
        prim = np.atleast_2d(np.asarray(prim, dtype=float))
        self.rho = prim[:, 0]
        u, v, lam = prim[:, 1], prim[:, 2], prim[:, 3]
        self.K = float(K)
        n = prim.shape[0]

        inv2l = 0.5 / lam
        self.mu_full = _full_moments(u, inv2l, U_ORDER)
        self.mv_full = _full_moments(v, inv2l, V_ORDER)

        sq = np.sqrt(lam)
        gauss = 0.5 * np.exp(-lam * u * u) / np.sqrt(np.pi * lam)
        self.mu_pos = _half_moments(u, inv2l, 0.5 * erfc(-sq * u), gauss, U_ORDER)
        self.mu_neg = _half_moments(u, inv2l, 0.5 * erfc(sq * u), -gauss, U_ORDER)

        self.xi = np.empty((n, XI_ORDER + 1))
        self.xi[:, 0] = 1.0
        self.xi[:, 1] = K * inv2l
        self.xi[:, 2] = K * (K + 2.0) * inv2l**2
        self.xi[:, 3] = K * (K + 2.0) * (K + 4.0) * inv2l**3

    def u_moments(self, part: int) -> np.ndarray:
        if part == FULL:
            return self.mu_full
        return self.mu_pos if part == POS else self.mu_neg


def _full_moments(mean: np.ndarray, inv2l: np.ndarray, order: int) -> np.ndarray:
    m = np.empty((mean.shape[0], order + 1))
    m[:, 0] = 1.0
    m[:, 1] = mean
    for k in range(1, order):
        m[:, k + 1] = mean * m[:, k] + k * inv2l * m[:, k - 1]
    return m


def _half_moments(mean, inv2l, m0, m1_extra, order) -> np.ndarray:
    m = np.empty((mean.shape[0], order + 1))
    m[:, 0] = m0
    m[:, 1] = mean * m0 + m1_extra
    for k in range(1, order):
        m[:, k + 1] = mean * m[:, k] + k * inv2l * m[:, k - 1]
    return m


class MomentWork:
    """Memoized psi-moment assembly over one MomentTable."""

    def __init__(self, table: MomentTable):
        self.t = table
        self._scalar: dict = {}
        self._psi: dict = {}
        self._stack: dict = {}

    def uvx(self, a: int, b: int, g: int, part: int) -> np.ndarray:
        """<u^a v^b xi^{2g}> over the requested u range, per unit density."""
        key = (a, b, g, part)
        out = self._scalar.get(key)
        if out is None:
            assert 0 <= a <= U_ORDER and 0 <= b <= V_ORDER and 0 <= g <= XI_ORDER
            out = self.t.u_moments(part)[:, a] * self.t.mv_full[:, b] * self.t.xi[:, g]
            self._scalar[key] = out
        return out

    def psi(self, a: int, b: int, g: int, part: int) -> np.ndarray:
        """(N, 4) moments <u^a v^b xi^{2g} psi>."""
        key = (a, b, g, part)
        out = self._psi.get(key)
        if out is None:
            out = np.empty((self.t.rho.shape[0], 4))
            out[:, 0] = self.uvx(a, b, g, part)
            out[:, 1] = self.uvx(a + 1, b, g, part)
            out[:, 2] = self.uvx(a, b + 1, g, part)
            out[:, 3] = self.uvx(a + 2, b, g, part)
            out[:, 3] += self.uvx(a, b + 2, g, part)
            out[:, 3] += self.uvx(a, b, g + 1, part)
            out[:, 3] *= 0.5
            self._psi[key] = out
        return out

    def _psi_shifts(self, a: int, b: int, g: int, part: int) -> np.ndarray:
        """(N, 4, 4) psi moments at the index shifts a slope introduces.

        The three 0.5-weighted second-order shifts are pre-summed into the
        last slot so a raw slope vector contracts directly.
        """
        key = (a, b, g, part)
        out = self._stack.get(key)
        if out is None:
            out = np.empty((self.t.rho.shape[0], 4, 4))
            out[:, 0] = self.psi(a, b, g, part)
            out[:, 1] = self.psi(a + 1, b, g, part)
            out[:, 2] = self.psi(a, b + 1, g, part)
            out[:, 3] = self.psi(a + 2, b, g, part)
            out[:, 3] += self.psi(a, b + 2, g, part)
            out[:, 3] += self.psi(a, b, g + 1, part)
            out[:, 3] *= 0.5
            self._stack[key] = out
        return out

    def slope_psi(self, c: np.ndarray, a: int, b: int, g: int, part: int) -> np.ndarray:
        """(N, 4) moments <s u^a v^b xi^{2g} psi> for microslope s = c . psi."""
        return np.einsum("nm,nmk->nk", c, self._psi_shifts(a, b, g, part))

    def slope2_psi(self, c1, c2, a: int, b: int, g: int, part: int) -> np.ndarray:
        """(N, 4) moments of a product of two microslopes times u^a v^b xi^{2g} psi."""
        out = c1[:, 0:1] * self.slope_psi(c2, a, b, g, part)
        out += c1[:, 1:2] * self.slope_psi(c2, a + 1, b, g, part)
        out += c1[:, 2:3] * self.slope_psi(c2, a, b + 1, g, part)
        acc = self.slope_psi(c2, a + 2, b, g, part)
        acc += self.slope_psi(c2, a, b + 2, g, part)
        acc += self.slope_psi(c2, a, b, g + 1, part)
        acc *= 0.5
        out += c1[:, 3:4] * acc
        return out

    def conserved(self, part: int) -> np.ndarray:
        """(N, 4) moments <psi> over the requested range (per unit density)."""
        return self.psi(0, 0, 0, part)


def solve_microslope(prim: np.ndarray, rhs: np.ndarray, K: float) -> np.ndarray:
    """Solve <s psi> = rhs for the microslope s = c . psi; returns c, (N, 4).

    rhs is per unit density (divide conserved-variable derivatives by rho
    before calling).  The 4x4 moment system is factorized exactly through
    the fluid rest frame, where it is arrow-shaped and well conditioned:
    shifting u -> u + U maps psi linearly, so M = T M0 T^T with T a shear.
    """
    prim = np.atleast_2d(np.asarray(prim, dtype=float))
    rhs = np.atleast_2d(np.asarray(rhs, dtype=float))
    u, v, lam = prim[:, 1], prim[:, 2], prim[:, 3]
    q = 0.5 * (u * u + v * v)

    r1 = rhs[:, 0]
    r2 = rhs[:, 1] - u * rhs[:, 0]
    r3 = rhs[:, 2] - v * rhs[:, 0]
    r4 = rhs[:, 3] - u * rhs[:, 1] - v * rhs[:, 2] + q * rhs[:, 0]

    # rest-frame system: [[1, e0], [e0, q0]] couples (1, psi4); u,v rows decouple
    e0 = (K + 2.0) / (4.0 * lam)
    det = (K + 2.0) / (8.0 * lam * lam)
    c4 = (r4 - e0 * r1) / det
    c1t = r1 - e0 * c4
    c2t = 2.0 * lam * r2
    c3t = 2.0 * lam * r3

    out = np.empty_like(rhs)
    out[:, 0] = c1t - u * c2t - v * c3t + q * c4
    out[:, 1] = c2t - u * c4
    out[:, 2] = c3t - v * c4
    out[:, 3] = c4
    return out


def moment_matrix(prim: np.ndarray, K: float) -> np.ndarray:
    """(N, 4, 4) matrix M_ij = <psi_i psi_j> per unit density.

    Used for verification (multiply-back residuals); the solver itself
    goes through the rest-frame factorization.
    """
    work = MomentWork(MomentTable(prim, K))
    cols = [
        work.psi(0, 0, 0, FULL),
        work.psi(1, 0, 0, FULL),
        work.psi(0, 1, 0, FULL),
        0.5 * (work.psi(2, 0, 0, FULL) + work.psi(0, 2, 0, FULL) + work.psi(0, 0, 1, FULL)),
    ]
    return np.stack(cols, axis=-1)


def merge_half_states(prim_l: np.ndarray, prim_r: np.ndarray, K: float) -> np.ndarray:
    """Conserved moments of the state assembled from the u > 0 range of the
    left Maxwellian and the u < 0 range of the right one, (N, 4).

    Needs only erfc-seeded moments through u^2, so it is much cheaper than
    building full moment tables for batches of interface points.
    """
    out = np.zeros((prim_l.shape[0], 4))
    for prim, sgn in ((prim_l, 1.0), (prim_r, -1.0)):
        rho, u, v, lam = prim[:, 0], prim[:, 1], prim[:, 2], prim[:, 3]
        rt = np.sqrt(lam)
        t0 = 0.5 * erfc(-sgn * rt * u)
        s = sgn * np.exp(-lam * u * u) / (2.0 * np.sqrt(np.pi * lam))
        t1 = u * t0 + s
        t2 = u * t1 + t0 / (2.0 * lam)
        out[:, 0] += rho * t0
        out[:, 1] += rho * t1
        out[:, 2] += rho * v * t0
        out[:, 3] += rho * 0.5 * (t2 + t0 * (v * v + (K + 1.0) / (2.0 * lam)))
    return out
