"""Exact solver for the 1D Riemann problem of the compressible Euler
equations (ideal gas), used for reference solutions and shock-tube setup.

States are (rho, u, p) along the x axis; the transverse velocity is
passively advected with the contact and handled by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError


def _f_side(p, rho_k, p_k, a_k, gamma):
    """Velocity jump across the left or right wave and its dp derivative."""
    p = np.asarray(p, dtype=float)
    ak_coef = 2.0 / ((gamma + 1.0) * rho_k)
    bk = (gamma - 1.0) / (gamma + 1.0) * p_k
    shock = p > p_k
    sq = np.sqrt(ak_coef / (p + bk))
    f_shock = (p - p_k) * sq
    df_shock = sq * (1.0 - 0.5 * (p - p_k) / (bk + p))
    pr = np.maximum(p, 1e-300) / p_k
    ex = (gamma - 1.0) / (2.0 * gamma)
    f_rare = 2.0 * a_k / (gamma - 1.0) * (pr**ex - 1.0)
    df_rare = pr ** (-(gamma + 1.0) / (2.0 * gamma)) / (rho_k * a_k)
    return np.where(shock, f_shock, f_rare), np.where(shock, df_shock, df_rare)


@dataclass(frozen=True)
class RiemannSolution:
    rho_l: float
    u_l: float
    p_l: float
    rho_r: float
    u_r: float
    p_r: float
    gamma: float
    p_star: float
    u_star: float
    rho_star_l: float
    rho_star_r: float

    def sample(self, xi):
        """State (rho, u, p) along rays x/t = xi; vectorized."""
        xi = np.asarray(xi, dtype=float)
        g = self.gamma
        gm = (g - 1.0) / (g + 1.0)
        rho = np.empty_like(xi)
        u = np.empty_like(xi)
        p = np.empty_like(xi)

        a_l = np.sqrt(g * self.p_l / self.rho_l)
        a_r = np.sqrt(g * self.p_r / self.rho_r)
        left = xi <= self.u_star

        if self.p_star > self.p_l:
            s = self.u_l - a_l * np.sqrt(
                (g + 1.0) / (2.0 * g) * self.p_star / self.p_l + (g - 1.0) / (2.0 * g)
            )
            pre = xi < s
            mid = left & ~pre
            rho[pre], u[pre], p[pre] = self.rho_l, self.u_l, self.p_l
            rho[mid], u[mid], p[mid] = self.rho_star_l, self.u_star, self.p_star
        else:
            a_star = a_l * (self.p_star / self.p_l) ** ((g - 1.0) / (2.0 * g))
            head = self.u_l - a_l
            tail = self.u_star - a_star
            pre = xi < head
            fan = left & ~pre & (xi < tail)
            mid = left & (xi >= tail)
            rho[pre], u[pre], p[pre] = self.rho_l, self.u_l, self.p_l
            rho[mid], u[mid], p[mid] = self.rho_star_l, self.u_star, self.p_star
            c = 2.0 / (g + 1.0) + gm / a_l * (self.u_l - xi[fan])
            rho[fan] = self.rho_l * c ** (2.0 / (g - 1.0))
            u[fan] = 2.0 / (g + 1.0) * (a_l + 0.5 * (g - 1.0) * self.u_l + xi[fan])
            p[fan] = self.p_l * c ** (2.0 * g / (g - 1.0))

        if self.p_star > self.p_r:
            s = self.u_r + a_r * np.sqrt(
                (g + 1.0) / (2.0 * g) * self.p_star / self.p_r + (g - 1.0) / (2.0 * g)
            )
            post = xi > s
            mid = ~left & ~post
            rho[post], u[post], p[post] = self.rho_r, self.u_r, self.p_r
            rho[mid], u[mid], p[mid] = self.rho_star_r, self.u_star, self.p_star
        else:
            a_star = a_r * (self.p_star / self.p_r) ** ((g - 1.0) / (2.0 * g))
            head = self.u_r + a_r
            tail = self.u_star + a_star
            post = xi > head
            fan = ~left & ~post & (xi > tail)
            mid = ~left & (xi <= tail)
            rho[post], u[post], p[post] = self.rho_r, self.u_r, self.p_r
            rho[mid], u[mid], p[mid] = self.rho_star_r, self.u_star, self.p_star
            c = 2.0 / (g + 1.0) - gm / a_r * (self.u_r - xi[fan])
            rho[fan] = self.rho_r * c ** (2.0 / (g - 1.0))
            u[fan] = 2.0 / (g + 1.0) * (-a_r + 0.5 * (g - 1.0) * self.u_r + xi[fan])
            p[fan] = self.p_r * c ** (2.0 * g / (g - 1.0))
        return rho, u, p

    @property
    def left_wave_speeds(self):
        """(head, tail) of the left wave; equal for a shock."""
        g = self.gamma
        a_l = np.sqrt(g * self.p_l / self.rho_l)
        if self.p_star > self.p_l:
            s = self.u_l - a_l * np.sqrt(
                (g + 1.0) / (2.0 * g) * self.p_star / self.p_l + (g - 1.0) / (2.0 * g)
            )
            return s, s
        a_star = a_l * (self.p_star / self.p_l) ** ((g - 1.0) / (2.0 * g))
        return self.u_l - a_l, self.u_star - a_star

    @property
    def right_wave_speeds(self):
        g = self.gamma
        a_r = np.sqrt(g * self.p_r / self.rho_r)
        if self.p_star > self.p_r:
            s = self.u_r + a_r * np.sqrt(
                (g + 1.0) / (2.0 * g) * self.p_star / self.p_r + (g - 1.0) / (2.0 * g)
            )
            return s, s
        a_star = a_r * (self.p_star / self.p_r) ** ((g - 1.0) / (2.0 * g))
        return self.u_star + a_star, self.u_r + a_r


def solve_riemann(left, right, gamma=1.4, tol=1e-12, max_iter=100) -> RiemannSolution:
    """Exact star state by Newton iteration on the pressure function.

    left/right are (rho, u, p).  Falls back to bisection if Newton stalls.
    """
    rho_l, u_l, p_l = (float(v) for v in left)
    rho_r, u_r, p_r = (float(v) for v in right)
    if min(rho_l, rho_r, p_l, p_r) <= 0.0:
        raise NumericalError("nonpositive density or pressure in Riemann data")
    a_l = np.sqrt(gamma * p_l / rho_l)
    a_r = np.sqrt(gamma * p_r / rho_r)
    if 2.0 * (a_l + a_r) / (gamma - 1.0) <= u_r - u_l:
        raise NumericalError("initial states lead to vacuum")

    def f(p):
        fl, dl = _f_side(p, rho_l, p_l, a_l, gamma)
        fr, dr = _f_side(p, rho_r, p_r, a_r, gamma)
        return fl + fr + (u_r - u_l), dl + dr

    # two-rarefaction estimate is a safe positive starting point
    ex = (gamma - 1.0) / (2.0 * gamma)
    p0 = (
        (a_l + a_r - 0.5 * (gamma - 1.0) * (u_r - u_l))
        / (a_l / p_l**ex + a_r / p_r**ex)
    ) ** (1.0 / ex)
    p0 = max(p0, tol * min(p_l, p_r))

    p = p0
    ok = False
    for _ in range(max_iter):
        val, der = f(p)
        step = val / der
        p_new = p - step
        if p_new <= 0.0:
            p_new = 0.5 * p
        if abs(p_new - p) <= tol * (1.0 + abs(p_new)):
            p = p_new
            ok = True
            break
        p = p_new
    if not ok:
        lo, hi = 1e-14 * min(p_l, p_r), 1e6 * max(p_l, p_r)
        for _ in range(200):
            p = 0.5 * (lo + hi)
            if f(p)[0] > 0.0:
                hi = p
            else:
                lo = p
        if hi - lo > 1e-10 * (1.0 + p):
            raise NumericalError("pressure iteration failed to converge")

    p_star = float(p)
    fl, _ = _f_side(p_star, rho_l, p_l, a_l, gamma)
    fr, _ = _f_side(p_star, rho_r, p_r, a_r, gamma)
    u_star = 0.5 * (u_l + u_r) + 0.5 * (fr - fl)

    gm = (gamma - 1.0) / (gamma + 1.0)
    if p_star > p_l:
        r = p_star / p_l
        rho_star_l = rho_l * (r + gm) / (gm * r + 1.0)
    else:
        rho_star_l = rho_l * (p_star / p_l) ** (1.0 / gamma)
    if p_star > p_r:
        r = p_star / p_r
        rho_star_r = rho_r * (r + gm) / (gm * r + 1.0)
    else:
        rho_star_r = rho_r * (p_star / p_r) ** (1.0 / gamma)

    return RiemannSolution(
        rho_l, u_l, p_l, rho_r, u_r, p_r, gamma,
        p_star, float(u_star), float(rho_star_l), float(rho_star_r),
    )
