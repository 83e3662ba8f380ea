"""Blasius similarity profile for the zero-pressure-gradient laminar
boundary layer: f''' + f f'' / 2 = 0, f(0) = f'(0) = 0, f'(inf) = 1.

Solved by shooting on the wall curvature with a high-order integrator.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

ETA_MAX = 12.0


def _rhs(eta, y):
    f, fp, fpp = y
    return [fp, fpp, -0.5 * f * fpp]


def _shoot(fpp0, dense=False):
    sol = solve_ivp(
        _rhs,
        (0.0, ETA_MAX),
        [0.0, 0.0, fpp0],
        method="DOP853",
        rtol=1e-12,
        atol=1e-12,
        dense_output=dense,
    )
    return sol


def wall_curvature() -> float:
    """f''(0) matching the free-stream condition."""
    return brentq(lambda s: _shoot(s).y[1, -1] - 1.0, 0.2, 0.5, xtol=1e-14)


def blasius_profile(eta):
    """f, f', f'' sampled at the given similarity coordinates."""
    eta = np.asarray(eta, dtype=float)
    sol = _shoot(wall_curvature(), dense=True)
    vals = sol.sol(np.clip(eta, 0.0, ETA_MAX))
    f, fp, fpp = vals
    # beyond the integration window the profile is linear with slope 1
    far = eta > ETA_MAX
    if np.any(far):
        f = np.where(far, f + (eta - ETA_MAX), f)
        fp = np.where(far, 1.0, fp)
        fpp = np.where(far, 0.0, fpp)
    return f, fp, fpp
