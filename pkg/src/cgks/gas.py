"""Gas model and conversions between conserved and Maxwellian variables.

Conserved state W = (rho, rho*U, rho*V, rho*E) and primitive state
Q = (rho, U, V, lam), where lam = rho/(2 p) is the inverse-temperature
parameter of the equilibrium distribution.  Internal degrees of freedom
K = (4 - 2*gamma)/(gamma - 1) close the 2D model for a given gamma.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidStateError

RHO, MX, MY, EN = 0, 1, 2, 3


@dataclass(frozen=True)
class GasModel:
    """Fluid parameters shared by every kernel call.

    mu is the constant dynamic viscosity; None selects the inviscid
    collision-time model.  tau_eps and tau_c are the coefficients of the
    numerical collision time, prandtl rescales the heat flux when != 1.
    """

    gamma: float = 1.4
    mu: float | None = None
    prandtl: float = 1.0
    tau_eps: float = 0.05
    tau_c: float = 1.0

    @property
    def K(self) -> float:
        return (4.0 - 2.0 * self.gamma) / (self.gamma - 1.0)

    @property
    def viscous(self) -> bool:
        return self.mu is not None


def prim_from_cons(w: np.ndarray, model: GasModel, check: bool = True) -> np.ndarray:
    """Convert conserved (rho, m, n, rhoE) to (rho, U, V, lam).

    Raises InvalidStateError when check is set and any density or internal
    energy is non-positive.
    """
    w = np.asarray(w, dtype=float)
    rho = w[..., RHO]
    u = w[..., MX] / rho
    v = w[..., MY] / rho
    e_int = w[..., EN] - 0.5 * rho * (u * u + v * v)
    if check and (np.any(rho <= 0.0) or np.any(e_int <= 0.0) or not np.all(np.isfinite(w))):
        raise InvalidStateError("non-positive density or internal energy")
    lam = (model.K + 2.0) * rho / (4.0 * e_int)
    return np.stack([rho, u, v, lam], axis=-1)


def cons_from_prim(q: np.ndarray, model: GasModel) -> np.ndarray:
    """Convert (rho, U, V, lam) to conserved variables."""
    q = np.asarray(q, dtype=float)
    rho, u, v, lam = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    rho_e = 0.5 * rho * (u * u + v * v) + (model.K + 2.0) * rho / (4.0 * lam)
    return np.stack([rho, rho * u, rho * v, rho_e], axis=-1)


def cons_from_rho_u_p(rho, u, v, p, model: GasModel) -> np.ndarray:
    """Conserved variables from the (rho, U, V, p) description."""
    rho = np.asarray(rho, dtype=float)
    rho_e = np.asarray(p) / (model.gamma - 1.0) + 0.5 * rho * (np.asarray(u) ** 2 + np.asarray(v) ** 2)
    return np.stack(np.broadcast_arrays(rho, rho * u, rho * v, rho_e), axis=-1)


def pressure(w: np.ndarray, model: GasModel) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    rho = w[..., RHO]
    ke = 0.5 * (w[..., MX] ** 2 + w[..., MY] ** 2) / rho
    return (model.gamma - 1.0) * (w[..., EN] - ke)


def pressure_prim(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q[..., 0] / (2.0 * q[..., 3])


def sound_speed(w: np.ndarray, model: GasModel) -> np.ndarray:
    return np.sqrt(model.gamma * pressure(w, model) / np.asarray(w)[..., RHO])


def is_valid_state(w: np.ndarray) -> np.ndarray:
    """Elementwise validity mask: positive density and internal energy."""
    w = np.asarray(w, dtype=float)
    rho = w[..., RHO]
    with np.errstate(invalid="ignore", divide="ignore"):
        e_int = w[..., EN] - 0.5 * (w[..., MX] ** 2 + w[..., MY] ** 2) / rho
    return (rho > 0.0) & (e_int > 0.0) & np.all(np.isfinite(w), axis=-1)


def euler_flux_x(w: np.ndarray, model: GasModel) -> np.ndarray:
    """Inviscid flux through a face with normal +x (local frame)."""
    w = np.asarray(w, dtype=float)
    rho = w[..., RHO]
    u = w[..., MX] / rho
    p = pressure(w, model)
    return np.stack(
        [w[..., MX], w[..., MX] * u + p, w[..., MY] * u, (w[..., EN] + p) * u],
        axis=-1,
    )


def rotate_cons(w: np.ndarray, cos_t: np.ndarray, sin_t: np.ndarray) -> np.ndarray:
    """Rotate the momentum components of W into the frame at angle theta.

    The normal direction (cos_t, sin_t) becomes the local x axis.
    """
    w = np.asarray(w, dtype=float)
    out = w.copy()
    c = np.asarray(cos_t)
    s = np.asarray(sin_t)
    out[..., MX] = c * w[..., MX] + s * w[..., MY]
    out[..., MY] = -s * w[..., MX] + c * w[..., MY]
    return out


def unrotate_cons(w: np.ndarray, cos_t: np.ndarray, sin_t: np.ndarray) -> np.ndarray:
    """Inverse of rotate_cons."""
    return rotate_cons(w, cos_t, -np.asarray(sin_t))
