"""Keplerian elliptic coordinates (u, v).

    x = 2ae (cos v - u) / (e + u),    y = 2ae sqrt(1 - u^2) sin v / (e + u)

with -e < u <= 1 and 0 <= v < 2 pi.  The level set u = e is the Kepler
ellipse, u = 1 is the singular segment (opened out onto the boundary of the
coordinate cylinder: 0 < v < pi approaches it from y > 0, pi < v < 2 pi from
y < 0) and u -> -e is the ellipse at infinity.  The system is not orthogonal
and has no closed-form inverse, so ``from_cartesian`` solves numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConvergenceError, DomainError, SingularityError, singular_segment

TWO_PI = 2.0 * math.pi
SIGMA_U_TOL = 1e-10
DENOM_TOL = 1e-14


def _check_uv(params, u):
    u = np.asarray(u, dtype=float)
    if np.any(~(u > -params.e)) or np.any(u > 1):
        raise DomainError(f"u must lie in (-e, 1] with e={params.e}")
    return u


@dataclass(frozen=True)
class KeplerCoord:
    u: float
    v: float

    def __post_init__(self):
        object.__setattr__(self, "v", float(self.v) % TWO_PI)

    def to_point(self, params):
        return to_cartesian(params, self.u, self.v)

    @classmethod
    def from_point(cls, params, p):
        u, v = from_cartesian(params, p)
        return cls(float(u), float(v))


@dataclass(frozen=True)
class AlphaBeta:
    """Real and imaginary parts of the principal root sqrt(1 - 4/nu); alpha >= 0."""

    alpha: np.ndarray | float
    beta: np.ndarray | float


def to_cartesian(params, u, v):
    u = _check_uv(params, u)
    v = np.asarray(v, dtype=float)
    e, a = params.e, params.a
    k = 2 * a * e / (e + u)
    x = k * (np.cos(v) - u)
    y = k * np.sqrt(1 - u * u) * np.sin(v)
    return np.stack(np.broadcast_arrays(x, y), axis=-1)


def jacobian(params, u, v):
    """Analytic d(x, y)/d(u, v); returns shape (..., 2, 2), rows (x, y), columns (u, v)."""
    u = _check_uv(params, u)
    if np.any(u >= 1):
        raise SingularityError("jacobian is unbounded on u = 1")
    v = np.asarray(v, dtype=float)
    e, a = params.e, params.a
    s1 = np.sqrt(1 - u * u)
    c, s = np.cos(v), np.sin(v)
    k = 2 * a * e
    dxdu = -k * (e + c) / (e + u) ** 2
    dxdv = -k * s / (e + u)
    dydu = -k * s * (1 + e * u) / (s1 * (e + u) ** 2)
    dydv = k * s1 * c / (e + u)
    dxdu, dxdv, dydu, dydv = np.broadcast_arrays(dxdu, dxdv, dydu, dydv)
    return np.stack([np.stack([dxdu, dxdv], -1), np.stack([dydu, dydv], -1)], -2)


def alpha_beta_uv(params, u, v):
    u = _check_uv(params, u)
    v = np.asarray(v, dtype=float)
    e = params.e
    den = 1 + e * u - (e + u) * np.cos(v)
    if np.any(np.abs(den) < DENOM_TOL):
        raise SingularityError("alpha/beta undefined at u = 1, v = 0 (the coordinate centre)")
    alpha = np.sqrt((1 - u * u) * (1 - e * e)) / den
    beta = -(e + u) * np.sin(v) / den
    return AlphaBeta(alpha, beta)


# --- inversion -------------------------------------------------------------
#
# Newton runs in (phi, v) with u = cos(phi), which keeps the map smooth at
# u = 1 where sqrt(1 - u^2) has an infinite derivative.


def _forward_phi(e, a, phi, v):
    c, s = np.cos(phi), np.sin(phi)
    k = 2 * a * e / (e + c)
    return k * (np.cos(v) - c), k * s * np.sin(v)


def _jac_phi(e, a, phi, v):
    c, s = np.cos(phi), np.sin(phi)
    cv, sv = np.cos(v), np.sin(v)
    k = 2 * a * e
    d = e + c
    return (
        k * s * (e + cv) / d**2,
        -k * sv / d,
        k * sv * (e * c + 1) / d**2,
        k * s * cv / d,
    )


def _seed_grid(e):
    u_levels = -e + (1 + e) * np.geomspace(2e-4, 0.999, 8)
    v_levels = np.linspace(0.0, TWO_PI, 8, endpoint=False) + math.pi / 8
    phi, v = np.meshgrid(np.arccos(np.clip(u_levels, -1, 1)), v_levels, indexing="ij")
    return phi.ravel(), v.ravel()


def _on_closed_sigma(params, x, y):
    seg = singular_segment(params)
    return (y == 0) & (x >= seg.x_min_end) & (x <= seg.x_max_end)


def _newton(e, a, x, y, phi, v, scale, tol, max_iter):
    phi_max = math.acos(-e)

    def residual(ph, vv, tx, ty):
        fx, fy = _forward_phi(e, a, ph, vv)
        return fx - tx, fy - ty

    rx, ry = residual(phi, v, x, y)
    rn = np.hypot(rx, ry)
    active = rn > tol * scale
    for _ in range(max_iter):
        if not np.any(active):
            break
        idx = np.nonzero(active)[0]
        j11, j12, j21, j22 = _jac_phi(e, a, phi[idx], v[idx])
        det = j11 * j22 - j12 * j21
        det = np.where(np.abs(det) < 1e-300, 1e-300, det)
        dphi = -(j22 * rx[idx] - j12 * ry[idx]) / det
        dv = -(-j21 * rx[idx] + j11 * ry[idx]) / det
        step = np.ones(idx.size)
        accepted = np.zeros(idx.size, dtype=bool)
        new_phi = phi[idx].copy()
        new_v = v[idx].copy()
        for _ in range(40):
            todo = ~accepted
            if not np.any(todo):
                break
            cand_phi = phi[idx] + step * dphi
            cand_v = v[idx] + step * dv
            flip = cand_phi < 0
            cand_phi = np.where(flip, -cand_phi, cand_phi)
            cand_v = np.where(flip, -cand_v, cand_v)
            cand_phi = np.minimum(cand_phi, phi_max * (1 - 1e-12))
            cx_, cy_ = residual(cand_phi, cand_v, x[idx], y[idx])
            ok = todo & (np.hypot(cx_, cy_) < rn[idx])
            new_phi[ok] = cand_phi[ok]
            new_v[ok] = cand_v[ok]
            accepted |= ok
            step = np.where(accepted, step, 0.5 * step)
        phi[idx] = new_phi
        v[idx] = new_v
        rx[idx], ry[idx] = residual(phi[idx], v[idx], x[idx], y[idx])
        rn[idx] = np.hypot(rx[idx], ry[idx])
        # points with no descent direction stall here and are reseeded by the caller
        active[idx] = accepted & (rn[idx] > tol * scale[idx])
    return phi, v, rn


def _axis_solution(e, a, x):
    """Closed-form (u, v) for points on the x axis off the closed segment."""
    with np.errstate(divide="ignore", invalid="ignore"):
        u_right = e * (2 * a - x) / (x + 2 * a * e)
        u_left = -e * (2 * a + x) / (x + 2 * a * e)
    right = x > 0
    return np.where(right, u_right, u_left), np.where(right, 0.0, math.pi)


def from_cartesian(params, p, strict=True, tol=1e-13, max_iter=100, restarts=8):
    """Invert the coordinate map for planar point(s) ``p`` of shape (..., 2).

    Returns ``(u, v)`` with v in [0, 2 pi).  Points on the closed singular
    segment (including the origin) raise ``DomainError``; with
    ``strict=False`` they, and any non-converged points, come back as NaN.
    Newton is seeded from the nearest node of a coarse 8 x 8 (u, v) grid and
    restarted from the next-nearest nodes if it stalls.
    """
    p = np.asarray(p, dtype=float)
    shape = p.shape[:-1]
    x = p[..., 0].ravel()
    y = p[..., 1].ravel()
    e, a = params.e, params.a

    bad = _on_closed_sigma(params, x, y) | ~np.isfinite(x) | ~np.isfinite(y)
    if strict and np.any(bad):
        raise DomainError("point lies on the closed singular segment (or is the origin)")

    scale = 1.0 + np.hypot(x, y)
    phi = np.zeros(x.size)
    v = np.zeros(x.size)
    rn = np.full(x.size, np.inf)

    axis = ~bad & (y == 0)
    if np.any(axis):
        ua, va = _axis_solution(e, a, x[axis])
        phi[axis] = np.arccos(np.clip(ua, -1, 1))
        v[axis] = va
        rn[axis] = 0.0

    todo = np.nonzero(~bad & ~axis)[0]
    if todo.size:
        sp, sv = _seed_grid(e)
        gx, gy = _forward_phi(e, a, sp, sv)
        d2 = (x[todo, None] - gx[None, :]) ** 2 + (y[todo, None] - gy[None, :]) ** 2
        order = np.argsort(d2, axis=1)
        pending = np.arange(todo.size)
        for rank in range(min(restarts, sp.size)):
            sel = todo[pending]
            ph, vv, r = _newton(
                e, a, x[sel], y[sel], sp[order[pending, rank]].copy(),
                sv[order[pending, rank]].copy(), scale[sel], tol, max_iter,
            )
            better = r < rn[sel]
            phi[sel[better]] = ph[better]
            v[sel[better]] = vv[better]
            rn[sel[better]] = r[better]
            pending = pending[rn[sel] > 1e-10 * scale[sel]]
            if pending.size == 0:
                break

    failed = ~bad & (rn > 1e-10 * scale)
    if strict and np.any(failed):
        worst = float(np.max(rn[failed] / scale[failed]))
        raise ConvergenceError(
            f"coordinate inversion did not converge (best scaled residual {worst:.3e})",
            residual=worst,
        )
    u = np.cos(phi)
    v = np.mod(v, TWO_PI)
    near_sigma = ~bad & (1 - u < SIGMA_U_TOL)
    if strict and np.any(near_sigma):
        raise DomainError("point is numerically on the singular segment (1 - u < 1e-10)")
    invalid = bad | failed | near_sigma
    u = np.where(invalid, np.nan, u)
    v = np.where(invalid, np.nan, v)
    if shape == ():
        return float(u[0]), float(v[0])
    return u.reshape(shape), v.reshape(shape)
