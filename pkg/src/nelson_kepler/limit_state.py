"""Fields of the Bohr correspondence limit (n -> inf, epsilon -> 0, n epsilon^2 = lam fixed).

Everything is built from alpha + i beta = sqrt(1 - 4/nu) (principal root).
The cartesian drift is evaluated from the real closed form for alpha and
beta; the divergence, speed and invariant density use their closed forms in
Keplerian elliptic coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import coords
from .core import DomainError, SingularityError, singular_segment

ORIGIN_TOL = 1e-300


def _split(p):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] not in (2, 3):
        raise ValueError(f"points must have 2 or 3 components, got shape {p.shape}")
    x, y = p[..., 0], p[..., 1]
    z = p[..., 2] if p.shape[-1] == 3 else np.zeros_like(x)
    return p, x, y, z


def nu_limit(params, p):
    """nu = (mu/lam^2)(|x| - x/e - i y sqrt(1-e^2)/e) for planar or spatial points."""
    _, x, y, z = _split(p)
    r = np.sqrt(x * x + y * y + z * z)
    return params.mu / params.lam**2 * (r - x / params.e - 1j * y * params.sqrt1me2 / params.e)


def _alpha_beta_raw(params, x, y, z):
    """Alpha/beta from the real closed form; NaN where undefined (on the singular set)."""
    mu, lam, e = params.mu, params.lam, params.e
    se2 = 1 - e * e
    r = np.sqrt(x * x + y * y + z * z)
    g = e * r - x
    den = g * g + se2 * y * y
    q = lam**2 * e / mu
    with np.errstate(divide="ignore", invalid="ignore"):
        a1 = ((g - 4 * q) ** 2 + se2 * y * y) / den
        a2 = ((g - 2 * q) ** 2 + se2 * y * y - 4 * q * q) / den
        # Im(1 - 4/nu); equals 2 alpha beta
        im = -4 * q * math.sqrt(se2) * y / den
        mod = np.sqrt(a1)
        # cancellation-free principal square root of a2 + i*im (|.| = mod)
        alpha = np.where(a2 >= 0, np.sqrt(0.5 * (mod + a2)), np.abs(im) / np.sqrt(2 * (mod - a2)))
        beta = im / (2 * alpha)
    return alpha, beta


def _on_sigma3(params, x, y, z):
    """Closed singular set in space: y = 0 and e r - 4a e <= x <= e r (includes nu = 0)."""
    e, a = params.e, params.a
    r = np.sqrt(x * x + y * y + z * z)
    return (y == 0) & (x >= e * r - 4 * a * e) & (x <= e * r)


def _guard(params, x, y, z, strict, what):
    bad = _on_sigma3(params, x, y, z) | ~np.isfinite(x) | ~np.isfinite(y) | ~np.isfinite(z)
    if strict and np.any(bad):
        raise DomainError(f"{what} undefined on the closed singular set or at the origin")
    return bad


def alpha_beta_cartesian(params, p, strict=True):
    _, x, y, z = _split(p)
    bad = _guard(params, x, y, z, strict, "alpha/beta")
    alpha, beta = _alpha_beta_raw(params, x, y, z)
    alpha = np.where(bad, np.nan, alpha)
    beta = np.where(bad, np.nan, beta)
    return coords.AlphaBeta(alpha, beta)


def z_field_limit(params, p, strict=True):
    """Complex limiting field Z = -i eps^2 grad(psi)/psi, shape (..., 3)."""
    p, x, y, z = _split(p)
    bad = _guard(params, x, y, z, strict, "Z")
    alpha, beta = _alpha_beta_raw(params, x, y, z)
    s = alpha + 1j * beta
    mu, lam, e = params.mu, params.lam, params.e
    r = np.sqrt(x * x + y * y + z * z)
    radial = 1j * mu / (2 * lam) * (1 + s) / r
    tang = mu / (2 * lam * e) * (1 - s)
    out = np.stack(
        [radial * x + 1j * tang, radial * y - math.sqrt(1 - e * e) * tang, radial * z], axis=-1
    )
    return np.where(bad[..., None], np.nan + 0j, out)


def _drift_raw(params, x, y, z):
    alpha, beta = _alpha_beta_raw(params, x, y, z)
    mu, lam, e = params.mu, params.lam, params.e
    c = mu / (2 * lam)
    r = np.sqrt(x * x + y * y + z * z)
    apb1 = alpha + beta + 1
    bx = c * ((alpha + beta - 1) / e - apb1 * x / r)
    by = c * ((alpha - beta - 1) * math.sqrt(1 - e * e) / e - apb1 * y / r)
    bz = -c * apb1 * z / r
    return bx, by, bz


def drift_point(mu, lam, e, x, y, z=0.0):
    """Scalar drift (bx, by, bz) with plain floats; used by the single-path integrators.

    Returns NaNs where the drift is undefined instead of raising.
    """
    se2 = 1 - e * e
    r = math.sqrt(x * x + y * y + z * z)
    g = e * r - x
    den = g * g + se2 * y * y
    if den == 0.0 or r == 0.0:
        return math.nan, math.nan, math.nan
    q = lam * lam * e / mu
    a1 = ((g - 4 * q) ** 2 + se2 * y * y) / den
    a2 = ((g - 2 * q) ** 2 + se2 * y * y - 4 * q * q) / den
    im = -4 * q * math.sqrt(se2) * y / den
    mod = math.sqrt(a1)
    if a2 >= 0:
        alpha = math.sqrt(0.5 * (mod + a2))
    else:
        alpha = abs(im) / math.sqrt(2 * (mod - a2))
    if alpha == 0.0:
        return math.nan, math.nan, math.nan
    beta = im / (2 * alpha)
    c = mu / (2 * lam)
    apb1 = alpha + beta + 1
    return (
        c * ((alpha + beta - 1) / e - apb1 * x / r),
        c * ((alpha - beta - 1) * math.sqrt(se2) / e - apb1 * y / r),
        -c * apb1 * z / r,
    )


def drift3(params, p, strict=True):
    p, x, y, z = _split(p)
    if p.shape[-1] != 3:
        raise ValueError("drift3 needs (..., 3) points")
    bad = _guard(params, x, y, z, strict, "drift")
    out = np.stack(_drift_raw(params, x, y, z), axis=-1)
    return np.where(bad[..., None], np.nan, out)


def drift2(params, p, strict=True):
    p, x, y, z = _split(p)
    if p.shape[-1] != 2:
        raise ValueError("drift2 needs (..., 2) points")
    bad = _guard(params, x, y, z, strict, "drift")
    bx, by, _ = _drift_raw(params, x, y, z)
    out = np.stack([bx, by], axis=-1)
    return np.where(bad[..., None], np.nan, out)


@dataclass(frozen=True)
class RSValue:
    """eps^2 R and eps^2 S of the limiting wave function (both independent of eps)."""

    r_val: np.ndarray | float
    s_val: np.ndarray | float


def rs_functions(params, p, strict=True):
    p, x, y, z = _split(p)
    bad = _guard(params, x, y, z, strict, "R/S")
    mu, lam, e = params.mu, params.lam, params.e
    r = np.sqrt(x * x + y * y + z * z)
    at = mu / lam**2 * (r - x / e)
    bt = -mu * y * math.sqrt(1 - e * e) / (lam**2 * e)
    if strict and np.any((at == 0) & (bt == 0)):
        raise DomainError("R/S undefined where nu = 0")
    alpha, beta = _alpha_beta_raw(params, x, y, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        r_val = 0.5 * lam * (
            np.log(at * at + bt * bt)
            + 2 * np.log((1 + alpha) ** 2 + beta**2)
            + (1 - alpha) * at
            + beta * bt
        ) - mu * r / lam
        s_val = lam * (
            np.arctan2(bt, at)
            + 2 * np.arctan2(beta, 1 + alpha)
            + 0.5 * bt * (1 - alpha)
            - 0.5 * beta * at
        )
    r_val = np.where(bad, np.nan, r_val)
    s_val = np.where(bad, np.nan, s_val)
    return RSValue(r_val, s_val)


def _phi(params, pts, eps):
    rs = rs_functions(params, pts, strict=False)
    return (rs.r_val - rs.s_val) / eps**2


def similarity_residual(params, p, epsilon=1.0, h=1e-4):
    """H~ psi~ / psi~ for psi~ = exp(R - S) and H~ = (-eps^4 Lap + b^2 + eps^2 div b) / 2.

    The Laplacian of psi~ comes from second-order central differences of
    log psi~ (step ``h * a``); b^2 and div b use their closed forms.  Planar
    points only, away from the branch cut of S on the positive x axis.
    """
    p = np.asarray(p, dtype=float)
    eps = epsilon
    step = h * params.a
    ex = np.array([step, 0.0])
    ey = np.array([0.0, step])
    f0 = _phi(params, p, eps)
    fxp, fxm = _phi(params, p + ex, eps), _phi(params, p - ex, eps)
    fyp, fym = _phi(params, p + ey, eps), _phi(params, p - ey, eps)
    lap = (fxp + fxm + fyp + fym - 4 * f0) / step**2
    grad2 = ((fxp - fxm) / (2 * step)) ** 2 + ((fyp - fym) / (2 * step)) ** 2
    b2 = speed_sq(params, p)
    div = divergence(params, p)
    return 0.5 * (-(eps**4) * (lap + grad2) + b2 + eps**2 * div)


# --- invariant density ------------------------------------------------------


def _require_eps(params, epsilon):
    eps = params.epsilon if epsilon is None else epsilon
    if not eps > 0:
        raise DomainError("the invariant density needs epsilon > 0")
    return eps


def log_invariant_density_uv(params, u, v, epsilon=None):
    """log exp(2 R_eps) at Keplerian coordinates (u, v), u < 1."""
    eps = _require_eps(params, epsilon)
    u = coords._check_uv(params, u)
    v = np.asarray(v, dtype=float)
    e, a, mu, lam = params.e, params.a, params.mu, params.lam
    s = np.sqrt((1 - e * e) * (1 - u * u))
    k = lam / eps**2
    return (
        k * math.log(16.0)
        + 2 * k * np.log((1 + e * u + s) / (e + u))
        + 2 * a * mu * (u - e + (e * u - 1 + s) * np.cos(v)) / ((e + u) * eps**2 * lam)
    )


def invariant_density_uv(params, u, v, epsilon=None):
    """Unnormalised invariant density exp(2 R_eps) in (u, v)."""
    return np.exp(log_invariant_density_uv(params, u, v, epsilon))


def log_invariant_density_grad_uv(params, u, v, epsilon=None):
    """Analytic (d/du, d/dv) of log exp(2 R_eps); u must be < 1."""
    eps = _require_eps(params, epsilon)
    u = coords._check_uv(params, u)
    if np.any(u >= 1):
        raise SingularityError("density gradient is unbounded on u = 1")
    v = np.asarray(v, dtype=float)
    e, a, mu, lam = params.e, params.a, params.mu, params.lam
    s = np.sqrt((1 - e * e) * (1 - u * u))
    ds = -(1 - e * e) * u / s
    k = lam / eps**2
    m = 2 * a * mu / (eps**2 * lam)
    num = u - e + (e * u - 1 + s) * np.cos(v)
    dnum = 1 + (e + ds) * np.cos(v)
    d_u = 2 * k * ((e + ds) / (1 + e * u + s) - 1 / (e + u)) + m * (dnum * (e + u) - num) / (e + u) ** 2
    d_v = -m * (e * u - 1 + s) * np.sin(v) / (e + u)
    return np.broadcast_arrays(d_u, d_v)


def peak_density(params, epsilon=None):
    """The constant maximum (16/e^2)^(lam/eps^2) attained on the Kepler ellipse."""
    eps = _require_eps(params, epsilon)
    return (16.0 / params.e**2) ** (params.lam / eps**2)


def invariant_density_limit(params, p=None, u=None, v=None, epsilon=None, strict=True):
    """exp(2 R_eps) at planar points ``p`` or at coordinates (u, v)."""
    if p is not None:
        u, v = coords.from_cartesian(params, p, strict=strict)
    return invariant_density_uv(params, u, v, epsilon)


def normalized_density_grid(params, nx=201, ny=201, box=None, epsilon=None):
    """Invariant density normalised by the trapezoid rule on a box (default [-3a, 2a]^2).

    Returns ``(xs, ys, rho)`` with ``rho[j, i]`` at ``(xs[i], ys[j])``.  Grid
    nodes on the singular segment get the limit value from the y > 0 side.
    """
    a = params.a
    xmin, xmax, ymin, ymax = box if box is not None else (-3 * a, 2 * a, -3 * a, 2 * a)
    xs = np.linspace(xmin, xmax, nx)
    ys = np.linspace(ymin, ymax, ny)
    X, Y = np.meshgrid(xs, ys)
    pts = np.stack([X, Y], axis=-1)
    seg = singular_segment(params)
    on = seg.contains(pts, closed=True)
    # the density is continuous across the segment; nudge grid nodes lying on it
    pts = np.where(on[..., None], pts + np.array([0.0, 1e-9 * a]), pts)
    u, v = coords.from_cartesian(params, pts, strict=False)
    logd = log_invariant_density_uv(params, np.where(np.isnan(u), 0.0, u), np.nan_to_num(v), epsilon)
    logd = np.where(np.isnan(u), -np.inf, logd)
    w = np.exp(logd - np.max(logd))
    total = np.trapezoid(np.trapezoid(w, xs, axis=1), ys)
    return xs, ys, w / total


# --- divergence and speed ---------------------------------------------------


def divergence_uv(params, u, v):
    u = coords._check_uv(params, u)
    if np.any(u >= 1):
        raise SingularityError("divergence has a jump across u = 1")
    v = np.asarray(v, dtype=float)
    e, a, mu, lam = params.e, params.a, params.mu, params.lam
    s = np.sqrt((1 - e * e) * (1 - u * u))
    cv, sv = np.cos(v), np.sin(v)
    den1 = u * cv - 1
    den2 = e * u + (e + u) * cv + 1
    return mu * (e + u) * (e * u + (e + u) * (cv + sv) + s + 1) / (4 * a * e * lam * den1 * den2)


def speed_sq_uv(params, u, v):
    u = coords._check_uv(params, u)
    v = np.asarray(v, dtype=float)
    e, a, mu = params.e, params.a, params.mu
    s = np.sqrt((1 - e * e) * (1 - u * u))
    den = u * np.cos(v) - 1
    if np.any(np.abs(den) < coords.DENOM_TOL):
        raise SingularityError("speed is unbounded at the origin")
    return mu * (e * np.cos(v) + 1) * (s - 1) / (a * e * e * den)


def divergence(params, p, strict=True):
    u, v = coords.from_cartesian(params, p, strict=strict)
    ok = ~np.isnan(u)
    out = divergence_uv(params, np.where(ok, u, 0.0), np.where(ok, v, 0.0))
    return np.where(ok, out, np.nan) if np.ndim(out) else (float(out) if ok else math.nan)


def speed_sq(params, p, strict=True):
    u, v = coords.from_cartesian(params, p, strict=strict)
    ok = ~np.isnan(u)
    out = speed_sq_uv(params, np.where(ok, u, 0.0), np.where(ok, v, 0.0))
    return np.where(ok, out, np.nan) if np.ndim(out) else (float(out) if ok else math.nan)


def speed_minimum(params):
    """Location and value of the unique global minimum of |b|^2."""
    e, a, mu = params.e, params.a, params.mu
    return np.array([-4 * a / ((1 + e) * (2 - e)), 0.0]), (1 - e) * mu / (2 * a)


# --- singular set -----------------------------------------------------------


@dataclass(frozen=True)
class SingularRegion3D:
    """Spatial singular set: the part of the plane y = 0 with x_lo(z) < x < x_hi(z)."""

    e: float
    a: float

    def x_bounds(self, z):
        e, a = self.e, self.a
        z = np.asarray(z, dtype=float)
        root = np.sqrt((16 * a * a - z * z) * e * e + z * z)
        # -e (4a - root) / (1 - e^2), rationalised to avoid cancellation
        lo = -e * (16 * a * a - z * z) / (4 * a + root)
        hi = np.sqrt(e * e * z * z / (1 - e * e))
        return lo, hi

    def contains(self, p, closed=False):
        p = np.asarray(p, dtype=float)
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        lo, hi = self.x_bounds(z)
        if closed:
            return (y == 0) & (x >= lo) & (x <= hi)
        return (y == 0) & (x > lo) & (x < hi)

    def boundary(self, zmax=2.0, num=101):
        """Samples (x, 0, z) of the lower and upper boundary curves for |z| <= zmax."""
        z = np.linspace(-zmax, zmax, num)
        lo, hi = self.x_bounds(z)
        zero = np.zeros_like(z)
        return np.stack([lo, zero, z], -1), np.stack([hi, zero, z], -1)

    def distance(self, p):
        """Distance from spatial point(s) to the region, with the in-plane part to first order.

        Outside the region in the (x, z) plane the gap is estimated by the
        level-set distance |g| / |grad g| of whichever boundary is violated.
        """
        p = np.asarray(p, dtype=float)
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        e, a = self.e, self.a
        rho = np.maximum(np.hypot(x, z), 1e-300)
        g_lo = x + 4 * a * e - e * rho
        g_hi = e * rho - x
        n_lo = np.hypot(1 - e * x / rho, e * z / rho)
        n_hi = np.hypot(e * x / rho - 1, e * z / rho)
        gap = np.maximum(np.maximum(-g_lo / n_lo, -g_hi / n_hi), 0.0)
        return np.hypot(y, gap)


def singularity_set(params, dim=2):
    if dim == 2:
        return singular_segment(params)
    if dim == 3:
        return SingularRegion3D(params.e, params.a)
    raise ValueError("dim must be 2 or 3")
