"""The finite-n atomic elliptic state psi = exp(-n mu |x| / lam^2) L_{n-1}(n nu).

L_k are the standard Laguerre polynomials (L_1(z) = 1 - z).  They are never
expanded into monomials: values come from the upward three-term recurrence
with the pair (L_{k-1}, L_k) rescaled at every step, and the log-derivative
from  z L'_m = m (L_m - L_{m-1}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_laguerre

from .core import DomainError, PoleError

POLE_TOL = 1e-12
SMALL_Z = 1e-6


@dataclass(frozen=True)
class NuValue:
    re: np.ndarray | float
    im: np.ndarray | float

    @property
    def value(self):
        return self.re + 1j * self.im


def _point3(p):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] == 2:
        p = np.concatenate([p, np.zeros(p.shape[:-1] + (1,))], axis=-1)
    if p.shape[-1] != 3:
        raise ValueError(f"points must have 2 or 3 components, got shape {p.shape}")
    return p


def nu(params, p):
    p = _point3(p)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    r = np.sqrt(x * x + y * y + z * z)
    if np.any(r == 0):
        raise DomainError("nu is undefined at the origin")
    k = params.mu / params.lam**2
    e = params.e
    return NuValue(k * (r - x / e), -k * y * params.sqrt1me2 / e)


def _scaled_pair(m, z):
    """Upward recurrence for (L_{m-1}(z), L_m(z), L'_m(z)) with a shared running scale.

    Returns the rescaled triple and log(scale) so that the true values are
    ``triple * exp(log_scale)``.  m >= 1.
    """
    z = np.asarray(z, dtype=complex)
    prev = np.ones_like(z)  # L_0
    cur = 1 - z  # L_1
    dprev = np.zeros_like(z)  # L_0'
    dcur = -np.ones_like(z)  # L_1'
    log_scale = np.zeros(z.shape)
    for k in range(2, m + 1):
        nxt = ((2 * k - 1 - z) * cur - (k - 1) * prev) / k
        dnxt = dcur - cur
        prev, cur, dprev, dcur = cur, nxt, dcur, dnxt
        s = np.maximum(np.abs(prev), np.abs(cur))
        s = np.where(s > 0, s, 1.0)
        prev, cur, dprev, dcur = prev / s, cur / s, dprev / s, dcur / s
        log_scale = log_scale + np.log(s)
    return prev, cur, dcur, log_scale


def laguerre_log_abs(m, z):
    """log |L_m(z)| without overflow."""
    z = np.asarray(z, dtype=complex)
    if m == 0:
        return np.zeros(z.shape)
    _, cur, _, log_scale = _scaled_pair(m, z)
    with np.errstate(divide="ignore"):
        return np.log(np.abs(cur)) + log_scale


def laguerre_ratio(n, z, strict=True):
    """L'_{n-1}(z) / L_{n-1}(z).

    Raises ``PoleError`` where |L_{n-1}(z)| falls below 1e-12 of the running
    scale max(|L_{n-2}|, |L_{n-1}|); with ``strict=False`` those entries are NaN.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    z = np.asarray(z, dtype=complex)
    m = n - 1
    if m == 0:
        return np.zeros(z.shape, dtype=complex)
    prev, cur, dcur, _ = _scaled_pair(m, z)
    scale = np.maximum(np.abs(prev), np.abs(cur))
    pole = np.abs(cur) < POLE_TOL * scale
    if strict and np.any(pole):
        raise PoleError(f"L_{m} vanishes at the argument (node of the wave function)")
    with np.errstate(divide="ignore", invalid="ignore"):
        via_identity = m * (cur - prev) / (z * cur)
        via_derivative = dcur / cur
    small = np.abs(z) < SMALL_Z * max(1, m)
    out = np.where(small, via_derivative, via_identity)
    return np.where(pole, np.nan + 0j, out)


def laguerre_ratio_limit(nu_value):
    """Large-n limit of L'_{n-1}(n nu)/L_{n-1}(n nu): (1 - sqrt(1 - 4/nu)) / 2."""
    nu_value = np.asarray(nu_value, dtype=complex)
    return 0.5 * (1 - np.sqrt(1 - 4 / nu_value))


def _require_n(params):
    if params.n is None:
        raise DomainError("the exact state needs a quantum number n")
    return params.n


def z_field_exact(params, p, strict=True):
    """Z_{eps,n} = -i eps^2 grad(psi)/psi, complex array of shape (..., 3)."""
    n = _require_n(params)
    p = _point3(p)
    nv = nu(params, p).value
    rho = laguerre_ratio(n, n * nv, strict=strict)
    mu, lam, e = params.mu, params.lam, params.e
    r = np.linalg.norm(p, axis=-1)
    radial = 1j * mu / lam * (1 - rho) / r
    tang = mu / (lam * e) * rho
    return np.stack(
        [radial * p[..., 0] + 1j * tang, radial * p[..., 1] - params.sqrt1me2 * tang, radial * p[..., 2]],
        axis=-1,
    )


def drift_exact(params, p, strict=True):
    """b_{eps,n} = Re Z - Im Z."""
    zf = z_field_exact(params, p, strict=strict)
    return zf.real - zf.imag


def log_invariant_density_exact(params, p):
    """log of the unnormalised density exp(-2 n mu |x| / lam^2) |L_{n-1}(n nu)|^2."""
    n = _require_n(params)
    p = _point3(p)
    nv = nu(params, p).value
    r = np.linalg.norm(p, axis=-1)
    return -2 * n * params.mu * r / params.lam**2 + 2 * laguerre_log_abs(n - 1, n * nv)


def invariant_density_exact(params, p):
    return np.exp(log_invariant_density_exact(params, p))


@dataclass(frozen=True)
class NodalCurveSet:
    """Nodal hyperbolas of psi in the plane y = 0.

    Curve k is (mu/lam^2)(sqrt(x^2 + z^2) - x/e) = roots[k]/n: a hyperbola
    branch with eccentricity 1/e and focus at the origin.
    """

    n: int
    roots: np.ndarray
    e: float
    mu: float
    lam: float

    @property
    def eccentricity(self):
        return 1.0 / self.e

    def focal_parameter(self, k):
        """d_k in sqrt(x^2 + z^2) = x/e + d_k."""
        return self.lam**2 * self.roots[k] / (self.n * self.mu)

    def sample(self, k, num=200, rmax=None):
        """(x, z) samples of curve k, by polar angle about the focus."""
        d = self.focal_parameter(k)
        th0 = math.acos(self.e)
        th = np.linspace(th0, 2 * math.pi - th0, num + 2)[1:-1]
        r = d / (1 - np.cos(th) / self.e)
        if rmax is not None:
            keep = r <= rmax
            th, r = th[keep], r[keep]
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)


def laguerre_value(m, z):
    """L_m(z) via the rescaled recurrence."""
    z = np.asarray(z, dtype=complex)
    if m == 0:
        return np.ones(z.shape, dtype=complex)
    _, cur, _, log_scale = _scaled_pair(m, z)
    return cur * np.exp(log_scale)


def laguerre_roots(m, polish=3):
    """The m positive roots of L_m, Golub-Welsch nodes polished by Newton on the recurrence."""
    x, _ = roots_laguerre(m)
    x = x.astype(float)
    for _ in range(polish):
        prev, cur, dcur, _ = _scaled_pair(m, x)
        x = x - (cur / dcur).real
    return x


def nodal_curves(params):
    n = _require_n(params)
    if n < 2:
        raise DomainError("nodal curves need n >= 2")
    return NodalCurveSet(n=n, roots=laguerre_roots(n - 1), e=params.e, mu=params.mu, lam=params.lam)
