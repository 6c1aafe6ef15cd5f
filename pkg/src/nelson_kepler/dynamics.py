"""The epsilon = 0 Keplerian dynamical system dx/dt = b(x).

Covers the flow itself (fixed-step RK4 with singular-set and origin events),
Kepler's laws on the periodic orbit u = e, the trace integral along it, the
curves u = F(v) on which b_u, div b or alpha + beta + 1 vanish, the
Lyapunov function built from the invariant density, and the region tags of
the convergence results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, minimize_scalar

from . import coords
from .core import INV_SQRT2, DomainError, SingularityError, ellipse_family, singular_segment
from .limit_state import (
    SingularRegion3D,
    _drift_raw,
    divergence_uv,
    drift2,
    drift_point,
    log_invariant_density_grad_uv,
    log_invariant_density_uv,
    peak_density,
)
from .trajectory import Trajectory

DENOM_TOL = 1e-14
ORIGIN_FACTOR = 1e-4


# --- drift in Keplerian coordinates ----------------------------------------


@dataclass(frozen=True)
class UVDrift:
    """Rates du/dt, dv/dt of the diffusion written in (u, v).

    ``b_u`` and ``b_v`` are the full drift rates (Ito corrections included
    when epsilon > 0); ``i_u`` and ``i_v`` are the Ito parts alone, i.e.
    eps^2/2 times the Laplacians of u and v.  ``n_vec`` and ``m_vec`` carry
    the noise: du = b_u dt - eps h N.dB, dv = b_v dt - eps h M.dB.
    """

    b_u: np.ndarray | float
    b_v: np.ndarray | float
    i_u: np.ndarray | float
    i_v: np.ndarray | float
    h: np.ndarray | float
    n_vec: np.ndarray
    m_vec: np.ndarray


def drift_uv(params, u, v, epsilon=None):
    eps = params.epsilon if epsilon is None else epsilon
    u = coords._check_uv(params, u)
    if np.any(u >= 1):
        raise SingularityError("the (u, v) drift is singular on u = 1")
    v = np.asarray(v, dtype=float)
    e, a, mu, lam = params.e, params.a, params.mu, params.lam
    c, s = np.cos(v), np.sin(v)
    d1 = 1 - u * c
    d2 = e * u + (e + u) * c + 1
    if np.any(np.abs(d1) < DENOM_TOL) or np.any(np.abs(d2) < DENOM_TOL):
        raise SingularityError("degenerate denominator in the (u, v) drift")
    s1 = np.sqrt(1 - u * u)
    se = params.sqrt1me2
    h = (e + u) / (2 * a * e * d1 * d2)
    k = mu / (2 * e * lam)
    bu0 = -k * (e + u) * s1 * (se * (u + c - s) - s1 * (e + c - s))
    bv0 = -k * (
        se * s1 * (e + c + s) - u * (1 + e * e) - 2 * e - (e * e + 2 * u * e + 1) * c - (1 - e * e) * s
    )
    iu = -((e + u) ** 2) / (4 * a * e * d2**2) * (
        (e + u) ** 2 * ((2 * u * u - 1) * c * c + 1)
        + 2 * u * ((e + u) ** 2 - (1 - u * u) * (1 + e * u)) * c
        - (1 - u * u) * (1 - e * e)
    )
    iv = (e + u) * s / (4 * a * d2**2) * (2 * (u + e) ** 2 - (1 + e * u) ** 2 + (e + u) * (e * u + 1) * c)
    eps2 = eps * eps
    n_vec = np.stack(np.broadcast_arrays((e + u) * (1 - u * u) * c, (e + u) * s1 * s), axis=-1)
    m_vec = np.stack(np.broadcast_arrays((1 + e * u) * s, -s1 * (e + c)), axis=-1)
    return UVDrift(
        b_u=h * (bu0 + eps2 * iu),
        b_v=h * (bv0 + eps2 * iv),
        i_u=h * eps2 * iu,
        i_v=h * eps2 * iv,
        h=h,
        n_vec=n_vec,
        m_vec=m_vec,
    )


def uv_rates_cartesian(params, p):
    """(du/dt, dv/dt) at planar points from the cartesian drift and the inverse Jacobian."""
    u, v = coords.from_cartesian(params, p)
    J = coords.jacobian(params, u, v)
    b = drift2(params, p)
    rates = np.linalg.solve(J, b[..., None])[..., 0]
    return u, v, rates


def kepler_law_residual(params, p):
    """|dv/dt (1 - e cos v) sqrt(a^3/mu) - 1| at planar points; zero on the Kepler orbit."""
    _, v, rates = uv_rates_cartesian(params, p)
    return np.abs(rates[..., 1] * (1 - params.e * np.cos(v)) / params.mean_motion - 1)


# --- singular-set and origin guards ----------------------------------------

_NONE, _SIGMA, _ORIGIN, _NONFINITE = 0, 1, 2, 3
_EVENT_NAMES = {_SIGMA: "sigma_hit", _ORIGIN: "origin_approach", _NONFINITE: "nonfinite"}


class SingularGuard:
    """Detects entry into the buffer around the singular set and the origin.

    Planar states: inside the ellipse E_{1-delta} (equivalently u > 1 - delta)
    or a step that crosses the open segment.  Spatial states: Euclidean
    distance to the singular region below ``delta`` or a step crossing the
    plane y = 0 inside it.  Both: |x| < 1e-4 a, or any non-finite component.
    """

    def __init__(self, params, dim, delta):
        if not 0 < delta < 1 + params.e:
            raise DomainError(f"delta must lie in (0, 1 + e), got {delta}")
        self.dim = dim
        self.delta = delta
        self.r_min = ORIGIN_FACTOR * params.a
        if dim == 2:
            self.buffer = ellipse_family(params, 1 - delta)
            self.segment = singular_segment(params)
        elif dim == 3:
            self.region = SingularRegion3D(params.e, params.a)
        else:
            raise ValueError("dim must be 2 or 3")

    def check(self, prev, new):
        """Event code per row of ``new`` (shape (m, dim)); ``prev`` is the previous state."""
        code = np.zeros(new.shape[0], dtype=np.int8)
        finite = np.all(np.isfinite(new), axis=1)
        code[~finite] = _NONFINITE
        nf = np.where(finite[:, None], new, 0.0)
        r = np.linalg.norm(nf, axis=1)
        y0, y1 = prev[:, 1], nf[:, 1]
        crossed = (y0 * y1 < 0) | ((y1 == 0) & (y0 != 0))
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(crossed, y0 / (y0 - y1), 0.0)
        hit_point = prev + w[:, None] * (nf - prev)
        if self.dim == 2:
            inside = self.buffer.inside(nf)
            through = crossed & (hit_point[:, 0] > self.segment.x_min_end) & (hit_point[:, 0] < self.segment.x_max_end)
        else:
            inside = self.region.distance(nf) < self.delta
            hit_point[:, 1] = 0.0
            through = crossed & self.region.contains(hit_point)
        code[finite & (inside | through)] = _SIGMA
        code[finite & (r < self.r_min)] = _ORIGIN
        return code


def _step_sizes(t_max, dt):
    if not dt > 0:
        raise DomainError(f"step size must be > 0, got {dt}")
    if not t_max >= 0:
        raise DomainError(f"horizon must be >= 0, got {t_max}")
    n = int(math.ceil(t_max / dt - 1e-9))
    steps = np.full(n, dt)
    if n:
        steps[-1] = t_max - (n - 1) * dt
    return steps


def _vector_field(params, dim):
    def f(X):
        bx, by, bz = _drift_raw(params, X[:, 0], X[:, 1], X[:, 2] if dim == 3 else 0.0 * X[:, 0])
        if dim == 2:
            return np.stack([bx, by], axis=1)
        return np.stack([bx, by, bz], axis=1)

    return f


def default_dt(params):
    return 1e-3 * math.sqrt(params.a**3 / params.mu)


def integrate_ode_batch(params, starts, t_max, dt=None, delta=1e-3, record_every=1, stop=None):
    """RK4 for many starts at once.

    Returns ``(times, states, end_index, end_code)`` where ``states`` has shape
    (samples, m, dim); rows after a path's termination repeat its last state.
    ``stop(t, X)`` may return True to end all paths early (recorded as horizon).
    """
    dt = default_dt(params) if dt is None else dt
    X = np.array(starts, dtype=float, ndmin=2)
    m, dim = X.shape
    guard = SingularGuard(params, dim, delta)
    code0 = guard.check(X, X)
    if np.any(code0 != _NONE):
        raise DomainError("start lies in the singular-set buffer, at the origin, or is not finite")
    f = _vector_field(params, dim)
    steps = _step_sizes(t_max, dt)
    alive = np.ones(m, dtype=bool)
    end_code = np.zeros(m, dtype=np.int8)
    end_index = np.full(m, -1)
    times = [0.0]
    states = [X.copy()]
    for i, h in enumerate(steps, start=1):
        Y = X[alive]
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            k1 = f(Y)
            k2 = f(Y + 0.5 * h * k1)
            k3 = f(Y + 0.5 * h * k2)
            k4 = f(Y + h * k3)
            Y1 = Y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t_max if i == len(steps) else i * dt
        code = guard.check(Y, Y1)
        idx = np.nonzero(alive)[0]
        X[idx] = np.where(np.isfinite(Y1), Y1, Y)
        hit = code != _NONE
        record = (i % record_every == 0) or i == len(steps) or np.any(hit)
        if np.any(hit):
            end_code[idx[hit]] = code[hit]
            alive[idx[hit]] = False
        if record:
            times.append(t)
            states.append(X.copy())
            end_index[idx[hit]] = len(times) - 1
        if not np.any(alive) or (stop is not None and stop(t, X)):
            break
    end_index[end_index < 0] = len(times) - 1
    return np.array(times), np.array(states), end_index, end_code


def _integrate_single(params, start, t_max, dt, delta, record_every):
    """Scalar RK4 path for one start; avoids per-step array overhead."""
    mu, lam, e = params.mu, params.lam, params.e
    X = [float(c) for c in start]
    dim = len(X)
    guard = SingularGuard(params, dim, delta)
    if guard.check(np.array([X]), np.array([X]))[0] != _NONE:
        raise DomainError("start lies in the singular-set buffer, at the origin, or is not finite")
    steps = _step_sizes(t_max, dt)
    n = len(steps)
    if dim == 2:
        buf = guard.buffer
        cx, A, B = buf.center[0], buf.semi_major, buf.semi_minor
        sx0, sx1 = guard.segment.x_min_end, guard.segment.x_max_end
        region = None
    else:
        region = guard.region
    r_min = guard.r_min
    isfinite = math.isfinite

    def f(s):
        if dim == 2:
            bx, by, _ = drift_point(mu, lam, e, s[0], s[1])
            return (bx, by)
        return drift_point(mu, lam, e, s[0], s[1], s[2])

    times = [0.0]
    states = [tuple(X)]
    code = _NONE
    for i in range(1, n + 1):
        h = steps[i - 1]
        k1 = f(X)
        k2 = f([X[j] + 0.5 * h * k1[j] for j in range(dim)])
        k3 = f([X[j] + 0.5 * h * k2[j] for j in range(dim)])
        k4 = f([X[j] + h * k3[j] for j in range(dim)])
        Y = [X[j] + h / 6 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]) for j in range(dim)]
        t = t_max if i == n else i * dt
        if not all(isfinite(c) for c in Y):
            code = _NONFINITE
        else:
            r = math.sqrt(sum(c * c for c in Y))
            y0, y1 = X[1], Y[1]
            crossed = y0 * y1 < 0 or (y1 == 0 and y0 != 0)
            if dim == 2:
                inside = ((Y[0] - cx) / A) ** 2 + (Y[1] / B) ** 2 < 1.0
                through = False
                if crossed:
                    xc = X[0] + y0 / (y0 - y1) * (Y[0] - X[0])
                    through = sx0 < xc < sx1
            else:
                inside = float(region.distance(np.array(Y))) < delta
                through = False
                if crossed:
                    w = y0 / (y0 - y1)
                    hp = np.array([X[0] + w * (Y[0] - X[0]), 0.0, X[2] + w * (Y[2] - X[2])])
                    through = bool(region.contains(hp))
            if r < r_min:
                code = _ORIGIN
            elif inside or through:
                code = _SIGMA
        if code == _NONFINITE:
            times.append(t)
            states.append(tuple(X))
            break
        X = Y
        if code != _NONE or i % record_every == 0 or i == n:
            times.append(t)
            states.append(tuple(X))
        if code != _NONE:
            break
    return np.array(times), np.array(states, dtype=float), code


def integrate_ode(params, start, t_span, dt=None, delta=1e-3, record_every=1, with_uv=True):
    """Fixed-step RK4 trajectory of dx/dt = b(x) from a planar or spatial start.

    ``t_span`` is the horizon T or a pair (t0, T).  Entering the singular
    buffer or the origin guard ends the path with an annotated event; a
    non-finite step ends it with a ``nonfinite`` event at the last good state.
    """
    dt = default_dt(params) if dt is None else dt
    t0 = t_span[0] if np.ndim(t_span) else 0.0
    t_max = t_span[1] - t0 if np.ndim(t_span) else t_span
    times, states, code = _integrate_single(params, start, t_max, dt, delta, record_every)
    times = times + t0
    events = [(float(times[-1]), _EVENT_NAMES[code] if code else "horizon")]
    uv = None
    if with_uv and states.shape[1] == 2:
        u, v = coords.from_cartesian(params, states, strict=False)
        uv = np.stack([u, v], axis=1)
    return Trajectory(times=times, states=states, events=events, uv_trace=uv)


# --- Kepler's laws on the orbit u = e --------------------------------------


def period(params):
    """2 pi sqrt(a^3 / mu)."""
    return 2 * math.pi * math.sqrt(params.a**3 / params.mu)


def period_quadrature(params):
    """Integral over one turn of dv / (dv/dt) on u = e, using the (u, v) drift."""
    e = params.e

    def f(v):
        return 1.0 / float(drift_uv(params, e, v, epsilon=0.0).b_v)

    return quad(f, 0.0, 2 * math.pi, epsabs=1e-13, epsrel=1e-13, limit=200)[0]


@dataclass(frozen=True)
class OrbitCheck:
    periods: np.ndarray
    max_u_deviation: float
    max_kepler_residual: float
    trajectory: Trajectory

    @property
    def period(self):
        return float(np.mean(self.periods))


def _upward_crossings(params, times, states):
    """Times where y crosses 0 upward with x > 0, by cubic Hermite interpolation."""
    y = states[:, 1]
    b = drift2(params, states[:, :2], strict=False)[:, 1]
    out = []
    for k in np.nonzero((y[:-1] < 0) & (y[1:] >= 0) & (states[:-1, 0] > 0))[0]:
        t0, t1 = times[k], times[k + 1]
        h = t1 - t0
        y0, y1, m0, m1 = y[k], y[k + 1], b[k] * h, b[k + 1] * h

        def herm(s):
            return (
                (2 * s**3 - 3 * s**2 + 1) * y0
                + (s**3 - 2 * s**2 + s) * m0
                + (-2 * s**3 + 3 * s**2) * y1
                + (s**3 - s**2) * m1
            )

        s = brentq(herm, 0.0, 1.0, xtol=1e-15) if y1 != 0 else 1.0
        out.append(t0 + s * h)
    return np.array(out)


def check_kepler_orbit(params, n_periods=3, dt=None):
    """Integrate from perihelion and measure orbit invariance, the period and Kepler's second law."""
    T = period(params)
    start = [params.a * (1 - params.e), 0.0]
    traj = integrate_ode(params, start, n_periods * T + 0.25 * T, dt=dt)
    u = traj.uv_trace[:, 0]
    crossings = np.concatenate([[0.0], _upward_crossings(params, traj.times, traj.states)])
    resid = kepler_law_residual(params, traj.states)
    return OrbitCheck(
        periods=np.diff(crossings),
        max_u_deviation=float(np.nanmax(np.abs(u - params.e))),
        max_kepler_residual=float(np.max(resid)),
        trajectory=traj,
    )


# --- trace integral along the orbit ----------------------------------------


@dataclass(frozen=True)
class StabilityIntegral:
    closed_form: float
    finite_difference: float


def stability_integrand(params, v):
    """(1 / (dv/dt)) div b on u = e, in closed form."""
    e = params.e
    v = np.asarray(v, dtype=float)
    return -(e * np.cos(v) + e * np.sin(v) + 1) / (e * e + 2 * e * np.cos(v) + 1)


def stability_integral(params, dt=None, fd_step=1e-6):
    """Integral of tr(db/dx) over one revolution of the Kepler orbit, computed two ways.

    The closed form integrates ``stability_integrand`` over v by adaptive
    quadrature; the second route integrates the RK4 orbit over exactly one
    period and applies the trapezoid rule in time to central-difference
    traces of the cartesian drift.
    """
    closed = quad(lambda v: float(stability_integrand(params, v)), 0.0, 2 * math.pi, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    T = period(params)
    dt = default_dt(params) if dt is None else dt
    n = int(math.ceil(T / dt))
    traj = integrate_ode(params, [params.a * (1 - params.e), 0.0], T, dt=T / n, with_uv=False)
    P = traj.states
    hx = fd_step * params.a
    ex, ey = np.array([hx, 0.0]), np.array([0.0, hx])
    tr = (drift2(params, P + ex)[:, 0] - drift2(params, P - ex)[:, 0]) / (2 * hx)
    tr += (drift2(params, P + ey)[:, 1] - drift2(params, P - ey)[:, 1]) / (2 * hx)
    fd = float(np.trapezoid(tr, traj.times))
    return StabilityIntegral(closed, fd)


# --- the curves u = F(v) ---------------------------------------------------


def f_curve(e1, e2, v):
    """F_(e1, e2)(v) = e1 (1 - cos v sin v) + e2 (cos v - sin v)."""
    v = np.asarray(v, dtype=float)
    return e1 * (1 - np.cos(v) * np.sin(v)) + e2 * (np.cos(v) - np.sin(v))


@dataclass(frozen=True)
class FCurve:
    e1: float
    e2: float
    domain: tuple = (0.0, 2 * math.pi)

    def __call__(self, v):
        return f_curve(self.e1, self.e2, v)


def _ecc(params_or_e):
    return params_or_e.e if hasattr(params_or_e, "e") else float(params_or_e)


def f_ratio(params_or_e, v):
    """u = F_(e,1)(v) / F_(-1,-e)(v), the locus b_u = 0 for v in (pi/2, pi)."""
    e = _ecc(params_or_e)
    v = np.asarray(v, dtype=float)
    if np.any(~((v > math.pi / 2) & (v < math.pi))):
        raise DomainError("f_ratio is defined for v in (pi/2, pi)")
    return f_curve(e, 1.0, v) / f_curve(-1.0, -e, v)


def tilde_e(e):
    """(3e - 2 sqrt 2) / (2 sqrt 2 e - 3), the minimum of f_ratio (attained at v = 3 pi / 4)."""
    e = _ecc(e)
    if not 0 < e < 1:
        raise DomainError("eccentricity must satisfy 0 < e < 1")
    r2 = math.sqrt(2.0)
    return (3 * e - 2 * r2) / (2 * r2 * e - 3)


def tilde_e_numeric(e):
    """Minimum of f_ratio over (pi/2, pi) by bounded scalar minimisation."""
    res = minimize_scalar(
        lambda v: float(f_ratio(e, v)), bounds=(math.pi / 2 + 1e-9, math.pi - 1e-9), method="bounded",
        options={"xatol": 1e-12},
    )
    return float(res.fun)


def critical_eccentricity():
    """The root of tilde_e(e) = e in (0, 1)."""
    return brentq(lambda e: tilde_e(e) - e, 0.01, 0.99, xtol=1e-15)


@dataclass(frozen=True)
class SymmetryCurve:
    """A curve u = ratio(v) over an open v-interval with the field that vanishes on it."""

    name: str
    num: FCurve
    den: FCurve
    reflect: bool
    v_interval: tuple
    params: object

    def u_of(self, v):
        w = -np.asarray(v, dtype=float) if self.reflect else np.asarray(v, dtype=float)
        return self.num(w) / self.den(w)

    def sample(self, num=200):
        lo, hi = self.v_interval
        v = np.linspace(lo, hi, num + 2)[1:-1]
        return v, self.u_of(v)

    def points(self, num=200):
        v, u = self.sample(num)
        return coords.to_cartesian(self.params, u, v)

    def residual(self, v):
        """The vanishing quantity evaluated on the curve."""
        P = self.params
        u = self.u_of(v)
        if self.name == "b_u":
            return drift_uv(P, u, v, epsilon=0.0).b_u
        if self.name == "divergence":
            return divergence_uv(P, u, v)
        ab = coords.alpha_beta_uv(P, u, v)
        return ab.alpha + ab.beta + 1

    def min_u(self):
        lo, hi = self.v_interval
        res = minimize_scalar(
            lambda v: float(self.u_of(v)), bounds=(lo + 1e-9, hi - 1e-9), method="bounded",
            options={"xatol": 1e-12},
        )
        return float(res.fun)

    def crossings(self, level=None, num=2001):
        """v values where the curve meets u = level (default the Kepler ellipse u = e)."""
        level = self.params.e if level is None else level
        v, u = self.sample(num)
        g = u - level
        roots = []
        for k in np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]:
            roots.append(brentq(lambda t: float(self.u_of(t)) - level, v[k], v[k + 1], xtol=1e-14))
        return np.array(roots)


def symmetry_curves(params):
    """The b_u = 0, div b = 0 and alpha + beta + 1 = 0 curves, keyed by name."""
    e = params.e
    return {
        "b_u": SymmetryCurve("b_u", FCurve(e, 1.0), FCurve(-1.0, -e), False, (math.pi / 2, math.pi), params),
        "divergence": SymmetryCurve(
            "divergence", FCurve(e, 1.0), FCurve(-1.0, -e), True, (math.pi, 1.5 * math.pi), params
        ),
        "alpha_beta": SymmetryCurve(
            "alpha_beta", FCurve(e, -1.0), FCurve(-1.0, e), True, (0.0, math.pi / 2), params
        ),
    }


# --- Lyapunov function -----------------------------------------------------


def _annulus_uv(params, p, u, v, delta1, delta2):
    if p is not None:
        u, v = coords.from_cartesian(params, p)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(~(u > -params.e + delta1)) or np.any(u > 1 - delta2):
        raise DomainError(
            f"point outside the annulus -e + {delta1} < u <= 1 - {delta2} of the Lyapunov certificate"
        )
    return u, v


def lyapunov(params, p=None, u=None, v=None, delta1=0.1, delta2=0.1):
    """V = (16/e^2)^lam - exp(2 R_1) and its derivative along the flow.

    The density is taken at epsilon = 1.  dV/dt = grad V . b is computed
    from the analytic (u, v) gradient of the density and the epsilon = 0
    rates (du/dt, dv/dt), which is the cartesian gradient chained through
    the coordinate Jacobian.
    """
    u, v = _annulus_uv(params, p, u, v, delta1, delta2)
    logrho = log_invariant_density_uv(params, u, v, epsilon=1.0)
    rho = np.exp(logrho)
    V = peak_density(params, epsilon=1.0) - rho
    gu, gv = log_invariant_density_grad_uv(params, u, v, epsilon=1.0)
    d = drift_uv(params, u, v, epsilon=0.0)
    Vdot = -rho * (gu * d.b_u + gv * d.b_v)
    return V, Vdot


@dataclass(frozen=True)
class LyapunovCert:
    """Grid statistics of the Lyapunov function on the annulus."""

    delta1: float
    delta2: float
    shape: tuple
    n_excluded: int
    min_v_off: float
    max_vdot_off: float
    max_abs_v_on: float
    max_abs_vdot_on: float
    on_tol: float = 1e-8

    @property
    def ok(self):
        return (
            self.min_v_off > 0
            and self.max_vdot_off < 0
            and self.max_abs_v_on < self.on_tol
            and self.max_abs_vdot_on < self.on_tol
        )


def lyapunov_certificate(params, delta1=0.1, delta2=0.1, nu=100, nv=100):
    """Evaluate V and dV/dt on an nu x nv cell-centred grid over the annulus in (u, v).

    Cells whose u-range contains e are the on-ellipse cells and are left out
    of the off-ellipse statistics; the on-ellipse values are taken exactly on
    u = e.  Cells touching the singular segment u = 1 are excluded (none with
    delta2 > 0, since the annulus stops at u = 1 - delta2).
    """
    e = params.e
    lo, hi = -e + delta1, 1 - delta2
    du = (hi - lo) / nu
    u = lo + (np.arange(nu) + 0.5) * du
    v = (np.arange(nv) + 0.5) * 2 * math.pi / nv
    U, Vv = np.meshgrid(u, v, indexing="ij")
    touch_sigma = U + 0.5 * du >= 1.0
    on_cell = np.abs(U - e) <= 0.5 * du
    keep = ~touch_sigma & ~on_cell
    V, Vdot = lyapunov(params, u=U[keep], v=Vv[keep], delta1=delta1, delta2=delta2)
    V_on, Vdot_on = lyapunov(params, u=np.full(nv, e), v=v, delta1=delta1, delta2=delta2)
    return LyapunovCert(
        delta1=delta1,
        delta2=delta2,
        shape=(nu, nv),
        n_excluded=int(np.sum(touch_sigma)),
        min_v_off=float(np.min(V)),
        max_vdot_off=float(np.max(Vdot)),
        max_abs_v_on=float(np.max(np.abs(V_on))),
        max_abs_vdot_on=float(np.max(np.abs(Vdot_on))),
    )


# --- distances and region tags ---------------------------------------------


def distance_to_kepler_ellipse(params, p, iters=8):
    """Euclidean distance from planar point(s) to the Kepler ellipse."""
    p = np.asarray(p, dtype=float)
    shape = p.shape[:-1]
    P = p.reshape(-1, 2)
    a, e = params.a, params.e
    b = a * params.sqrt1me2
    cx = -a * e
    ts = np.linspace(0, 2 * math.pi, 721)
    ex, ey = cx + a * np.cos(ts), b * np.sin(ts)
    d2 = (P[:, :1] - ex) ** 2 + (P[:, 1:] - ey) ** 2
    t = ts[np.argmin(d2, axis=1)]
    for _ in range(iters):
        c, s = np.cos(t), np.sin(t)
        dx, dy = P[:, 0] - (cx + a * c), P[:, 1] - b * s
        g = dx * a * s - dy * b * c
        gp = a * a * s * s + dx * a * c + b * b * c * c + dy * b * s
        t = t - np.where(np.abs(gp) > 1e-300, g / gp, 0.0)
    d = np.hypot(P[:, 0] - (cx + a * np.cos(t)), P[:, 1] - b * np.sin(t))
    d = np.minimum(d, np.sqrt(np.min(d2, axis=1)))
    return d.reshape(shape) if shape else float(d[0])


@dataclass(frozen=True)
class PointClass:
    tag: str
    b_u_sign: int
    u: float
    v: float


def classify_point(params, p, near_tol=0.05):
    """Which convergence statement covers a planar start point.

    ``near_sigma_attractive``: within ``near_tol * a`` above the attractive
    part of the singular segment.  ``converges_by_thm13``: e < 1/sqrt 2 and
    outside E_tilde_e (u < tilde_e).  ``annulus_bound_thm14``: e > 1/sqrt 2
    and outside the Kepler ellipse (u < e).  ``interior_unproven``: inside the
    Kepler ellipse (u > e), where no convergence claim is made.
    """
    p = np.asarray(p, dtype=float)
    u, v = coords.from_cartesian(params, p)
    x, y = p[0], p[1]
    e = params.e
    sign = int(np.sign(drift_uv(params, u, v, epsilon=0.0).b_u))
    lo, hi = singular_segment(params).attractive_sub
    if 0 < y < near_tol * params.a and lo <= x <= hi:
        tag = "near_sigma_attractive"
    elif e < INV_SQRT2 and u < tilde_e(e):
        tag = "converges_by_thm13"
    elif e > INV_SQRT2 and u < e:
        tag = "annulus_bound_thm14"
    elif u > e:
        tag = "interior_unproven"
    else:
        tag = "other"
    return PointClass(tag, sign, float(u), float(v))


@dataclass(frozen=True)
class ConvergenceRecord:
    start: tuple
    time: float | None
    distance: float
    kepler_residual: float
    event: str


def time_to_converge(params, start, tol=1e-3, t_max=100.0, chunk=2.0, dt=None):
    """First chunk boundary at which the flow from ``start`` is within ``tol`` of the
    Kepler ellipse and satisfies Kepler's law to ``tol``; ``time`` is None if it never does.
    """
    x = np.asarray(start, dtype=float)
    t = 0.0
    d = kr = math.inf
    while t < t_max - 1e-12:
        h = min(chunk, t_max - t)
        traj = integrate_ode(params, x, h, dt=dt, record_every=10**9, with_uv=False)
        t += float(traj.times[-1])
        x = traj.final_state
        if traj.terminated:
            return ConvergenceRecord(tuple(start), None, math.nan, math.nan, traj.terminated)
        d = distance_to_kepler_ellipse(params, x)
        kr = float(kepler_law_residual(params, x[None])[0])
        if d < tol and kr < tol:
            return ConvergenceRecord(tuple(start), t, d, kr, "converged")
    return ConvergenceRecord(tuple(start), None, d, kr, "horizon")
