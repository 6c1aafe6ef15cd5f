"""Euler-Maruyama simulation of the limiting Nelson diffusion dX = b(X) dt + eps dB.

Noise: path k of a run with seed s draws its standard normals from a Philox
counter-based generator keyed by (s, k), one normal per spatial component
per step, consumed in step order.  Paths therefore never share generator
state, any subset of paths can be re-run on its own, and a chunked draw
gives the same increments as a sequential one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import argrelmax
from scipy.stats import binomtest

from . import coords
from .core import DomainError
from .dynamics import (
    _EVENT_NAMES,
    _NONE,
    SingularGuard,
    _step_sizes,
    distance_to_kepler_ellipse,
    integrate_ode,
    period,
)
from .exact_state import drift_exact
from .limit_state import _drift_raw, alpha_beta_cartesian, drift3
from .trajectory import Trajectory

SEED_MASK = (1 << 64) - 1
START_STREAM = SEED_MASK  # path index reserved for sampling start points
BLOCK = 1024


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_max: float = 10.0
    seed: int = 42
    delta: float = 1e-3
    scheme: str = "euler_maruyama"
    dimension: int = 2
    ensemble_size: int = 1
    record_every: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError(f"dt must be > 0, got {self.dt}")
        if not self.t_max > 0:
            raise DomainError(f"t_max must be > 0, got {self.t_max}")
        if not self.delta > 0:
            raise DomainError(f"delta must be > 0, got {self.delta}")
        if self.scheme != "euler_maruyama":
            raise DomainError(f"unsupported scheme {self.scheme!r} (only euler_maruyama)")
        if self.dimension not in (2, 3):
            raise DomainError(f"dimension must be 2 or 3, got {self.dimension}")
        if int(self.ensemble_size) < 1:
            raise DomainError("ensemble_size must be >= 1")
        if int(self.record_every) < 1:
            raise DomainError("record_every must be >= 1")


def path_generator(seed, index):
    """The generator for path ``index`` of a run seeded with ``seed``."""
    key = np.array([int(seed) & SEED_MASK, int(index) & SEED_MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _resolve_field(params, field, dim):
    if field is None or field == "limit":

        def f(X):
            bx, by, bz = _drift_raw(params, X[:, 0], X[:, 1], X[:, 2] if dim == 3 else np.zeros(len(X)))
            return np.stack([bx, by] if dim == 2 else [bx, by, bz], axis=1)

        return f
    if field == "exact":

        def f(X):
            with np.errstate(all="ignore"):
                b = drift_exact(params, X, strict=False)
            return b[:, :dim]

        return f
    if callable(field):
        return field
    raise DomainError(f"unknown drift field {field!r}")


@dataclass
class _Run:
    times: np.ndarray
    paths: np.ndarray | None  # (samples, m, dim)
    noise: np.ndarray | None  # (samples, m, dim), accumulated B
    final: np.ndarray
    end_time: np.ndarray
    end_code: np.ndarray
    end_index: np.ndarray
    sup_b: np.ndarray


def _em(params, X0, eps, noise_index, cfg, field=None, keep_paths=True, keep_noise=False, on_step=None):
    """Vectorised Euler-Maruyama over rows of ``X0``.

    Row i uses noise stream ``noise_index[i]`` scaled by ``eps[i]``; rows
    sharing a stream see identical increments (common-noise coupling).
    """
    X = np.array(X0, dtype=float)
    m, dim = X.shape
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (m,))
    noise_index = np.broadcast_to(np.asarray(noise_index), (m,))
    streams, inverse = np.unique(noise_index, return_inverse=True)
    gens = [path_generator(cfg.seed, k) for k in streams]
    guard = SingularGuard(params, dim, cfg.delta)
    if np.any(guard.check(X, X) != _NONE):
        raise DomainError("start lies in the singular-set buffer, at the origin, or is not finite")
    f = _resolve_field(params, field, dim)
    steps = _step_sizes(cfg.t_max, cfg.dt)
    n = len(steps)
    alive = np.ones(m, dtype=bool)
    end_code = np.zeros(m, dtype=np.int8)
    end_time = np.full(m, float(cfg.t_max))
    end_index = np.full(m, -1)
    B = np.zeros((len(streams), dim))
    sup_b = np.zeros(m)
    times = [0.0]
    paths = [X.copy()] if keep_paths else None
    noise = [np.zeros((m, dim))] if keep_noise else None
    i = 0
    while i < n and np.any(alive):
        nb = min(BLOCK, n - i)
        xi = np.stack([g.standard_normal((nb, dim)) for g in gens], axis=1)  # (nb, streams, dim)
        for j in range(nb):
            i += 1
            h = steps[i - 1]
            t = cfg.t_max if i == n else i * cfg.dt
            B += math.sqrt(h) * xi[j]
            Bm = B[inverse]
            sup_b = np.where(alive, np.maximum(sup_b, np.linalg.norm(Bm, axis=1)), sup_b)
            idx = np.nonzero(alive)[0]
            Y = X[idx]
            with np.errstate(all="ignore"):
                Y1 = Y + f(Y) * h + (eps[idx] * math.sqrt(h))[:, None] * xi[j][inverse[idx]]
            code = guard.check(Y, Y1)
            ok = np.all(np.isfinite(Y1), axis=1)
            X[idx] = np.where(ok[:, None], Y1, Y)
            hit = code != _NONE
            if np.any(hit):
                end_code[idx[hit]] = code[hit]
                end_time[idx[hit]] = t
                alive[idx[hit]] = False
            if on_step is not None:
                on_step(t, X, alive | (end_time == t))
            if keep_paths and (i % cfg.record_every == 0 or i == n or np.any(hit)):
                times.append(t)
                paths.append(X.copy())
                if keep_noise:
                    noise.append(Bm.copy())
            if np.any(hit):
                end_index[idx[hit]] = len(times) - 1
            if not np.any(alive):
                break
    end_index[end_index < 0] = len(times) - 1
    return _Run(
        times=np.array(times),
        paths=np.array(paths) if keep_paths else None,
        noise=np.array(noise) if keep_noise else None,
        final=X,
        end_time=end_time,
        end_code=end_code,
        end_index=end_index,
        sup_b=sup_b,
    )


def _trajectory(params, run, k, with_uv=True):
    last = int(run.end_index[k])
    times = run.times[: last + 1]
    states = run.paths[: last + 1, k]
    code = int(run.end_code[k])
    events = [(float(run.end_time[k]), _EVENT_NAMES[code] if code else "horizon")]
    uv = None
    if with_uv and states.shape[1] == 2:
        u, v = coords.from_cartesian(params, states, strict=False)
        uv = np.stack([u, v], axis=1)
    noise = run.noise[: last + 1, k] if run.noise is not None else None
    return Trajectory(times=times, states=states, events=events, uv_trace=uv, noise=noise)


def simulate_sde(params, start, config, field=None, keep_noise=False, path_index=0, with_uv=True):
    """One Euler-Maruyama path X_{k+1} = X_k + b(X_k) dt + eps sqrt(dt) xi_k.

    ``field`` is ``"limit"`` (default, dimension from the config), ``"exact"``
    (finite-n drift, needs ``params.n``) or a callable mapping (m, dim)
    states to drifts.
    """
    start = np.asarray(start, dtype=float)
    if start.shape != (config.dimension,):
        raise DomainError(f"start must have {config.dimension} components, got shape {start.shape}")
    run = _em(params, start[None], params.epsilon, [path_index], config, field, keep_noise=keep_noise)
    return _trajectory(params, run, 0, with_uv=with_uv)


@dataclass
class EnsembleResult:
    final_states: np.ndarray
    end_codes: np.ndarray
    end_times: np.ndarray
    trajectories: list | None
    hist_counts: np.ndarray
    x_edges: np.ndarray
    y_edges: np.ndarray

    @property
    def hit_fraction(self):
        return float(np.mean(self.end_codes != _NONE))

    @property
    def survived(self):
        return self.end_codes == _NONE

    def histogram_rows(self):
        """(x_centre, y_centre, count) rows for the ensemble CSV."""
        xc = 0.5 * (self.x_edges[:-1] + self.x_edges[1:])
        yc = 0.5 * (self.y_edges[:-1] + self.y_edges[1:])
        for j, y in enumerate(yc):
            for i, x in enumerate(xc):
                yield (x, y, int(self.hist_counts[i, j]))

    def modal_cell(self):
        i, j = np.unravel_index(np.argmax(self.hist_counts), self.hist_counts.shape)
        return (
            0.5 * (self.x_edges[i] + self.x_edges[i + 1]),
            0.5 * (self.y_edges[j] + self.y_edges[j + 1]),
        )


def _starts(start_distribution, m, dim, seed):
    if callable(start_distribution):
        pts = np.asarray(start_distribution(path_generator(seed, START_STREAM), m), dtype=float)
    else:
        pts = np.asarray(start_distribution, dtype=float)
        if pts.ndim == 1:
            pts = np.broadcast_to(pts, (m, dim))
    if pts.shape != (m, dim):
        raise DomainError(f"start distribution must give shape {(m, dim)}, got {pts.shape}")
    return pts


def simulate_ensemble(
    params, start_distribution, config, field=None, keep_paths=False, bins=60, box=None
):
    """Run ``config.ensemble_size`` independent paths; path k uses noise stream k.

    ``start_distribution`` is a point, an (m, dim) array, or a callable
    ``(rng, m) -> (m, dim)``.  The histogram counts surviving paths' final
    (x, y) positions on a ``bins`` x ``bins`` grid over ``box`` (default
    [-3a, 2a]^2).
    """
    m = int(config.ensemble_size)
    dim = config.dimension
    X0 = _starts(start_distribution, m, dim, config.seed)
    run = _em(params, X0, params.epsilon, np.arange(m), config, field, keep_paths=keep_paths)
    a = params.a
    xmin, xmax, ymin, ymax = box if box is not None else (-3 * a, 2 * a, -3 * a, 2 * a)
    alive = run.end_code == _NONE
    counts, xe, ye = np.histogram2d(
        run.final[alive, 0], run.final[alive, 1], bins=bins, range=[[xmin, xmax], [ymin, ymax]]
    )
    trajs = [_trajectory(params, run, k) for k in range(m)] if keep_paths else None
    return EnsembleResult(
        final_states=run.final,
        end_codes=run.end_code,
        end_times=run.end_time,
        trajectories=trajs,
        hist_counts=counts.astype(int),
        x_edges=xe,
        y_edges=ye,
    )


# --- hitting probability ----------------------------------------------------


@dataclass(frozen=True)
class HitEstimate:
    """Monte Carlo estimate of P(tau > t) with a Wilson 95% interval."""

    t: float
    survivors: int
    n: int
    estimate: float
    ci_low: float
    ci_high: float

    @property
    def survival_positive(self):
        """Empirical support for P(A_t) > 0, the event the convergence bound conditions on."""
        return self.survivors > 0


def hitting_probability(params, start, config, t=None):
    """P(tau > t) for tau the first entry time into int(E_{1-delta}) (or the origin guard)."""
    t = config.t_max if t is None else t
    n = int(config.ensemble_size)
    if t == 0:
        return HitEstimate(0.0, n, n, 1.0, 1.0, 1.0)
    cfg = SimConfig(
        dt=config.dt, t_max=t, seed=config.seed, delta=config.delta,
        dimension=config.dimension, ensemble_size=n,
    )
    res = simulate_ensemble(params, start, cfg)
    k = int(np.sum(res.survived))
    ci = binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
    return HitEstimate(float(t), k, n, k / n, float(ci.low), float(ci.high))


# --- pathwise coupling ------------------------------------------------------


@dataclass(frozen=True)
class CouplingResult:
    """Per-epsilon sup distances between X^eps and X^0 driven by common noise.

    Arrays are indexed [epsilon, path]; excluded paths (buffer entry by either
    process) are NaN in ``sup_dist`` and False in ``retained``.
    """

    eps_list: tuple
    sup_dist: np.ndarray
    sup_b: np.ndarray
    retained: np.ndarray
    slack: float

    def bound(self):
        eps = np.asarray(self.eps_list)[:, None]
        return 3 * eps * self.sup_b + self.slack

    @property
    def bound_holds(self):
        """The inequality sup|X^eps - X^0| <= 3 eps sup|B| + slack on every retained path."""
        ok = ~self.retained | (self.sup_dist <= self.bound())
        return bool(np.all(ok))

    @property
    def excluded_fraction(self):
        return 1.0 - self.retained.mean(axis=1)

    def mean_sup_dist(self):
        with np.errstate(invalid="ignore"):
            return np.array([np.nanmean(r) if np.any(~np.isnan(r)) else np.nan for r in self.sup_dist])


def coupling_convergence(params, start, eps_list, config, slack=None):
    """Simulate X^eps for each eps and the epsilon = 0 Euler path X^0 on common increments.

    Paths k = 0..ensemble_size-1 use noise stream k for every epsilon.
    ``slack`` defaults to 10 dt.
    """
    eps_list = tuple(float(e) for e in eps_list)
    if any(e < 0 for e in eps_list):
        raise DomainError("epsilon values must be >= 0")
    m = int(config.ensemble_size)
    J = len(eps_list)
    start = np.asarray(start, dtype=float)
    X0 = np.broadcast_to(start, ((J + 1) * m, start.size)).copy()
    eps = np.concatenate([np.full(m, e) for e in eps_list] + [np.zeros(m)])
    streams = np.tile(np.arange(m), J + 1)
    sup = np.zeros((J, m))

    def track(t, X, _alive):
        ref = X[J * m :]
        for j in range(J):
            d = np.linalg.norm(X[j * m : (j + 1) * m] - ref, axis=1)
            np.maximum(sup[j], d, out=sup[j])

    run = _em(params, X0, eps, streams, config, keep_paths=False, on_step=track)
    codes = run.end_code.reshape(J + 1, m)
    retained = (codes[:J] == _NONE) & (codes[J] == _NONE)[None, :]
    sup_dist = np.where(retained, sup, np.nan)
    return CouplingResult(
        eps_list=eps_list,
        sup_dist=sup_dist,
        sup_b=run.sup_b[:m][None, :].repeat(J, axis=0),
        retained=retained,
        slack=10 * config.dt if slack is None else slack,
    )


# --- z-instability ---------------------------------------------------------


@dataclass
class BlipReport:
    """|z| behaviour over whole periods of the Kepler orbit.

    ``maxima_per_period[k]`` counts strict local maxima of |z| in period k,
    ``period_peaks[k]`` is the largest such maximum (NaN if none).
    """

    e: float
    z0: float
    n_periods: int
    maxima_per_period: np.ndarray
    period_peaks: np.ndarray
    deterministic: Trajectory
    stochastic: Trajectory | None = None
    stochastic_bz: np.ndarray | None = None
    stochastic_apb1_sign: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def blip_every_period(self):
        return bool(np.all(self.maxima_per_period >= 1))

    @property
    def any_blip(self):
        return bool(np.any(self.maxima_per_period >= 1))

    @property
    def peaks_decreasing(self):
        p = self.period_peaks
        return bool(np.all(np.isfinite(p)) and np.all(np.diff(p) < 0))

    def stochastic_settles(self, threshold=0.01, window=None):
        """Whether |z| of the noisy run stays below ``threshold`` over its final ``window``.

        ``window`` defaults to one orbital period (the whole run if it ended sooner).
        """
        if self.stochastic is None:
            raise ValueError("no stochastic run in this report")
        t = self.stochastic.times
        z = np.abs(self.stochastic.states[:, 2])
        w = self.extras.get("period") if window is None else window
        return bool(np.all(z[t >= t[-1] - w] < threshold))


def _period_maxima(times, z, T, n_periods):
    absz = np.abs(z)
    mx = argrelmax(absz)[0]
    k = np.floor(times[mx] / T).astype(int)
    keep = k < n_periods
    counts = np.bincount(k[keep], minlength=n_periods)[:n_periods]
    peaks = np.full(n_periods, np.nan)
    for kk, val in zip(k[keep], absz[mx][keep]):
        peaks[kk] = val if np.isnan(peaks[kk]) else max(peaks[kk], val)
    return counts, peaks


def z_blip_experiment(params, config=None, z0=0.05, n_periods=10, start=None, epsilon=None):
    """Start just off the orbital plane and track |z| period by period.

    The epsilon = 0 run integrates the spatial flow with RK4 from the
    aphelion of the Kepler ellipse lifted to height ``z0`` (or ``start``).
    If ``epsilon`` (default ``params.epsilon``) is positive a spatial
    Euler-Maruyama run over the same horizon records z, b_z and the sign of
    alpha + beta + 1 along the path.
    """
    config = config or SimConfig(dimension=3)
    T = period(params)
    if start is None:
        start = [-params.a * (1 + params.e), 0.0, z0]
    det = integrate_ode(params, start, n_periods * T, dt=config.dt, delta=config.delta, with_uv=False)
    counts, peaks = _period_maxima(det.times, det.states[:, 2], T, n_periods)
    report = BlipReport(params.e, float(start[2]), n_periods, counts, peaks, det, extras={"period": T})
    eps = params.epsilon if epsilon is None else epsilon
    if eps > 0:
        cfg = SimConfig(
            dt=config.dt, t_max=n_periods * T, seed=config.seed, delta=config.delta,
            dimension=3, record_every=config.record_every,
        )
        sto = simulate_sde(params.with_epsilon(eps), np.asarray(start, dtype=float), cfg, with_uv=False)
        bz = drift3(params, sto.states, strict=False)[:, 2]
        ab = alpha_beta_cartesian(params, sto.states, strict=False)
        report.stochastic = sto
        report.stochastic_bz = bz
        report.stochastic_apb1_sign = np.sign(ab.alpha + ab.beta + 1)
    return report


def fraction_near_ellipse(params, points, tol):
    """Fraction of planar points within ``tol`` of the Kepler ellipse."""
    d = distance_to_kepler_ellipse(params, np.asarray(points)[:, :2])
    return float(np.mean(d < tol))


__all__ = [
    "SimConfig",
    "path_generator",
    "simulate_sde",
    "simulate_ensemble",
    "EnsembleResult",
    "hitting_probability",
    "HitEstimate",
    "coupling_convergence",
    "CouplingResult",
    "z_blip_experiment",
    "BlipReport",
    "fraction_near_ellipse",
]
