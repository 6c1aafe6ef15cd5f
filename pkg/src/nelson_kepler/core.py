"""Physical parameters and the planar geometry shared by every other module.

Units follow the usual convention of this problem: the force constant ``mu``
and the angular-momentum scale ``lam`` fix the semi-major axis
``a = lam**2 / mu`` and the energy ``-mu / (2 a)``.  The diffusion scale
``epsilon`` plays the role of sqrt(hbar).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

INV_SQRT2 = 1.0 / math.sqrt(2.0)


class DomainError(ValueError):
    """An argument lies outside the region where a quantity is defined."""


class SingularityError(DomainError):
    """Evaluation point on (or numerically indistinguishable from) a singular set."""


class InconsistencyError(ValueError):
    """Redundant parameters disagree (e.g. lam != n * epsilon**2)."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class PoleError(ArithmeticError):
    """A Laguerre polynomial vanishes (relative to its running scale) at the argument."""


# relative; inputs such as eps = 0.2236068 are usually rounded decimals
BOHR_TOL = 1e-6


@dataclass(frozen=True)
class PhysParams:
    """Immutable parameter set for the elliptic state.

    ``n`` is only needed for the finite quantum-number (exact) state; when it
    is given the Bohr scaling ``lam = n * epsilon**2`` is enforced.
    """

    mu: float = 1.0
    lam: float = 1.0
    e: float = 0.5
    epsilon: float = 0.0
    n: int | None = None
    a: float = field(init=False)
    energy: float = field(init=False)

    def __post_init__(self):
        if not (self.mu > 0):
            raise DomainError(f"mu must be > 0, got {self.mu}")
        if not (self.lam > 0):
            raise DomainError(f"lambda must be > 0, got {self.lam}")
        if not (0 < self.e < 1):
            raise DomainError(f"eccentricity must satisfy 0 < e < 1, got {self.e}")
        if not (self.epsilon >= 0):
            raise DomainError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.n is not None:
            if int(self.n) != self.n or self.n < 1:
                raise DomainError(f"n must be an integer >= 1, got {self.n}")
            object.__setattr__(self, "n", int(self.n))
            bohr = self.n * self.epsilon**2
            if abs(bohr - self.lam) > BOHR_TOL * self.lam:
                raise InconsistencyError(
                    f"Bohr scaling violated: n*epsilon^2 = {bohr!r} but lambda = {self.lam!r}"
                )
        object.__setattr__(self, "a", self.lam**2 / self.mu)
        object.__setattr__(self, "energy", -self.mu**2 / (2.0 * self.lam**2))

    @property
    def mean_motion(self):
        """sqrt(mu / a**3), the angular frequency of the Kepler orbit."""
        return math.sqrt(self.mu / self.a**3)

    @property
    def sqrt1me2(self):
        return math.sqrt(1.0 - self.e * self.e)

    def with_epsilon(self, epsilon):
        return replace(self, epsilon=epsilon, n=None)


def params_new(mu=1.0, lam=1.0, e=0.5, epsilon=0.0, n=None):
    return PhysParams(mu=mu, lam=lam, e=e, epsilon=epsilon, n=n)


def quantum_params(n, mu=1.0, lam=1.0, e=0.5):
    """Parameters for the exact state with quantum number ``n`` (epsilon = sqrt(lam/n))."""
    return PhysParams(mu=mu, lam=lam, e=e, epsilon=math.sqrt(lam / n), n=n)


def kepler_ellipse_point(params, theta):
    """Point(s) on the Kepler ellipse at polar angle ``theta`` about the focus at the origin."""
    theta = np.asarray(theta, dtype=float)
    e, a = params.e, params.a
    r = a * (1 - e * e) / (1 + e * np.cos(theta))
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)


@dataclass(frozen=True)
class EllipseSpec:
    """The ellipse u = c of the Keplerian elliptic coordinate family.

    Semi-major axis 2ae/(e+c), eccentricity |c|, one focus at the origin.  The
    second focus sits at distance 2*semi_major*|c| from the first, on the
    negative x axis for c > 0.  ``degenerate`` marks c = 1, the closed
    singular segment.
    """

    c: float
    semi_major: float
    eccentricity: float
    focus1: tuple
    focus2: tuple
    degenerate: bool

    @property
    def center(self):
        return (0.5 * (self.focus1[0] + self.focus2[0]), 0.0)

    @property
    def semi_minor(self):
        return self.semi_major * math.sqrt(max(0.0, 1.0 - self.c * self.c))

    def inside(self, p):
        """Open-interior membership for planar point(s) ``p`` (shape (..., 2))."""
        p = np.asarray(p, dtype=float)
        x, y = p[..., 0], p[..., 1]
        cx = self.center[0]
        if self.degenerate:
            return np.zeros(x.shape, dtype=bool)
        return ((x - cx) / self.semi_major) ** 2 + (y / self.semi_minor) ** 2 < 1.0

    def sample(self, num=200):
        """Closed polyline through the ellipse, parametrised by the coordinate angle v."""
        v = np.linspace(0.0, 2 * np.pi, num)
        cx = self.center[0]
        return np.stack([cx + self.semi_major * np.cos(v), self.semi_minor * np.sin(v)], axis=-1)


def ellipse_family(params, c):
    e, a = params.e, params.a
    if not (-e < c <= 1):
        raise DomainError(f"family parameter must satisfy -e < c <= 1 (e={e}), got {c}")
    semi_major = 2 * a * e / (e + c)
    f2 = -2.0 * semi_major * c
    return EllipseSpec(
        c=float(c),
        semi_major=semi_major,
        eccentricity=abs(c),
        focus1=(0.0, 0.0),
        focus2=(f2, 0.0),
        degenerate=(c == 1),
    )


@dataclass(frozen=True)
class SingularSegment:
    """The planar drift singularity: the open segment x_min_end < x < x_max_end on y = 0.

    For y > 0 the flow is attracted into the sub-interval ``attractive_sub``;
    the rest of the segment repels.
    """

    x_min_end: float
    x_max_end: float
    attractive_sub: tuple

    def contains(self, p, closed=False):
        p = np.asarray(p, dtype=float)
        x, y = p[..., 0], p[..., 1]
        if closed:
            return (y == 0) & (x >= self.x_min_end) & (x <= self.x_max_end)
        return (y == 0) & (x > self.x_min_end) & (x < self.x_max_end)

    def distance(self, p):
        """Euclidean distance from planar point(s) to the closed segment."""
        p = np.asarray(p, dtype=float)
        x, y = p[..., 0], p[..., 1]
        dx = np.clip(x, self.x_min_end, self.x_max_end) - x
        return np.hypot(dx, y)


def singular_segment(params):
    e, a = params.e, params.a
    left = -4 * a * e / (1 + e)
    return SingularSegment(
        x_min_end=left,
        x_max_end=0.0,
        attractive_sub=(left, -2 * a * e / (1 + e)),
    )
