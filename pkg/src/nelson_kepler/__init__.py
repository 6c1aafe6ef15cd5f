"""Nelson diffusions for the atomic elliptic state and their Keplerian limit."""

from .core import (
    ConvergenceError,
    DomainError,
    EllipseSpec,
    InconsistencyError,
    PhysParams,
    PoleError,
    SingularityError,
    SingularSegment,
    ellipse_family,
    kepler_ellipse_point,
    params_new,
    quantum_params,
    singular_segment,
)
from .coords import AlphaBeta, KeplerCoord, alpha_beta_uv, from_cartesian, jacobian, to_cartesian
from .sim import SimConfig
from .trajectory import Trajectory

__version__ = "0.1.0"
