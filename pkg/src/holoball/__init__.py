"""Numerics on the unit ball of C^n: geometry, weighted Bergman measures,
Bergman-Carleson criteria and norm estimates for differences of composition
operators between weighted Bergman spaces."""

__version__ = "0.1.0"

from .geometry import BallPoint, bergman_dist, ellipsoid_of, inner, mobius, rho  # noqa: E402
from .measure import DiscreteMeasure, IntegralEstimate, WeightParams, integrate, sample_nu_alpha  # noqa: E402

__all__ = [
    "BallPoint",
    "DiscreteMeasure",
    "IntegralEstimate",
    "WeightParams",
    "bergman_dist",
    "ellipsoid_of",
    "inner",
    "integrate",
    "mobius",
    "rho",
    "sample_nu_alpha",
]
