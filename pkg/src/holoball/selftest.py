"""Randomized invariant checks for the ball geometry.

Used by ``holoball geometry-selftest``; each check reports its worst observed
statistic next to the threshold it is held to.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .measure import uniform_ball


@dataclass(frozen=True)
class Check:
    name: str
    n: int
    statistic: float
    threshold: float
    passed: bool

    def to_dict(self):
        return {
            "name": self.name,
            "n": self.n,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "passed": self.passed,
        }


def _le(name, n, stat, thr):
    return Check(name, n, float(stat), thr, bool(stat <= thr))


def involution(z, w) -> float:
    """Max of ``|sigma_z(sigma_z(w)) - w|``."""
    return float(np.max(np.abs(geometry.mobius(z, geometry.mobius(z, w)) - w)))


def bound_slack(z, w) -> np.ndarray:
    """``|z-w|/|1-<z,w>| - rho(z,w)``; nonnegative up to rounding."""
    return geometry.rho_upper_bound(z, w) - geometry.rho(z, w)


def triangle_slack(z, a, w) -> np.ndarray:
    """``(rho(z,a)+rho(a,w))/(1+rho(z,a)rho(a,w)) - rho(z,w)``."""
    x, y = geometry.rho(z, a), geometry.rho(a, w)
    return (x + y) / (1.0 + x * y) - geometry.rho(z, w)


def ellipsoid_disagreements(z, w, r: float, band: float = 1e-9) -> int:
    """Pairs where ``rho < r`` and ellipsoid membership differ, outside the band ``|rho - r| < band``."""
    bad = 0
    rho = geometry.rho(z, w)
    for i in range(z.shape[0]):
        if abs(rho[i] - r) < band:
            continue
        bad += int(bool(geometry.ellipsoid_of(z[i], r).contains(w[i])) != bool(rho[i] < r))
    return bad


def ellipsoid_sample(n: int, N: int, seed: int, r: float):
    """Centers uniform in the ball and partners concentrated around ``Delta(z, r)``."""
    z = uniform_ball(n, N, seed)
    # partners at pseudo-hyperbolic radius spread around r, so both sides of the boundary are hit
    u = uniform_ball(n, N, seed + 1, radius=min(0.999, 1.5 * r))
    return z, geometry.mobius(z, u)


def geometry_suite(seed: int = 0, N: int = 10_000, dims=(1, 2, 3), r: float = 0.5) -> list[Check]:
    out = []
    for n in dims:
        z = uniform_ball(n, N, seed)
        w = uniform_ball(n, N, seed + 1)
        a = uniform_ball(n, N, seed + 2)
        out.append(_le("involution", n, involution(z, w), 1e-10))
        ident = geometry.one_minus_rho_squared(z, w)
        direct = geometry.defect(geometry.mobius(z, w))
        # float64 evaluation of 1-|sigma|^2 loses digits near the sphere, so it is
        # compared with an absolute tolerance; the identity itself is checked to
        # relative precision in the test suite against a high-precision oracle
        out.append(_le("defect_identity_abs", n, np.max(np.abs(ident - direct)), 1e-12))
        out.append(_le("rho_bound", n, max(0.0, -float(np.min(bound_slack(z, w)))), 1e-12))
        if n == 1:
            out.append(_le("rho_equality", n, float(np.max(np.abs(bound_slack(z, w)))), 1e-12))
        out.append(_le("strong_triangle", n, max(0.0, -float(np.min(triangle_slack(z, a, w)))), 1e-12))
        out.append(_le("symmetry", n, float(np.max(np.abs(geometry.rho(z, w) - geometry.rho(w, z)))), 0.0))
        out.append(_le("identity_of_indiscernibles", n, float(np.max(geometry.rho(z, z))), 1e-12))
        if n <= 2:
            zc, wc = ellipsoid_sample(n, min(N, 2000), seed + 3, r)
            out.append(_le("ellipsoid_disagreements", n, ellipsoid_disagreements(zc, wc, r), 0))
    return out
