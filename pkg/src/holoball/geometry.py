"""Geometry of the open unit ball of C^n.

Points are complex arrays whose last axis holds the ``n`` coordinates; every
function broadcasts over leading axes.  A single point can also be wrapped in
:class:`BallPoint`, which carries the boundary gap ``1 - |z|`` explicitly so
that ``1 - |z|^2`` stays accurate very close to the sphere.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: below this norm a vector is treated as the origin in projections
ZERO_NORM = 1e-300

# differences like 1 - |z|^2 and 1 - <z, w> are accumulated in extended
# precision; on platforms without it this is plain float64
_XP = np.longdouble
_EPS = 2.0**-52


class DimensionError(ValueError):
    """Raised when two points live in different dimensions."""


@dataclass(frozen=True)
class BallPoint:
    """A point of the open unit ball with its boundary gap.

    ``gap`` is authoritative over ``|vec|`` close to the boundary; use
    :meth:`from_vec` or :meth:`from_direction` rather than the raw constructor.
    """

    vec: np.ndarray
    gap: float

    def __post_init__(self):
        vec = np.atleast_1d(np.asarray(self.vec, dtype=complex))
        if vec.ndim != 1 or vec.size == 0:
            raise ValueError("BallPoint needs a 1-d coordinate vector")
        if not np.all(np.isfinite(vec)):
            raise ValueError("BallPoint coordinates must be finite")
        if not (0.0 < self.gap <= 1.0):
            raise ValueError(f"gap must lie in (0, 1], got {self.gap!r}")
        norm = float(np.linalg.norm(vec))
        # away from the sphere |vec| is accurate, so the two must agree
        if norm <= 0.999 and abs((1.0 - norm) - self.gap) > 1e-12 * self.gap:
            raise ValueError(f"gap {self.gap!r} inconsistent with |vec| = {norm!r}")
        vec.setflags(write=False)
        object.__setattr__(self, "vec", vec)
        object.__setattr__(self, "gap", float(self.gap))

    @classmethod
    def from_vec(cls, vec) -> "BallPoint":
        vec = np.atleast_1d(np.asarray(vec, dtype=complex))
        norm = float(np.linalg.norm(vec))
        if not norm < 1.0:
            raise ValueError(f"point with norm {norm!r} is not in the open ball")
        return cls(vec, 1.0 - norm)

    @classmethod
    def from_direction(cls, direction, gap: float) -> "BallPoint":
        """The point ``(1 - gap) * direction / |direction|``."""
        direction = np.atleast_1d(np.asarray(direction, dtype=complex))
        unit = direction / np.linalg.norm(direction)
        return cls((1.0 - gap) * unit, gap)

    @classmethod
    def origin(cls, n: int) -> "BallPoint":
        return cls(np.zeros(n, dtype=complex), 1.0)

    @property
    def dim(self) -> int:
        return self.vec.shape[0]

    @property
    def norm(self) -> float:
        return 1.0 - self.gap

    @property
    def defect(self) -> float:
        """``1 - |z|^2`` computed from the gap."""
        return self.gap * (2.0 - self.gap)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.vec, dtype=dtype)


@dataclass(frozen=True)
class Ellipsoid:
    """Euclidean realization of a pseudo-hyperbolic ball.

    The semi-axis along the complex line through ``axis`` is ``r * t`` and the
    orthogonal semi-axes are ``r * sqrt(t)``.
    """

    axis: np.ndarray
    center: np.ndarray
    t: float
    r: float

    def contains(self, w) -> np.ndarray:
        p, q = proj_pair(self.axis, w)
        along = np.sum(np.abs(p - self.center) ** 2, axis=-1) / (self.r * self.t) ** 2
        across = np.sum(np.abs(q) ** 2, axis=-1) / (self.r**2 * self.t)
        return along + across < 1.0


def coords(x) -> np.ndarray:
    """Complex coordinate array of a point, a BallPoint, or an array of points."""
    if isinstance(x, BallPoint):
        return x.vec
    return np.asarray(x, dtype=complex)


def defect(x) -> np.ndarray:
    """``1 - |x|^2``, gap-accurate for BallPoint inputs."""
    if isinstance(x, BallPoint):
        return np.float64(x.defect)
    return _defect_x(coords(x)).astype(float)


def _defect_x(x):
    if isinstance(x, BallPoint):
        return _XP(x.gap) * (2 - _XP(x.gap))
    re, im = x.real.astype(_XP), x.imag.astype(_XP)
    return 1 - np.sum(re * re + im * im, axis=-1)


def _check_dims(z, w):
    if z.shape[-1] != w.shape[-1]:
        raise DimensionError(f"dimension mismatch: {z.shape[-1]} vs {w.shape[-1]}")


def inner(z, w) -> np.ndarray:
    """Hermitian product ``<z, w> = sum z_i conj(w_i)``."""
    z, w = coords(z), coords(w)
    _check_dims(z, w)
    return np.sum(z * np.conj(w), axis=-1)


def _re_im_inner(z, w):
    # explicit real arithmetic keeps |1 - <z,w>|^2 bitwise symmetric in (z, w)
    zr, zi = z.real.astype(_XP), z.imag.astype(_XP)
    wr, wi = w.real.astype(_XP), w.imag.astype(_XP)
    re = np.sum(zr * wr + zi * wi, axis=-1)
    im = np.sum(zi * wr - zr * wi, axis=-1)
    return re, im


def kernel_modulus(z, w) -> np.ndarray:
    """``|1 - <z, w>|`` in float64, broadcasting; for bulk kernel sums.

    Loops over coordinates rather than calling BLAS so the summation order is
    fixed.
    """
    zc, wc = coords(z), coords(w)
    _check_dims(zc, wc)
    re = 1.0 - zc[..., 0].real * wc[..., 0].real - zc[..., 0].imag * wc[..., 0].imag
    im = zc[..., 0].real * wc[..., 0].imag - zc[..., 0].imag * wc[..., 0].real
    for k in range(1, zc.shape[-1]):
        re = re - zc[..., k].real * wc[..., k].real - zc[..., k].imag * wc[..., k].imag
        im = im + zc[..., k].real * wc[..., k].imag - zc[..., k].imag * wc[..., k].real
    return np.sqrt(re * re + im * im)


def _den_x(z, w):
    """``|1 - <z, w>|^2`` in extended precision.

    The real part uses ``1 - Re<z,w> = ((1-|z|^2) + (1-|w|^2) + |z-w|^2) / 2``,
    which has no cancellation and picks up BallPoint gaps.
    """
    zc, wc = coords(z), coords(w)
    _, im = _re_im_inner(zc, wc)
    dr = zc.real.astype(_XP) - wc.real.astype(_XP)
    di = zc.imag.astype(_XP) - wc.imag.astype(_XP)
    re = (_defect_x(z) + _defect_x(w) + np.sum(dr * dr + di * di, axis=-1)) / 2
    return re**2 + im**2


def proj_pair(z, w):
    """Orthogonal projections ``(P_z w, Q_z w)`` onto ``[z]`` and its complement."""
    z, w = coords(z), coords(w)
    _check_dims(z, w)
    # scale by the largest coordinate so |z|^2 cannot underflow near the 1e-300 cutoff
    m = np.max(np.abs(z), axis=-1)
    zero = m < ZERO_NORM
    zs = z / np.where(zero, 1.0, m)[..., None]
    zz = np.sum(np.abs(zs) ** 2, axis=-1)
    coef = np.where(zero, 0.0, np.sum(w * np.conj(zs), axis=-1) / np.where(zero, 1.0, zz))
    p = coef[..., None] * zs
    p = np.broadcast_to(p, np.broadcast_shapes(p.shape, w.shape))
    return p, w - p


def mobius(z, w):
    """The involutive automorphism ``sigma_z`` exchanging ``0`` and ``z``, at ``w``.

    Returns a :class:`BallPoint` when both arguments are BallPoints, otherwise
    a complex array.
    """
    zc, wc = coords(z), coords(w)
    _check_dims(zc, wc)
    zx, wx = zc.astype(np.clongdouble), wc.astype(np.clongdouble)
    zz = np.sum(zx.real**2 + zx.imag**2, axis=-1)
    zero = zz < _XP(ZERO_NORM) ** 2
    gw = np.sum(wx * np.conj(zx), axis=-1)
    coef = np.where(zero, 0, gw / np.where(zero, 1, zz))
    p = coef[..., None] * zx
    q = wx - p
    dz = _defect_x(z)
    out = ((zx - p - np.sqrt(dz)[..., None] * q) / (1 - gw)[..., None]).astype(complex)
    if isinstance(z, BallPoint) and isinstance(w, BallPoint):
        d = float(dz * _defect_x(w) / _den_x(z, w))
        d = min(d, 1.0)
        return BallPoint(out, d / (1.0 + np.sqrt(1.0 - d)))
    return out


def _rho_squared(z, w):
    zc, wc = coords(z), coords(w)
    _check_dims(zc, wc)
    dz, dw = _defect_x(z), _defect_x(w)
    diff = zc - wc
    dd = np.sum(diff.real**2 + diff.imag**2, axis=-1)
    # |1-<z,w>|^2 rho^2 = (1-|z|^2)|z-w|^2 + |<z-w,z>|^2, both terms nonnegative;
    # averaging the z- and w-based forms makes the result exactly symmetric
    xz = dz * dd + np.abs(np.sum(diff * np.conj(zc), axis=-1)) ** 2
    xw = dw * dd + np.abs(np.sum(diff * np.conj(wc), axis=-1)) ** 2
    return (0.5 * (xz + xw) / _den_x(z, w)).astype(float)


def rho(z, w) -> np.ndarray:
    """Pseudo-hyperbolic distance ``|sigma_z(w)|``, in ``[0, 1)``."""
    r = np.sqrt(_rho_squared(z, w))
    return np.minimum(r, np.nextafter(1.0, 0.0))


def bergman_dist(z, w) -> np.ndarray:
    """Bergman metric ``artanh(rho(z, w))``."""
    return np.arctanh(rho(z, w))


def rho_upper_bound(z, w) -> np.ndarray:
    """``|z - w| / |1 - <z, w>|``; never below :func:`rho`, equal to it when n = 1."""
    zc, wc = coords(z), coords(w)
    _check_dims(zc, wc)
    return np.linalg.norm(zc - wc, axis=-1) / np.abs(1.0 - inner(zc, wc))


def one_minus_rho_squared(z, w) -> np.ndarray:
    """``(1-|z|^2)(1-|w|^2) / |1-<z,w>|^2``, accurate when rho is close to 1."""
    zc, wc = coords(z), coords(w)
    _check_dims(zc, wc)
    return (_defect_x(z) * _defect_x(w) / _den_x(z, w)).astype(float)


def ellipsoid_of(z, r: float) -> Ellipsoid:
    """Center and shape parameter of the pseudo-hyperbolic ball ``Delta(z, r)``."""
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must lie in (0, 1), got {r!r}")
    zc = coords(z)
    dz = float(defect(z))
    zz = 1.0 - dz
    denom = 1.0 - r * r * zz
    center = (1.0 - r * r) * zc / denom
    return Ellipsoid(axis=zc, center=center, t=dz / denom, r=float(r))


def in_pseudo_ball(w, center, r: float) -> np.ndarray:
    """Strict membership ``rho(center, w) < r``."""
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must lie in (0, 1), got {r!r}")
    return rho(center, w) < r


def pseudo_ball_outer_radius(a_norm, r: float):
    """Largest Euclidean norm reached by ``Delta(a, r)`` when ``|a| = a_norm``."""
    a_norm = np.asarray(a_norm, dtype=float)
    return (a_norm + r) / (1.0 + r * a_norm)


def pairwise_within(z, w, r: float, band: float = 1e-9) -> np.ndarray:
    """Boolean ``(len(z), len(w))`` matrix of ``rho(z_i, w_j) < r``.

    A float64 matrix-product screen decides every pair clearly away from the
    threshold (``band`` plus a rounding bound that grows as ``1 - <z, w>``
    shrinks); the remaining pairs are settled with :func:`rho`, so the result
    agrees with ``rho(z_i, w_j) < r``.
    """
    zc = np.atleast_2d(coords(z))
    wc = np.atleast_2d(coords(w))
    _check_dims(zc, wc)
    dz = defect(zc)
    dw = defect(wc)
    g = zc @ np.conj(wc).T
    den = (1.0 - g.real) ** 2 + g.imag**2
    rho2 = 1.0 - dz[:, None] * dw[None, :] / den
    out = rho2 < r * r
    err = (1.0 - rho2) * (8 * zc.shape[1] * _EPS / np.sqrt(den) + 16 * _EPS)
    unsure = np.abs(rho2 - r * r) < band + err
    if np.any(unsure):
        i, j = np.nonzero(unsure)
        out[i, j] = rho(zc[i], wc[j]) < r
    return out
