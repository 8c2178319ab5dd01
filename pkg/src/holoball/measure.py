"""Weighted volume measures on the ball, discrete measures and Monte Carlo integration.

``nu_alpha`` is sampled exactly: the direction is uniform on the sphere and
``|z|^2`` follows ``Beta(n, alpha + 1)``.  Random numbers come from Philox
streams keyed by ``(seed, block index)`` so a sample is identical whatever the
number of worker threads.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special, stats
from scipy.spatial import cKDTree

from . import geometry
from ._parallel import pmap

BLOCK = 4096
_CHUNK_ELEMS = 1 << 22
_TREE_MIN = 4096  # atoms; below this a dense pairwise screen is cheaper


class NonFiniteError(ArithmeticError):
    """An integrand produced a non-finite value at a sample point."""

    def __init__(self, message, index=None, point=None):
        super().__init__(message)
        self.index = index
        self.point = point


def normalizing_const(n: int, alpha: float) -> float:
    """``Gamma(n+1+alpha) / (n! Gamma(alpha+1))``, so that ``nu_alpha(B) = 1``."""
    if n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if not alpha > -1:
        raise ValueError(f"alpha must exceed -1, got {alpha!r}")
    return math.exp(math.lgamma(n + 1 + alpha) - math.lgamma(n + 1) - math.lgamma(alpha + 1))


@dataclass(frozen=True)
class WeightParams:
    n: int
    alpha: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if not self.alpha > -1:
            raise ValueError(f"alpha must exceed -1, got {self.alpha!r}")

    @property
    def c_alpha(self) -> float:
        return normalizing_const(self.n, self.alpha)


@dataclass(frozen=True)
class IntegralEstimate:
    value: complex | float
    std_error: float
    n_samples: int

    def __float__(self):
        return float(np.real(self.value))


class DiscreteMeasure:
    """Weighted point cloud standing in for a positive Borel measure on the ball.

    Parameters
    ----------
    points : array_like, shape (N, n)
        Complex atom locations, all strictly inside the ball.
    weights : array_like, shape (N,)
        Nonnegative atom masses.
    gaps : array_like, shape (N,), optional
        Boundary gaps ``1 - |z_i|``; recomputed from ``points`` when omitted.
    total : float, optional
        Declared total mass, e.g. exactly 1 for a probability sample whose
        weights ``1/N`` only sum to 1 up to rounding.  Must agree with the
        weights to relative ``1e-12``.
    """

    def __init__(self, points, weights, gaps=None, total=None):
        points = np.asarray(points, dtype=complex)
        if points.ndim == 1:
            points = points[:, None]
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if points.ndim != 2 or points.shape[0] != weights.shape[0]:
            raise ValueError("points must be (N, n) and weights (N,)")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and nonnegative")
        if gaps is None:
            gaps = 1.0 - np.linalg.norm(points, axis=1)
        gaps = np.asarray(gaps, dtype=float).reshape(-1)
        if np.any(gaps <= 0):
            raise ValueError("all atoms must lie in the open unit ball")
        self.points = points
        self.weights = weights
        self.gaps = gaps
        wsum = math.fsum(weights)
        if total is None:
            total = wsum
        elif abs(total - wsum) > 1e-12 * abs(total):
            raise ValueError(f"declared total {total!r} disagrees with the weight sum {wsum!r}")
        self.total = float(total)

    def __len__(self):
        return self.points.shape[0]

    def __repr__(self):
        return f"DiscreteMeasure(N={len(self)}, n={self.n}, total={self.total:.6g})"

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def defects(self) -> np.ndarray:
        """``1 - |z_i|^2`` from the stored gaps."""
        return self.gaps * (2.0 - self.gaps)

    def point(self, i: int) -> geometry.BallPoint:
        return geometry.BallPoint(self.points[i], self.gaps[i])

    def scaled(self, c: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.points, c * self.weights, self.gaps, c * self.total)

    def restricted(self, mask) -> "DiscreteMeasure":
        mask = np.asarray(mask, dtype=bool)
        return DiscreteMeasure(self.points[mask], self.weights[mask], self.gaps[mask])

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        if other.n != self.n:
            raise geometry.DimensionError("cannot add measures of different dimensions")
        return DiscreteMeasure(
            np.concatenate([self.points, other.points]),
            np.concatenate([self.weights, other.weights]),
            np.concatenate([self.gaps, other.gaps]),
        )

    @classmethod
    def point_mass(cls, point, weight: float = 1.0) -> "DiscreteMeasure":
        if isinstance(point, geometry.BallPoint):
            return cls(point.vec[None, :], [weight], [point.gap])
        return cls(np.atleast_1d(np.asarray(point, dtype=complex))[None, :], [weight])

    @classmethod
    def zero(cls, n: int) -> "DiscreteMeasure":
        return cls(np.zeros((1, n), dtype=complex), [0.0])


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Independent counter-based stream for ``(seed, block)``."""
    key = int(seed) & ((1 << 128) - 1)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, int(block)]))


def _blocks(N: int):
    return [(b, b * BLOCK, min(N, (b + 1) * BLOCK)) for b in range((N + BLOCK - 1) // BLOCK)]


def _sphere(rng: np.random.Generator, m: int, n: int) -> np.ndarray:
    g = rng.standard_normal((m, 2 * n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g[:, :n] + 1j * g[:, n:]


def _nu_block(n, alpha, seed, block, size):
    rng = block_rng(seed, block)
    direction = _sphere(rng, size, n)
    # 1 - |z|^2 ~ Beta(alpha + 1, n); sampling it directly keeps the gap exact
    v = rng.beta(alpha + 1.0, n, size)
    root = np.sqrt(1.0 - v)
    gaps = v / (1.0 + root)
    return root[:, None] * direction, gaps


def sample_nu_alpha(params: WeightParams, N: int, seed: int) -> DiscreteMeasure:
    """``N`` equally weighted atoms distributed exactly as ``nu_alpha``."""
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N!r}")
    parts = pmap(lambda b: _nu_block(params.n, params.alpha, seed, b[0], b[2] - b[1]), _blocks(N))
    points = np.concatenate([p for p, _ in parts])
    gaps = np.concatenate([g for _, g in parts])
    return DiscreteMeasure(points, np.full(N, 1.0 / N), gaps, total=1.0)


def stratified_nu_alpha(params: WeightParams, per_shell: int, depth: int, seed: int, qmc: bool = False) -> DiscreteMeasure:
    """Discretization of ``nu_alpha`` with ``per_shell`` atoms in each dyadic shell.

    Shell ``k < depth`` holds the points with ``1 - |z|`` in ``[2^-(k+1), 2^-k)``
    and the last shell everything closer to the sphere.  Each atom carries its
    shell's exact mass divided by ``per_shell``, so balls ``Delta(a, r)`` with
    ``1 - |a|`` down to about ``2^-depth`` contain comparable numbers of atoms.
    The sample is unbiased for ``nu_alpha``; the total mass is exactly 1.
    With ``qmc`` each shell is filled from a scrambled Sobol sequence instead
    of independent draws (``per_shell`` should then be a power of two).
    """
    if per_shell < 1 or depth < 0:
        raise ValueError("per_shell must be positive and depth nonnegative")
    n, alpha = params.n, params.alpha
    edges = np.array([2.0**-k for k in range(depth + 1)] + [0.0])
    # 1 - |z|^2 ~ Beta(alpha + 1, n); work with its CDF, which is accurate near 0
    v_edges = edges * (2.0 - edges)
    cdf = special.betainc(alpha + 1.0, n, v_edges)
    mass = cdf[:-1] - cdf[1:]

    def shell(k):
        if qmc:
            # scrambling needs a SeedSequence-backed generator
            rng = np.random.default_rng([int(seed), k])
            x = stats.qmc.Sobol(2 * n + 1, scramble=True, seed=rng).random(per_shell)
            g = special.ndtri(np.clip(x[:, :-1], 1e-300, None))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            u = cdf[k + 1] + x[:, -1] * mass[k]
            v = np.clip(special.betaincinv(alpha + 1.0, n, u), v_edges[k + 1], v_edges[k])
            root = np.sqrt(1.0 - v)
            return root[:, None] * (g[:, :n] + 1j * g[:, n:]), v / (1.0 + root)
        out_p, out_g = [], []
        for b, lo, hi in _blocks(per_shell):
            rng = block_rng(seed, (k << 32) | b)
            size = hi - lo
            direction = _sphere(rng, size, n)
            u = cdf[k + 1] + rng.random(size) * mass[k]
            v = np.clip(special.betaincinv(alpha + 1.0, n, u), v_edges[k + 1], v_edges[k])
            root = np.sqrt(1.0 - v)
            out_p.append(root[:, None] * direction)
            out_g.append(v / (1.0 + root))
        return np.concatenate(out_p), np.concatenate(out_g)

    parts = pmap(shell, range(depth + 1))
    points = np.concatenate([p for p, _ in parts])
    gaps = np.concatenate([g for _, g in parts])
    weights = np.repeat(mass / per_shell, per_shell)
    return DiscreteMeasure(points, weights, gaps, total=1.0)


def sample_nu_alpha_reweighted(
    params: WeightParams, N: int, seed: int, proposal_alpha: float
) -> DiscreteMeasure:
    """Importance sample of ``nu_alpha`` drawn from ``nu_{proposal_alpha}``.

    A smaller proposal weight puts more atoms near the sphere while the
    weights ``c_alpha / c_prop * (1 - |z|^2)^(alpha - prop) / N`` shrink there.
    """
    proposal = sample_nu_alpha(WeightParams(params.n, proposal_alpha), N, seed)
    ratio = normalizing_const(params.n, params.alpha) / normalizing_const(params.n, proposal_alpha)
    w = ratio * proposal.defects ** (params.alpha - proposal_alpha) / N
    return DiscreteMeasure(proposal.points, w, proposal.gaps)


def uniform_ball(n: int, N: int, seed: int, radius: float = 1.0) -> np.ndarray:
    """``N`` points uniform (Lebesgue) in the Euclidean ball of the given radius."""

    def block(b):
        rng = block_rng(seed, b[0])
        size = b[2] - b[1]
        direction = _sphere(rng, size, n)
        rad = radius * rng.random(size) ** (1.0 / (2 * n))
        return rad[:, None] * direction

    return np.concatenate(pmap(block, _blocks(N)))


def sphere_points(n: int, N: int, seed: int) -> np.ndarray:
    """``N`` uniform random unit vectors in C^n."""
    return np.concatenate(pmap(lambda b: _sphere(block_rng(seed, b[0]), b[2] - b[1], n), _blocks(N)))


def recenter(mu: DiscreteMeasure, a, alpha: float) -> DiscreteMeasure:
    """Defensive importance resampling of a ``nu_alpha`` sample around ``a``.

    Returns ``2N`` atoms: the original ones and their images under ``sigma_a``,
    weighted by the balance heuristic ``w_i / (1 + J_a(x))`` where ``J_a`` is
    the density of the push-forward of ``nu_alpha`` by ``sigma_a``.  Integrals
    against the result are unbiased for ``nu_alpha`` and resolve integrands
    concentrated near ``a`` far better than the plain sample.
    """
    a_vec = geometry.coords(a)
    if np.linalg.norm(a_vec) < geometry.ZERO_NORM:
        return mu
    moved = geometry.mobius(a_vec, mu.points)
    moved_gaps = _gaps_from_defect(_moved_defect(a, mu))
    points = np.concatenate([mu.points, moved])
    gaps = np.concatenate([mu.gaps, moved_gaps])
    re, im = geometry._re_im_inner(points, a_vec[None, :])
    jac = (float(geometry.defect(a)) / ((1.0 - re) ** 2 + im**2)) ** (mu.n + 1 + alpha)
    weights = np.concatenate([mu.weights, mu.weights]) / (1.0 + jac)
    return DiscreteMeasure(points, weights, gaps)


def _moved_defect(a, mu: DiscreteMeasure) -> np.ndarray:
    # 1 - |sigma_a(z)|^2 = (1-|a|^2)(1-|z|^2)/|1-<z,a>|^2
    a_vec = geometry.coords(a)
    re, im = geometry._re_im_inner(mu.points, a_vec[None, :])
    return float(geometry.defect(a)) * mu.defects / ((1.0 - re) ** 2 + im**2)


def _gaps_from_defect(d: np.ndarray) -> np.ndarray:
    d = np.minimum(d, 1.0)
    return d / (1.0 + np.sqrt(1.0 - d))


def _estimate(values: np.ndarray, weights: np.ndarray, total: float | None = None) -> IntegralEstimate:
    N = values.shape[0]
    value = np.sum(weights * values)
    wsum = np.sum(weights)
    if total is not None and wsum > 0:
        # total times the weighted mean: constants integrate to the declared mass exactly
        value = total * (value / wsum)
    if N == 1:
        return IntegralEstimate(value, 0.0, 1)
    y = N * weights * values
    var = np.sum(np.abs(y - value) ** 2) / (N - 1)
    return IntegralEstimate(value, float(np.sqrt(var / N)), N)


def integrate(f, mu: DiscreteMeasure) -> IntegralEstimate:
    """Weighted sum ``sum_i w_i f(z_i)`` with its sample standard error.

    ``f`` receives the ``(N, n)`` array of atoms and returns ``N`` values.
    """
    values = np.asarray(f(mu.points))
    if values.shape != (len(mu),):
        values = np.broadcast_to(values, (len(mu),))
    bad = ~np.isfinite(values)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NonFiniteError(f"integrand is not finite at atom {i}: {mu.points[i]}", i, mu.points[i])
    return _estimate(values, mu.weights, mu.total)


def estimate_from_values(values, mu: DiscreteMeasure) -> IntegralEstimate:
    """Like :func:`integrate` for values already evaluated at the atoms."""
    return integrate(lambda _: values, mu)


def ball_mass(mu: DiscreteMeasure, center, r: float):
    """``mu(Delta(center, r))``; ``center`` may be one point or an ``(G, n)`` array."""
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must lie in (0, 1), got {r!r}")
    if isinstance(center, geometry.BallPoint):
        return float(np.sum(mu.weights[geometry.rho(center, mu.points) < r]))
    c = np.asarray(center, dtype=complex)
    if c.ndim == 1:
        return float(np.sum(mu.weights[geometry.rho(c, mu.points) < r]))
    if len(mu) >= _TREE_MIN:
        return _ball_mass_tree(mu, c, r)
    return pairwise_reduce(c, mu, lambda a, pts: geometry.pairwise_within(a, pts, r).astype(float))


def _ball_mass_tree(mu: DiscreteMeasure, centers: np.ndarray, r: float) -> np.ndarray:
    # Delta(a, r) is an ellipsoid whose longest semi-axis is r*sqrt(t), so it sits
    # inside the Euclidean ball of that radius about its center; a KD-tree finds
    # those candidates and pairwise_within decides them
    tree = cKDTree(np.column_stack([mu.points.real, mu.points.imag]))
    d = geometry.defect(centers)
    denom = 1.0 - r * r * (1.0 - d)
    mid = (1.0 - r * r) * centers / denom[:, None]
    radius = r * np.sqrt(d / denom) * (1.0 + 1e-9) + 1e-12
    query = np.column_stack([mid.real, mid.imag])

    def one(i):
        idx = np.sort(np.asarray(tree.query_ball_point(query[i], radius[i]), dtype=np.intp))
        if idx.size == 0:
            return 0.0
        inside = geometry.pairwise_within(centers[i][None, :], mu.points[idx], r)[0]
        return float(np.sum(mu.weights[idx][inside]))

    return np.asarray(pmap(one, range(centers.shape[0])), dtype=float)


def pairwise_reduce(centers: np.ndarray, mu: DiscreteMeasure, kernel) -> np.ndarray:
    """``sum_i w_i kernel(a, z_i)`` for every row ``a`` of ``centers``.

    ``kernel(a_chunk, points)`` returns a ``(g, N)`` array.
    """
    centers = np.asarray(centers, dtype=complex)
    step = max(1, _CHUNK_ELEMS // max(1, len(mu)))
    chunks = [centers[i : i + step] for i in range(0, centers.shape[0], step)]
    # explicit row sums, not BLAS, so the reduction order is fixed
    parts = pmap(lambda c: np.sum(kernel(c, mu.points) * mu.weights, axis=1), chunks)
    if not parts:
        return np.zeros(0)
    return np.concatenate(parts)


def write_csv(mu: DiscreteMeasure, path) -> None:
    """One row per atom: real and imaginary parts of each coordinate, then weight."""
    n = mu.n
    header = [f"re_z{j + 1}" for j in range(n)] + [f"im_z{j + 1}" for j in range(n)] + ["weight"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for z, w in zip(mu.points, mu.weights):
            row = [*z.real, *z.imag, w]
            writer.writerow([f"{v:.17g}" for v in row])


def read_csv(path) -> DiscreteMeasure:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    if (len(header) - 1) % 2 or len(header) < 3 or header[-1] != "weight":
        raise ValueError(f"{path}: expected 2n coordinate columns and a weight column")
    n = (len(header) - 1) // 2
    data = np.asarray(rows, dtype=float).reshape(-1, 2 * n + 1)
    points = data[:, :n] + 1j * data[:, n : 2 * n]
    return DiscreteMeasure(points, data[:, 2 * n])


def uniform_pseudo_ball(a, r: float, N: int, seed: int) -> np.ndarray:
    """``N`` points of ``Delta(a, r)``: images under ``sigma_a`` of uniform points of ``|w| < r``."""
    a_vec = geometry.coords(a)
    return geometry.mobius(a_vec, uniform_ball(a_vec.shape[0], N, seed, r))
