"""Separated sequences and r-lattices for the pseudo-hyperbolic metric.

Lattices are built greedily from a deterministic Kronecker sequence mapped into
the Euclidean ball of radius ``R_max``; a candidate is admitted when it is at
pseudo-hyperbolic distance at least ``r`` from every admitted center.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from . import geometry
from .measure import DiscreteMeasure, block_rng, read_csv, write_csv

_CHUNK = 1024


@dataclass
class Lattice:
    n: int
    r: float
    centers: np.ndarray
    separation: float
    cutoff: float
    stream_seed: int = 0
    candidates_used: int = field(default=0, compare=False)

    def __len__(self):
        return self.centers.shape[0]

    def save(self, path) -> None:
        """Write ``<path>`` (CSV, weight column fixed at 1) and ``<path>.json``."""
        path = Path(path)
        write_csv(DiscreteMeasure(self.centers, np.ones(len(self))), path)
        meta = {
            "n": self.n,
            "r": self.r,
            "R_max": self.cutoff,
            "separation": self.separation,
            "stream_seed": self.stream_seed,
        }
        path.with_name(path.name + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "Lattice":
        path = Path(path)
        meta = json.loads(path.with_name(path.name + ".json").read_text())
        pts = read_csv(path).points
        return cls(meta["n"], meta["r"], pts, meta["separation"], meta["R_max"], meta["stream_seed"])


def kronecker_stream(dim: int, seed: int):
    """Infinite generator of Kronecker (R_d) points in the unit cube, in blocks."""
    # phi_d is the unique positive root of x^(d+1) = x + 1
    phi = 2.0
    for _ in range(64):
        phi = (1.0 + phi) ** (1.0 / (dim + 1))
    alpha = (1.0 / phi) ** np.arange(1, dim + 1) % 1.0
    offset = block_rng(seed, 0).random(dim)
    start = 1
    while True:
        k = np.arange(start, start + _CHUNK, dtype=float)[:, None]
        yield (offset + k * alpha) % 1.0
        start += _CHUNK


def _to_ball(u: np.ndarray, n: int, radius: float) -> np.ndarray:
    g = ndtri(np.clip(u[:, : 2 * n], 1e-300, 1 - 1e-16))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = radius * u[:, 2 * n] ** (1.0 / (2 * n))
    return rad[:, None] * (g[:, :n] + 1j * g[:, n:])


def default_budget(R_max: float, n: int = 1) -> int:
    # leftover holes are thin slivers whose volume shrinks slowly with the budget,
    # markedly so in higher dimension; hence the factor 10 per extra dimension.
    # rounding first keeps 1/(1-0.8) from landing on 5.000000000000001
    return 10_000 * math.ceil(round(1.0 / (1.0 - R_max), 9)) * 10 ** (n - 1)


def build_lattice(n: int, r: float, R_max: float, stream_seed: int = 0, budget: int | None = None) -> Lattice:
    """Greedy r-separated, r-covering point set of the ball of radius ``R_max``.

    The candidate stream starts at the origin.  Construction stops once
    ``budget`` consecutive candidates have been rejected.
    """
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must lie in (0, 1), got {r!r}")
    if not 0.0 < R_max < 1.0:
        raise ValueError(f"R_max must lie in (0, 1), got {R_max!r}")
    if budget is None:
        budget = default_budget(R_max, n)

    centers = [np.zeros(n, dtype=complex)]
    run = 0  # consecutive rejections carried across chunks
    used = 1
    done = False
    for u in kronecker_stream(2 * n + 1, stream_seed):
        cand = _to_ball(u, n, R_max)
        current = np.asarray(centers)
        # centers only accumulate, so a rejection here is final
        far = ~np.any(geometry.pairwise_within(cand, current, r), axis=1)
        last = -1
        for i in np.flatnonzero(far):
            if run + i - last - 1 >= budget:
                break
            fresh = np.asarray(centers[len(current):])
            if fresh.size and np.any(geometry.rho(cand[i], fresh) < r):
                continue
            centers.append(cand[i])
            run, last = 0, i
        run += cand.shape[0] - last - 1
        if run >= budget:
            used += cand.shape[0] - (run - budget)
            done = True
        else:
            used += cand.shape[0]
        if done:
            break

    pts = np.asarray(centers)
    order = np.argsort(np.linalg.norm(pts, axis=1), kind="stable")
    pts = pts[order]
    return Lattice(n, float(r), pts, separation_of(pts), float(R_max), int(stream_seed), used)


def separation_of(points) -> float:
    """Minimum pseudo-hyperbolic distance between distinct members (1 for a singleton)."""
    pts = np.asarray(points, dtype=complex)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[0] == 0:
        raise ValueError("separation of an empty point set is undefined")
    if pts.shape[0] == 1:
        return 1.0
    best = 1.0
    for i in range(pts.shape[0] - 1):
        best = min(best, float(np.min(geometry.rho(pts[i], pts[i + 1 :]))))
    return best


def count_in(lattice: Lattice, z, r: float) -> int:
    """Number of lattice centers inside ``Delta(z, r)``."""
    return int(np.count_nonzero(geometry.in_pseudo_ball(lattice.centers, z, r)))


def counting_bound(separation: float, r: float, n: int) -> float:
    """``(2/delta + 1)^(2n) / (1 - r^2)^n``."""
    return (2.0 / separation + 1.0) ** (2 * n) / (1.0 - r * r) ** n


def uncovered(lattice: Lattice, probes) -> np.ndarray:
    """Mask of probe points with no center at distance below ``lattice.r``."""
    probes = np.asarray(probes, dtype=complex)
    out = np.ones(probes.shape[0], dtype=bool)
    step = max(1, (1 << 22) // max(1, len(lattice)))
    for i in range(0, probes.shape[0], step):
        block = probes[i : i + step]
        out[i : i + step] = ~np.any(geometry.pairwise_within(block, lattice.centers, lattice.r), axis=1)
    return out
