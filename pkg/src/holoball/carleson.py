"""Bergman-Carleson criteria for discrete measures on the ball.

For ``lambda >= 1`` a measure is compared through two supremum quantities (a
ball-mass ratio and a Berezin-type transform); for ``lambda < 1`` through three
``L^t`` / ``l^t`` norms with ``t = 1 / (1 - lambda)``.  Suprema over the ball are
estimated on radial shells crossed with sphere directions, then refined by a
golden-section search along the best direction.
"""
from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import geometry
from .lattice import Lattice
from .measure import DiscreteMeasure, NonFiniteError, ball_mass, pairwise_reduce, sphere_points

#: ``|1 - <z, a>|`` is floored here before it is raised to a negative power
KERNEL_FLOOR = 1e-14
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class CriterionParams:
    lam: float
    alpha: float
    r: float
    n: int
    s_exp: float | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam!r}")
        if not self.alpha > -1:
            raise ValueError(f"alpha must exceed -1, got {self.alpha!r}")
        if not 0.0 < self.r < 1.0:
            raise ValueError(f"r must lie in (0, 1), got {self.r!r}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if self.s_exp is None:
            object.__setattr__(self, "s_exp", self.n + 1.0 + self.alpha)
        if not self.s_exp > 0:
            raise ValueError(f"s_exp must be positive, got {self.s_exp!r}")

    @property
    def weight_exp(self) -> float:
        """``(n + 1 + alpha) lambda``."""
        return (self.n + 1 + self.alpha) * self.lam


class FloorCounter:
    """Thread-safe count of kernel-floor events."""

    def __init__(self):
        self.count = 0
        self._lock = threading.Lock()

    def add(self, k: int):
        if k:
            with self._lock:
                self.count += int(k)


# ---------------------------------------------------------------- sup grids


@dataclass(frozen=True)
class SupGrid:
    """Shell radii crossed with unit directions, plus the origin."""

    radii: tuple
    directions: np.ndarray
    refine: bool = True
    iterations: int = 30

    def __post_init__(self):
        radii = tuple(float(x) for x in self.radii)
        if not radii or any(not 0.0 < x < 1.0 for x in radii) or list(radii) != sorted(set(radii)):
            raise ValueError("grid radii must be strictly increasing in (0, 1)")
        object.__setattr__(self, "radii", radii)

    @property
    def n(self) -> int:
        return self.directions.shape[1]

    def points(self) -> np.ndarray:
        rad = np.asarray(self.radii)
        pts = (rad[:, None, None] * self.directions[None, :, :]).reshape(-1, self.n)
        return np.concatenate([np.zeros((1, self.n), dtype=complex), pts])


def directions(n: int, count: int, seed: int = 0) -> np.ndarray:
    """Unit directions: equally spaced angles when n = 1, seeded sphere points otherwise."""
    if count < 1:
        raise ValueError("need at least one direction")
    if n == 1:
        return np.exp(2j * np.pi * np.arange(count) / count)[:, None]
    return sphere_points(n, count, seed)


def default_grid(n: int, K: int = 8, count: int | None = None, seed: int = 0, refine: bool = True) -> SupGrid:
    """Shells ``1 - 2^-k``, ``k = 1..K``, crossed with ``count`` directions."""
    if count is None:
        count = 16 if n == 1 else 64
    radii = tuple(1.0 - 2.0 ** -k for k in range(1, K + 1))
    return SupGrid(radii, directions(n, count, seed), refine)


@dataclass(frozen=True)
class SupResult:
    value: float
    argmax: np.ndarray
    grid_value: float


def grid_sup(fn: Callable[[np.ndarray], np.ndarray], grid: SupGrid) -> SupResult:
    """Max of ``fn`` over the grid, then golden-section refinement in radius.

    ``fn`` maps an ``(G, n)`` array of centers to ``G`` values.  The search
    runs along the best direction between the shells adjacent to the best point.
    """
    pts = grid.points()
    vals = np.asarray(fn(pts), dtype=float)
    k = int(np.argmax(vals))
    best, arg = float(vals[k]), pts[k]
    grid_best = best
    if not grid.refine:
        return SupResult(best, arg, grid_best)
    radii = (0.0, *grid.radii)
    D = grid.directions.shape[0]
    # index 0 is the origin; shell s (1-based) holds indices 1 + (s-1) D ...
    shell = 0 if k == 0 else 1 + (k - 1) // D
    u = grid.directions[0 if k == 0 else (k - 1) % D]
    lo = radii[shell - 1] if shell > 0 else 0.0
    hi = radii[shell + 1] if shell + 1 < len(radii) else 0.5 * (1.0 + radii[-1])

    def g(x):
        return float(fn((x * u)[None, :])[0])

    a, b = lo, hi
    x1, x2 = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    f1, f2 = g(x1), g(x2)
    for _ in range(grid.iterations):
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = g(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = g(x2)
        for x, fx in ((x1, f1), (x2, f2)):
            if fx > best:
                best, arg = fx, x * u
    return SupResult(best, arg, grid_best)


def _centers(a_grid) -> np.ndarray:
    if isinstance(a_grid, geometry.BallPoint):
        return a_grid.vec[None, :]
    if isinstance(a_grid, (list, tuple)):
        return np.array([geometry.coords(a) for a in a_grid])
    return np.atleast_2d(np.asarray(a_grid, dtype=complex))


def _sup(fn, a_grid, n) -> SupResult:
    if a_grid is None:
        a_grid = default_grid(n)
    if isinstance(a_grid, SupGrid):
        return grid_sup(fn, a_grid)
    pts = _centers(a_grid)
    if pts.shape[0] == 0:
        raise ValueError("the a-grid is empty")
    vals = fn(pts)
    k = int(np.argmax(vals))
    return SupResult(float(vals[k]), pts[k], float(vals[k]))


# ------------------------------------------------------- pointwise quantities


def ball_ratio(mu: DiscreteMeasure, params: CriterionParams, centers) -> np.ndarray:
    """``mu(Delta(a, r)) / (1 - |a|^2)^((n+1+alpha) lambda)`` at each center."""
    c = _centers(centers)
    masses = ball_mass(mu, c, params.r) if len(mu) else np.zeros(c.shape[0])
    return masses / geometry.defect(c) ** params.weight_exp


def kernel_transform(mu: DiscreteMeasure, centers, s: float, exponent: float, floors: FloorCounter | None = None) -> np.ndarray:
    """``sum_i w_i (1-|a|^2)^s / |1 - <z_i, a>|^exponent`` for every center ``a``."""
    c = _centers(centers)
    if len(mu) == 0:
        return np.zeros(c.shape[0])

    def kernel(a, pts):
        mod = geometry.kernel_modulus(pts[None, :, :], a[:, None, :])
        low = mod < KERNEL_FLOOR
        if floors is not None:
            floors.add(np.count_nonzero(low))
        return np.where(low, KERNEL_FLOOR, mod) ** -exponent

    vals = pairwise_reduce(c, mu, kernel) * geometry.defect(c) ** s
    if not np.all(np.isfinite(vals)):
        k = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise NonFiniteError("kernel transform is not finite (atom on the boundary?)", k, c[k])
    return vals


def berezin_value(mu: DiscreteMeasure, params: CriterionParams, a, floors: FloorCounter | None = None):
    """Berezin-type transform with kernel exponent ``(n+1+alpha) lambda + s_exp``."""
    vals = kernel_transform(mu, a, params.s_exp, params.weight_exp + params.s_exp, floors)
    return float(vals[0]) if np.ndim(geometry.coords(a)) == 1 else vals


# ---------------------------------------------------------------- lambda >= 1


def ball_quantity(mu: DiscreteMeasure, params: CriterionParams, a_grid=None) -> float:
    return _sup(lambda c: ball_ratio(mu, params, c), a_grid, params.n).value


def berezin_sup(mu: DiscreteMeasure, params: CriterionParams, a_grid=None, floors: FloorCounter | None = None) -> float:
    return _sup(
        lambda c: kernel_transform(mu, c, params.s_exp, params.weight_exp + params.s_exp, floors),
        a_grid,
        params.n,
    ).value


@dataclass(frozen=True)
class ShellProfile:
    shell_gaps: np.ndarray
    values: np.ndarray
    K: int = 3

    def __post_init__(self):
        gaps = np.asarray(self.shell_gaps, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if gaps.shape != vals.shape or gaps.ndim != 1:
            raise ValueError("one value per shell")
        if np.any(np.diff(gaps) >= 0) or np.any(gaps <= 0) or np.any(gaps >= 1):
            raise ValueError("shell gaps must be strictly decreasing in (0, 1)")
        object.__setattr__(self, "shell_gaps", gaps)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.shell_gaps.shape[0]

    @property
    def tail_estimate(self) -> float:
        """Max over the outermost ``K`` shells; a proxy for the boundary limsup."""
        if len(self) == 0:
            return 0.0
        return float(np.max(self.values[-self.K :]))

    def to_dict(self) -> dict:
        return {
            "shell_gaps": self.shell_gaps.tolist(),
            "values": self.values.tolist(),
            "K": self.K,
            "tail_estimate": self.tail_estimate,
        }

    def write_csv(self, path) -> None:
        if len(self) == 0:
            raise ValueError("cannot write an empty profile")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["gap", "value"])
            for g, v in zip(self.shell_gaps, self.values):
                w.writerow([f"{g:.17g}", f"{v:.17g}"])

    @classmethod
    def read_csv(cls, path, K: int = 3) -> "ShellProfile":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if rows[0] != ["gap", "value"]:
            raise ValueError(f"{path}: expected header gap,value")
        data = np.array([[float(x) for x in row] for row in rows[1:]]).reshape(-1, 2)
        return cls(data[:, 0], data[:, 1], K)


def default_gaps(k_max: int = 16) -> np.ndarray:
    """``2^-k`` for ``k = 1..k_max``."""
    return 2.0 ** -np.arange(1, k_max + 1)


def shell_profile(fn: Callable[[np.ndarray], np.ndarray], n: int, gaps: Sequence[float], count: int, seed: int = 0, K: int = 3) -> ShellProfile:
    """Per-shell max of ``fn`` over ``count`` directions at radius ``1 - gap``."""
    gaps = np.asarray(gaps, dtype=float)
    dirs = directions(n, count, seed)
    pts = ((1.0 - gaps)[:, None, None] * dirs[None, :, :]).reshape(-1, n)
    vals = np.asarray(fn(pts), dtype=float).reshape(gaps.shape[0], count)
    return ShellProfile(gaps, vals.max(axis=1), K)


def vanishing_profile(
    mu: DiscreteMeasure,
    params: CriterionParams,
    gaps: Sequence[float] | None = None,
    count: int | None = None,
    variant: str = "berezin",
    seed: int = 0,
    K: int = 3,
) -> ShellProfile:
    """Shell profile of the Berezin transform or (``variant="ball"``) of the ball ratio."""
    gaps = default_gaps(12) if gaps is None else gaps
    count = (16 if params.n == 1 else 64) if count is None else count
    if variant == "berezin":
        fn = lambda c: kernel_transform(mu, c, params.s_exp, params.weight_exp + params.s_exp)  # noqa: E731
    elif variant == "ball":
        fn = lambda c: ball_ratio(mu, params, c)  # noqa: E731
    else:
        raise ValueError(f"unknown profile variant {variant!r}")
    return shell_profile(fn, params.n, gaps, count, seed, K)


# ----------------------------------------------------------------- lambda < 1


def _lt_exponent(p: float, q: float) -> float:
    if not (p > 0 and q > 0):
        raise ValueError("p and q must be positive")
    if not q < p:
        raise ValueError(f"the L^t criteria need q < p, got p={p!r}, q={q!r}")
    return p / (p - q)


def _lt_norm(values: np.ndarray, weights: np.ndarray, t: float) -> float:
    total = float(np.sum(weights * values**t))
    return total ** (1.0 / t) if total > 0 else 0.0


def muhat_Lt(mu: DiscreteMeasure, params: CriterionParams, p: float, q: float, nu_sample: DiscreteMeasure) -> float:
    """``L^{p/(p-q)}(nu_alpha)`` norm of ``z -> mu(Delta(z, r)) / (1 - |z|^2)^(n+1+alpha)``."""
    t = _lt_exponent(p, q)
    if len(mu) == 0:
        return 0.0
    z = nu_sample.points
    h = ball_mass(mu, z, params.r) / nu_sample.defects ** (params.n + 1 + params.alpha)
    return _lt_norm(h, nu_sample.weights, t)


def lattice_seq_norm(mu: DiscreteMeasure, lattice: Lattice, params: CriterionParams, p: float, q: float) -> float:
    """``l^{p/(p-q)}`` norm of ``mu(Delta(a_k, r)) / (1 - |a_k|^2)^((n+1+alpha) q/p)``."""
    t = _lt_exponent(p, q)
    if lattice.n != params.n:
        raise geometry.DimensionError("lattice and criterion dimensions differ")
    if len(mu) == 0:
        return 0.0
    a = lattice.centers
    seq = ball_mass(mu, a, params.r) / geometry.defect(a) ** ((params.n + 1 + params.alpha) * q / p)
    return _lt_norm(seq, np.ones(seq.shape[0]), t)


def berezin_Lt(
    mu: DiscreteMeasure,
    params: CriterionParams,
    p: float,
    q: float,
    nu_sample: DiscreteMeasure,
    floors: FloorCounter | None = None,
) -> float:
    """``L^{p/(p-q)}(nu_alpha)`` norm of the transform with kernel exponent ``n+1+alpha+s_exp``."""
    t = _lt_exponent(p, q)
    if len(mu) == 0:
        return 0.0
    b = kernel_transform(mu, nu_sample.points, params.s_exp, params.n + 1 + params.alpha + params.s_exp, floors)
    return _lt_norm(b, nu_sample.weights, t)


# ------------------------------------------------------------------ reports


def _ratios(values: dict) -> dict:
    keys = [k for k, v in values.items() if v is not None]
    out = {}
    for i, a in enumerate(keys):
        for b in keys[i + 1 :]:
            out[f"{a}/{b}"] = values[a] / values[b] if values[b] > 0 else None
    return out


@dataclass
class CarlesonReport:
    params: CriterionParams
    ball_quantity: float | None = None
    berezin_sup: float | None = None
    muhat_Lt: float | None = None
    lattice_seq_norm: float | None = None
    berezin_Lt: float | None = None
    profiles: dict = field(default_factory=dict)
    floor_events: int = 0

    @property
    def ratios(self) -> dict:
        return _ratios(
            {
                "ball_quantity": self.ball_quantity,
                "berezin_sup": self.berezin_sup,
                "muhat_Lt": self.muhat_Lt,
                "lattice_seq_norm": self.lattice_seq_norm,
                "berezin_Lt": self.berezin_Lt,
            }
        )

    def to_dict(self) -> dict:
        pr = self.params
        return {
            "params": {"lambda": pr.lam, "alpha": pr.alpha, "r": pr.r, "n": pr.n, "s_exp": pr.s_exp},
            "ball_quantity": self.ball_quantity,
            "berezin_sup": self.berezin_sup,
            "muhat_Lt": self.muhat_Lt,
            "lattice_seq_norm": self.lattice_seq_norm,
            "berezin_Lt": self.berezin_Lt,
            "ratios": self.ratios,
            "profiles": {k: v.to_dict() for k, v in self.profiles.items()},
            "floor_events": self.floor_events,
        }

    def write_profiles(self, directory) -> list[Path]:
        out = []
        for name, prof in self.profiles.items():
            path = Path(directory) / f"profile_{name}.csv"
            prof.write_csv(path)
            out.append(path)
        return out


def carleson_report(
    mu: DiscreteMeasure,
    params: CriterionParams,
    a_grid=None,
    nu_sample: DiscreteMeasure | None = None,
    lattice: Lattice | None = None,
    p: float | None = None,
    q: float | None = None,
    gaps: Sequence[float] | None = None,
    count: int | None = None,
) -> CarlesonReport:
    """All criteria applicable to ``params.lam``: sup criteria and profiles when
    ``lambda >= 1``, the three ``L^t`` criteria when ``lambda < 1``."""
    floors = FloorCounter()
    rep = CarlesonReport(params)
    if params.lam >= 1:
        rep.ball_quantity = ball_quantity(mu, params, a_grid)
        rep.berezin_sup = berezin_sup(mu, params, a_grid, floors)
        rep.profiles["berezin"] = vanishing_profile(mu, params, gaps, count, "berezin")
        rep.profiles["ball"] = vanishing_profile(mu, params, gaps, count, "ball")
    else:
        if p is None:
            p = 1.0
        if q is None:
            q = params.lam * p
        if not math.isclose(q / p, params.lam, rel_tol=1e-12):
            raise ValueError("q/p must equal lambda")
        if nu_sample is None:
            raise ValueError("the L^t criteria need a nu_alpha sample")
        rep.muhat_Lt = muhat_Lt(mu, params, p, q, nu_sample)
        rep.berezin_Lt = berezin_Lt(mu, params, p, q, nu_sample, floors)
        if lattice is not None:
            rep.lattice_seq_norm = lattice_seq_norm(mu, lattice, params, p, q)
    rep.floor_events = floors.count
    return rep
