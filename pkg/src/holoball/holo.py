"""Holomorphic self-maps of the ball, analytic test functions and Bergman norms.

Maps and functions are small immutable descriptions that evaluate on ``(N, n)``
complex arrays.  Both round-trip through plain dictionaries (the JSON format
used by the command line); complex scalars are written as ``[re, im]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import geometry
from .geometry import BallPoint
from .measure import DiscreteMeasure, IntegralEstimate, NonFiniteError, integrate, sphere_points

SELF_MAP_MARGIN = 1e-9
DEFAULT_SHELLS = (0.9, 0.99, 0.999)


class SelfMapError(ValueError):
    """A map sends some point of the ball outside the ball."""

    def __init__(self, message, witness=None, image_norm=None):
        super().__init__(message)
        self.witness = witness
        self.image_norm = image_norm


def _enc(x):
    x = complex(x)
    return x.real if x.imag == 0 else [x.real, x.imag]


def _dec(x) -> complex:
    if isinstance(x, (list, tuple)):
        return complex(x[0], x[1])
    return complex(x)


def _enc_vec(v):
    return [_enc(x) for x in np.asarray(v).reshape(-1)]


def _dec_vec(v) -> np.ndarray:
    return np.array([_dec(x) for x in v], dtype=complex)


def _points(z) -> np.ndarray:
    return np.atleast_2d(geometry.coords(z))


# ---------------------------------------------------------------- self-maps


@dataclass(frozen=True, eq=False)
class HoloMap:
    def __call__(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def analytically_valid(self) -> bool:
        """True when the map is known to preserve the ball without sampling."""
        return False

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Diagonal(HoloMap):
    multipliers: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "multipliers", np.atleast_1d(np.asarray(self.multipliers, dtype=complex)))

    def __call__(self, z):
        return _points(z) * self.multipliers

    @property
    def dim(self):
        return self.multipliers.shape[0]

    def analytically_valid(self):
        return bool(np.all(np.abs(self.multipliers) <= 1.0))

    def to_dict(self):
        return {"type": "diagonal", "multipliers": _enc_vec(self.multipliers)}


@dataclass(frozen=True, eq=False)
class Affine(HoloMap):
    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.matrix, dtype=complex))
        b = np.atleast_1d(np.asarray(self.offset, dtype=complex))
        if A.shape != (b.shape[0], b.shape[0]):
            raise geometry.DimensionError("affine map needs an (n, n) matrix and an (n,) offset")
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "offset", b)

    def __call__(self, z):
        return _points(z) @ self.matrix.T + self.offset

    @property
    def dim(self):
        return self.offset.shape[0]

    def analytically_valid(self):
        b = np.linalg.norm(self.offset)
        return bool(b < 1.0 and np.linalg.norm(self.matrix, 2) + b <= 1.0)

    def to_dict(self):
        return {
            "type": "affine",
            "matrix": [_enc_vec(row) for row in self.matrix],
            "offset": _enc_vec(self.offset),
        }


@dataclass(frozen=True, eq=False)
class MobiusAut(HoloMap):
    """``z -> sigma_a(U z)`` for a base point ``a`` and a unitary ``U``."""

    base: np.ndarray
    unitary: np.ndarray | None = None

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.base, dtype=complex))
        if not np.linalg.norm(a) < 1.0:
            raise ValueError("automorphism base point must lie in the ball")
        U = np.eye(a.shape[0], dtype=complex) if self.unitary is None else np.asarray(self.unitary, dtype=complex)
        if U.shape != (a.shape[0], a.shape[0]) or not np.allclose(U.conj().T @ U, np.eye(a.shape[0]), atol=1e-10):
            raise ValueError("automorphism needs an (n, n) unitary matrix")
        object.__setattr__(self, "base", a)
        object.__setattr__(self, "unitary", U)

    def __call__(self, z):
        return geometry.mobius(self.base, _points(z) @ self.unitary.T)

    @property
    def dim(self):
        return self.base.shape[0]

    def analytically_valid(self):
        return True

    def to_dict(self):
        return {
            "type": "mobius",
            "base": _enc_vec(self.base),
            "unitary": [_enc_vec(row) for row in self.unitary],
        }


@dataclass(frozen=True, eq=False)
class Poly(HoloMap):
    """Coordinatewise polynomial: ``terms[k]`` lists ``(multi_index, coefficient)``."""

    terms: tuple
    n: int

    def __post_init__(self):
        terms = tuple(tuple((tuple(int(e) for e in m), complex(c)) for m, c in coord) for coord in self.terms)
        for coord in terms:
            for m, _ in coord:
                if len(m) != self.n or min(m, default=0) < 0:
                    raise ValueError(f"multi-index {m} does not fit dimension {self.n}")
        if len(terms) != self.n:
            raise geometry.DimensionError("a polynomial self-map needs one component per coordinate")
        object.__setattr__(self, "terms", terms)

    def __call__(self, z):
        z = _points(z)
        out = np.zeros(z.shape, dtype=complex)
        for k, coord in enumerate(self.terms):
            for m, c in coord:
                out[:, k] += c * np.prod(z ** np.asarray(m), axis=1)
        return out

    @property
    def dim(self):
        return self.n

    def to_dict(self):
        return {
            "type": "poly",
            "n": self.n,
            "terms": [[{"m": list(m), "c": _enc(c)} for m, c in coord] for coord in self.terms],
        }


@dataclass(frozen=True, eq=False)
class Compose(HoloMap):
    """``outer(inner(z))``."""

    outer: HoloMap
    inner: HoloMap

    def __post_init__(self):
        if self.outer.dim != self.inner.dim:
            raise geometry.DimensionError("composed maps must share a dimension")

    def __call__(self, z):
        return self.outer(self.inner(z))

    @property
    def dim(self):
        return self.inner.dim

    def analytically_valid(self):
        return self.outer.analytically_valid() and self.inner.analytically_valid()

    def to_dict(self):
        return {"type": "compose", "outer": self.outer.to_dict(), "inner": self.inner.to_dict()}


def identity(n: int) -> Diagonal:
    return Diagonal(np.ones(n))


def scalar_map(c: complex, n: int = 1) -> Diagonal:
    """``z -> c z``."""
    return Diagonal(np.full(n, c, dtype=complex))


def constant_map(b) -> Affine:
    b = np.atleast_1d(np.asarray(b, dtype=complex))
    return Affine(np.zeros((b.shape[0], b.shape[0])), b)


def map_from_dict(d: dict) -> HoloMap:
    kind = d.get("type")
    if kind == "diagonal":
        return Diagonal(_dec_vec(d["multipliers"]))
    if kind == "affine":
        return Affine(np.array([_dec_vec(row) for row in d["matrix"]]), _dec_vec(d["offset"]))
    if kind == "mobius":
        U = d.get("unitary")
        return MobiusAut(_dec_vec(d["base"]), None if U is None else np.array([_dec_vec(row) for row in U]))
    if kind == "poly":
        terms = [[(t["m"], _dec(t["c"])) for t in coord] for coord in d["terms"]]
        return Poly(terms, int(d["n"]))
    if kind == "compose":
        return Compose(map_from_dict(d["outer"]), map_from_dict(d["inner"]))
    if kind == "constant":
        return constant_map(_dec_vec(d["value"]))
    raise ValueError(f"unknown map type {kind!r}")


@dataclass(frozen=True)
class SelfMapReport:
    ok: bool
    max_image_norm: float | None
    witness: np.ndarray | None = None
    analytic: bool = False


def validate_self_map(phi: HoloMap, shells: Sequence[float] = DEFAULT_SHELLS, M: int = 256, seed: int = 0) -> SelfMapReport:
    """Check ``sup |phi(z)| <= 1 - 1e-9`` on ``M`` random directions per shell radius."""
    if any(not 0.0 < s < 1.0 for s in shells):
        raise ValueError("shell radii must lie in (0, 1)")
    if phi.analytically_valid():
        return SelfMapReport(True, None, analytic=True)
    dirs = sphere_points(phi.dim, M, seed)
    worst, witness = -np.inf, None
    for s in shells:
        z = s * dirs
        norms = np.linalg.norm(phi(z), axis=1)
        k = int(np.argmax(norms))
        if norms[k] > worst:
            worst, witness = float(norms[k]), z[k]
    return SelfMapReport(bool(worst <= 1.0 - SELF_MAP_MARGIN), worst, witness)


def ensure_self_map(phi: HoloMap, **kwargs) -> None:
    report = validate_self_map(phi, **kwargs)
    if not report.ok:
        raise SelfMapError(
            f"map sends {report.witness} to norm {report.max_image_norm:.12g}",
            report.witness,
            report.max_image_norm,
        )


def apply_map(phi: HoloMap, z: np.ndarray) -> np.ndarray:
    """Images of an ``(N, n)`` array, raising if any leaves the open ball."""
    img = phi(z)
    norms = np.linalg.norm(img, axis=1)
    if np.any(~(norms < 1.0)):
        k = int(np.argmax(np.where(np.isfinite(norms), norms, np.inf)))
        raise SelfMapError(f"image of {z[k]} has norm {norms[k]!r}", z[k], float(norms[k]))
    return img


def map_eval(phi: HoloMap, z):
    """Image of a point; BallPoint in, BallPoint out."""
    img = apply_map(phi, _points(z))
    if isinstance(z, BallPoint):
        return BallPoint.from_vec(img[0])
    return img if np.ndim(z) > 1 else img[0]


def rho_gap(phi: HoloMap, psi: HoloMap, z) -> np.ndarray:
    """``rho(phi(z), psi(z))``."""
    zz = _points(z)
    out = geometry.rho(apply_map(phi, zz), apply_map(psi, zz))
    return out if np.ndim(geometry.coords(z)) > 1 else float(out[0])


def pullback_measure(phi: HoloMap, psi: HoloMap, q: float, base: DiscreteMeasure, validate: bool = True) -> DiscreteMeasure:
    """Joint pull-back measure: atoms at ``phi(z_i)`` and ``psi(z_i)``, each of mass ``w_i rho(z_i)^q``."""
    if not q > 0:
        raise ValueError(f"q must be positive, got {q!r}")
    if validate:
        ensure_self_map(phi)
        ensure_self_map(psi)
    a = apply_map(phi, base.points)
    b = apply_map(psi, base.points)
    w = base.weights * geometry.rho(a, b) ** q
    return DiscreteMeasure(np.concatenate([a, b]), np.concatenate([w, w]))


# ------------------------------------------------------ analytic functions


@dataclass(frozen=True, eq=False)
class AnalyticFn:
    def __call__(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def focus(self):
        """A point the function concentrates near, or None."""
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Monomial(AnalyticFn):
    m: tuple

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(int(e) for e in self.m))
        if min(self.m) < 0:
            raise ValueError("monomial exponents must be nonnegative")

    def __call__(self, z):
        z = _points(z)
        return np.prod(z ** np.asarray(self.m), axis=1).astype(complex)

    @property
    def degree(self) -> int:
        return sum(self.m)

    def to_dict(self):
        return {"type": "monomial", "m": list(self.m)}


@dataclass(frozen=True, eq=False)
class KernelPower(AnalyticFn):
    """``scale / (1 - kappa <z, w>)^exponent`` on the principal branch."""

    w: np.ndarray
    exponent: float
    scale: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.w, dtype=complex))
        if not abs(self.kappa) * np.linalg.norm(w) < 1.0:
            raise ValueError("kernel power needs |kappa * w| < 1")
        object.__setattr__(self, "w", w)

    def __call__(self, z):
        base = 1.0 - self.kappa * geometry.inner(_points(z), self.w)
        return self.scale * np.power(base, -self.exponent)

    def focus(self):
        return self.kappa * self.w

    def to_dict(self):
        return {
            "type": "kernel",
            "w": _enc_vec(self.w),
            "exponent": self.exponent,
            "scale": self.scale,
            "kappa": self.kappa,
        }


@dataclass(frozen=True, eq=False)
class LinComb(AnalyticFn):
    coefficients: tuple
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(complex(c) for c in self.coefficients))
        object.__setattr__(self, "terms", tuple(self.terms))
        if len(self.coefficients) != len(self.terms):
            raise ValueError("one coefficient per term")

    def __call__(self, z):
        z = _points(z)
        out = np.zeros(z.shape[0], dtype=complex)
        for c, f in zip(self.coefficients, self.terms):
            out += c * f(z)
        return out

    def to_dict(self):
        return {
            "type": "lincomb",
            "coefficients": [_enc(c) for c in self.coefficients],
            "terms": [f.to_dict() for f in self.terms],
        }


@dataclass(frozen=True, eq=False)
class Dilated(AnalyticFn):
    """``z -> f(m z / (m + 1))``."""

    inner: AnalyticFn
    m: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"dilation index must be a positive integer, got {self.m!r}")

    def __call__(self, z):
        return self.inner(_points(z) * (self.m / (self.m + 1.0)))

    def to_dict(self):
        return {"type": "dilated", "inner": self.inner.to_dict(), "m": int(self.m)}


def dilate(f: AnalyticFn, m: int) -> Dilated:
    return Dilated(f, m)


def fn_eval(f: AnalyticFn, z):
    """Value at a point (complex) or at every row of an array."""
    values = f(_points(z))
    if not np.all(np.isfinite(values)):
        raise NonFiniteError("analytic function is not finite at the given point")
    if isinstance(z, BallPoint) or np.ndim(z) == 1:
        return complex(values[0])
    return values


def monomials(n: int, max_degree: int) -> list[Monomial]:
    """All monomials of total degree ``<= max_degree`` in graded order."""
    out = []
    for d in range(max_degree + 1):
        for m in _compositions(d, n):
            out.append(Monomial(m))
    return out


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first, *rest)


def apalpha_norm(f: AnalyticFn, p: float, sample: DiscreteMeasure) -> IntegralEstimate:
    """``(int |f|^p dnu_alpha)^(1/p)`` against a ``nu_alpha`` sample, with delta-method error."""
    if not p > 0:
        raise ValueError(f"p must be positive, got {p!r}")
    est = integrate(lambda z: np.abs(f(z)) ** p, sample)
    value = float(np.real(est.value))
    norm = value ** (1.0 / p)
    se = norm / (p * value) * est.std_error if value > 0 else 0.0
    return IntegralEstimate(norm, se, est.n_samples)


# ---------------------------------------------------------- test functions


def unitary_to_axis(a) -> np.ndarray:
    """Unitary ``U`` (complex Householder with phase fix) with ``U a = |a| e_1``."""
    a = geometry.coords(a)
    norm = np.linalg.norm(a)
    if norm < geometry.ZERO_NORM:
        raise ValueError("the rotation is undefined for a = 0")
    u = a / norm
    n = a.shape[0]
    phase = u[0] / abs(u[0]) if abs(u[0]) > 0 else 1.0 + 0j
    v = u.copy()
    v[0] += phase
    # H u = -phase e_1; the leading row is rescaled by -conj(phase)
    H = np.eye(n, dtype=complex) - 2.0 * np.outer(v, v.conj()) / np.vdot(v, v).real
    fix = np.ones(n, dtype=complex)
    fix[0] = -np.conj(phase)
    return fix[:, None] * H


@dataclass(frozen=True)
class TestFnParams:
    n: int
    p: float
    alpha: float
    delta: float | None = None
    N: float = 4.0
    r0: float = 0.5

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.delta is None:
            object.__setattr__(self, "delta", max(1.0, self.p - self.n - self.alpha) + 1.0)
        if not self.N > 1:
            raise ValueError("N must exceed 1")
        if not self.t > self.p:
            raise ValueError(f"need t = n + 1 + alpha + delta > p, got t={self.t!r}, p={self.p!r}")

    @property
    def t(self) -> float:
        return self.n + 1 + self.alpha + self.delta

    @property
    def min_radius(self) -> float:
        """Lower end of the validity region ``|a| > 1 - 1/(2N)``."""
        return 1.0 - 1.0 / (2.0 * self.N)


@dataclass(frozen=True, eq=False)
class TestFn(AnalyticFn):
    """The boundary test function with index ``j`` attached to the point ``a``."""

    a: np.ndarray
    j: int
    params: TestFnParams
    kernel: KernelPower = field(repr=False)

    __test__ = False

    def __call__(self, z):
        return self.kernel(z)

    def focus(self):
        return self.kernel.focus()

    def to_dict(self):
        pr = self.params
        return {
            "type": "testfn",
            "a": _enc_vec(self.a),
            "j": self.j,
            "params": {"p": pr.p, "alpha": pr.alpha, "delta": pr.delta, "N": pr.N, "r0": pr.r0},
        }


def special_points(t: float, N: float, n: int):
    """Vectors ``t_1 = t e_1``, ``t_j = t^2 e_1 + t sqrt(1-t^2) e_j`` and the scalar ``1 - N(1-t)``."""
    if not 0.0 < t < 1.0:
        raise ValueError(f"t must lie in (0, 1), got {t!r}")
    vecs = []
    for j in range(n):
        v = np.zeros(n, dtype=complex)
        if j == 0:
            v[0] = t
        else:
            v[0] = t * t
            v[j] = t * np.sqrt((1.0 - t) * (1.0 + t))
        vecs.append(v)
    return vecs, 1.0 - N * (1.0 - t)


def test_fn(a, j: int, params: TestFnParams) -> TestFn:
    """Boundary test function ``f_{a,j}``, ``0 <= j <= n``."""
    a_vec = geometry.coords(a)
    n = a_vec.shape[0]
    if n != params.n:
        raise geometry.DimensionError("test-function parameters are for another dimension")
    if not 0 <= j <= n:
        raise ValueError(f"j must lie in 0..{n}, got {j!r}")
    r = 1.0 - float(a.gap) if isinstance(a, BallPoint) else float(np.linalg.norm(a_vec))
    if not r > params.min_radius:
        raise ValueError(f"|a| = {r!r} is outside the validity region |a| > {params.min_radius!r}")
    U = unitary_to_axis(a_vec)
    vecs, r_N = special_points(r, params.N, n)
    defect = float(geometry.defect(a)) if isinstance(a, BallPoint) else (1 - r) * (1 + r)
    scale = defect ** (params.delta / params.p)
    exponent = params.t / params.p
    if j == 0:
        kernel = KernelPower(U.conj().T @ vecs[0], exponent, scale, 1.0)
    else:
        kernel = KernelPower(U.conj().T @ vecs[j - 1], exponent, scale, r_N)
    return TestFn(np.array(a_vec), j, params, kernel)


def test_family(a, params: TestFnParams) -> list[TestFn]:
    return [test_fn(a, j, params) for j in range(params.n + 1)]


def fn_from_dict(d: dict) -> AnalyticFn:
    kind = d.get("type")
    if kind == "monomial":
        return Monomial(tuple(d["m"]))
    if kind == "kernel":
        return KernelPower(_dec_vec(d["w"]), float(d["exponent"]), float(d.get("scale", 1.0)), float(d.get("kappa", 1.0)))
    if kind == "lincomb":
        return LinComb([_dec(c) for c in d["coefficients"]], [fn_from_dict(t) for t in d["terms"]])
    if kind == "dilated":
        return Dilated(fn_from_dict(d["inner"]), int(d["m"]))
    if kind == "testfn":
        a = _dec_vec(d["a"])
        pr = d["params"]
        params = TestFnParams(a.shape[0], pr["p"], pr["alpha"], pr.get("delta"), pr.get("N", 4.0), pr.get("r0", 0.5))
        return test_fn(a, int(d["j"]), params)
    raise ValueError(f"unknown function type {kind!r}")


# ------------------------------------------------------ empirical lower-bound sweeps


def kernel_difference_ratios(a_pts, b_pts, t: float, s: float, N: float) -> np.ndarray:
    """Ratio of the kernel-difference sum at the special points to ``rho(a, b) |1 - <a, t_1>|^(-s)``.

    Evaluated pairwise on rows of ``a_pts`` and ``b_pts``.
    """
    a_pts, b_pts = _points(a_pts), _points(b_pts)
    n = a_pts.shape[1]
    vecs, t_N = special_points(t, N, n)

    def k(x, v):
        return np.power(1.0 - geometry.inner(x, v), -s)

    lhs = np.abs(k(a_pts, vecs[0]) - k(b_pts, vecs[0]))
    for v in vecs:
        lhs = lhs + np.abs(k(a_pts, t_N * v) - k(b_pts, t_N * v))
    return lhs / (geometry.rho(a_pts, b_pts) * np.abs(k(a_pts, vecs[0])))


def test_fn_difference_ratios(a, params: TestFnParams, z_pts, w_pts) -> np.ndarray:
    """``sum_j |f_{a,j}(z) - f_{a,j}(w)| / (rho(z, w) |f_{a,0}(z)|)`` on paired rows."""
    z_pts, w_pts = _points(z_pts), _points(w_pts)
    fam = test_family(a, params)
    lhs = sum(np.abs(f(z_pts) - f(w_pts)) for f in fam)
    return lhs / (geometry.rho(z_pts, w_pts) * np.abs(fam[0](z_pts)))


def local_oscillation_ratios(f: AnalyticFn, a, z_pts, p: float, q: float, alpha: float, r: float, sample: DiscreteMeasure) -> np.ndarray:
    """``|f(z)-f(a)|^q (1-|a|^2)^((n+1+alpha)q/p) / (rho(z,a)^q int_{Delta(a,r)} |f|^p dnu_alpha)``.

    ``sample`` should be a ``nu_alpha`` sample, ideally recentred at ``a``.
    """
    a_vec = geometry.coords(a)
    n = a_vec.shape[0]
    z_pts = _points(z_pts)
    inside = geometry.rho(a_vec, sample.points) < r
    local = float(np.sum(sample.weights[inside] * np.abs(f(sample.points[inside])) ** p))
    fa = f(a_vec[None, :])[0]
    num = np.abs(f(z_pts) - fa) ** q * float(geometry.defect(a)) ** ((n + 1 + alpha) * q / p)
    return num / (geometry.rho(z_pts, a_vec) ** q * local)
