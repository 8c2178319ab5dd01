"""Norm-equivalent quantities for a difference of composition operators.

Given self-maps ``phi``, ``psi`` and exponents ``(p, alpha) -> (q, beta)``, this
module estimates the Gamma-integral supremum (comparable to the operator norm
to the power ``q``), its boundary shell profile (essential norm proxy), the
``L^t`` quantity used when ``q < p``, a direct lower bound from a dictionary of
test functions, and a compactness probe.  No certified two-sided norm is
produced; quantities and their ratios are reported side by side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import carleson, geometry, holo
from ._parallel import pmap
from .carleson import KERNEL_FLOOR, CriterionParams, FloorCounter, ShellProfile, SupGrid
from .holo import AnalyticFn, HoloMap
from .measure import DiscreteMeasure, IntegralEstimate, WeightParams, estimate_from_values, recenter, sample_nu_alpha


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    phi: HoloMap
    psi: HoloMap
    p: float
    q: float
    alpha: float
    beta: float
    validate: bool = True

    def __post_init__(self):
        for name in ("p", "q"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("alpha", "beta"):
            if not getattr(self, name) > -1:
                raise ValueError(f"{name} must exceed -1, got {getattr(self, name)!r}")
        if self.phi.dim != self.psi.dim:
            raise geometry.DimensionError("phi and psi act on different dimensions")
        if self.validate:
            holo.ensure_self_map(self.phi)
            holo.ensure_self_map(self.psi)

    @property
    def n(self) -> int:
        return self.phi.dim

    @property
    def lam(self) -> float:
        return self.q / self.p

    @property
    def t_exp(self) -> float:
        if not self.q < self.p:
            raise ValueError(f"t = p/(p-q) needs q < p, got p={self.p!r}, q={self.q!r}")
        return self.p / (self.p - self.q)

    def swapped(self) -> "OperatorSpec":
        return OperatorSpec(self.psi, self.phi, self.p, self.q, self.alpha, self.beta, validate=False)

    def default_s(self) -> float:
        return self.n + 1.0 + self.alpha

    def sup_exponent(self, s: float) -> float:
        """Kernel exponent ``(n+1+alpha) lambda + s`` of the supremum quantities."""
        return (self.n + 1 + self.alpha) * self.lam + s

    def lt_exponent(self, s: float) -> float:
        """Kernel exponent ``n+1+alpha+s`` of the ``L^t`` quantity."""
        return self.n + 1 + self.alpha + s


def _check_s(s):
    if not s > 0:
        raise ValueError(f"s must be positive, got {s!r}")


def _kernel(a: np.ndarray, img: np.ndarray, exponent: float, floors: FloorCounter | None) -> np.ndarray:
    mod = geometry.kernel_modulus(img, a)
    low = mod < KERNEL_FLOOR
    if floors is not None:
        floors.add(np.count_nonzero(low))
    return np.where(low, KERNEL_FLOOR, mod) ** -exponent


def _gamma_values(spec: OperatorSpec, s: float, a: np.ndarray, sample: DiscreteMeasure, exponent: float, floors=None) -> np.ndarray:
    """Per-atom values ``Gamma(a, z_i) rho(z_i)^q`` (without the weights)."""
    A = holo.apply_map(spec.phi, sample.points)
    B = holo.apply_map(spec.psi, sample.points)
    rq = geometry.rho(A, B) ** spec.q
    da = float(geometry.defect(a)) ** s
    return da * (_kernel(a, A, exponent, floors) + _kernel(a, B, exponent, floors)) * rq


def _local_sample(nu: DiscreteMeasure, a: np.ndarray, weight_alpha: float, recentre: bool) -> DiscreteMeasure:
    if recentre and np.linalg.norm(a) >= 0.5:
        return recenter(nu, a, weight_alpha)
    return nu


def gamma_integral(
    spec: OperatorSpec,
    s: float,
    a,
    nu_beta: DiscreteMeasure,
    recentre: bool = True,
    exponent: float | None = None,
    floors: FloorCounter | None = None,
) -> IntegralEstimate:
    """``int Gamma(phi, psi)(a, z) rho(z)^q dnu_beta(z)`` from a ``nu_beta`` sample.

    With ``recentre`` the sample is mixed with its image under ``sigma_a`` when
    ``|a| >= 0.5`` so that kernels concentrated near ``a`` stay resolved.
    """
    _check_s(s)
    a_vec = geometry.coords(a)
    E = spec.sup_exponent(s) if exponent is None else exponent
    sample = _local_sample(nu_beta, a_vec, spec.beta, recentre)
    vals = _gamma_values(spec, s, a_vec, sample, E, floors)
    return estimate_from_values(vals, sample)


def gamma_values(spec, s, centers, nu_beta, recentre=True, exponent=None, floors=None) -> np.ndarray:
    centers = np.atleast_2d(np.asarray(centers, dtype=complex))
    return np.array(pmap(lambda a: gamma_integral(spec, s, a, nu_beta, recentre, exponent, floors).value, list(centers)))


@dataclass(frozen=True)
class GammaSup:
    value: float
    witness: np.ndarray
    grid_value: float


def gamma_sup(spec: OperatorSpec, s: float, a_grid: SupGrid | None, nu_beta: DiscreteMeasure, recentre: bool = True, floors=None) -> GammaSup:
    """Grid and golden-section estimate of ``sup_a gamma_integral``."""
    _check_s(s)
    grid = carleson.default_grid(spec.n) if a_grid is None else a_grid
    res = carleson.grid_sup(lambda c: gamma_values(spec, s, c, nu_beta, recentre, floors=floors), grid)
    return GammaSup(res.value, res.argmax, res.grid_value)


def essential_tail(
    spec: OperatorSpec,
    s: float,
    gaps: Sequence[float] | None,
    count: int | None,
    nu_beta: DiscreteMeasure,
    K: int = 3,
    seed: int = 0,
) -> ShellProfile:
    """Shell profile of ``gamma_integral``; its tail estimate proxies the essential norm to the power ``q``."""
    _check_s(s)
    gaps = carleson.default_gaps(16) if gaps is None else gaps
    count = (16 if spec.n == 1 else 64) if count is None else count
    return carleson.shell_profile(lambda c: gamma_values(spec, s, c, nu_beta), spec.n, gaps, count, seed, K)


def lt_quantity(
    spec: OperatorSpec,
    s: float,
    nu_alpha: DiscreteMeasure,
    nu_beta: DiscreteMeasure,
    exponent: float | None = None,
    floors: FloorCounter | None = None,
) -> float:
    """``L^{p/(p-q)}(nu_alpha)`` norm over ``a`` of the inner ``nu_beta`` integral, kernel exponent ``n+1+alpha+s``."""
    _check_s(s)
    t = spec.t_exp
    E = spec.lt_exponent(s) if exponent is None else exponent
    A = holo.apply_map(spec.phi, nu_beta.points)
    B = holo.apply_map(spec.psi, nu_beta.points)
    w = nu_beta.weights * geometry.rho(A, B) ** spec.q

    def inner(chunk):
        c = chunk[:, None, :]
        k = _kernel(c, A[None, :, :], E, floors) + _kernel(c, B[None, :, :], E, floors)
        return np.sum(k * w, axis=1)

    step = max(1, (1 << 21) // max(1, A.shape[0]))
    a_pts = nu_alpha.points
    parts = pmap(inner, [a_pts[i : i + step] for i in range(0, a_pts.shape[0], step)])
    I = np.concatenate(parts) * nu_alpha.defects**s if parts else np.zeros(0)
    total = float(np.sum(nu_alpha.weights * I**t))
    return total ** (1.0 / t) if total > 0 else 0.0


# ------------------------------------------------------------ lower bounds


@dataclass(frozen=True)
class DictEntry:
    fn: AnalyticFn
    label: str


@dataclass(frozen=True)
class DirectLower:
    value: float
    std_error: float
    witness: str | None
    candidates: tuple = field(repr=False, default=())


def default_dictionary(n: int, p: float, alpha: float, max_degree: int = 4, gaps=(0.1, 0.01, 0.001), directions: int = 2, N: float = 4.0) -> list[DictEntry]:
    """Monomials of total degree ``<= max_degree`` and boundary test functions on the given shells."""
    out = [DictEntry(m, f"monomial{list(m.m)}") for m in holo.monomials(n, max_degree)]
    params = holo.TestFnParams(n, p, alpha, N=N)
    dirs = carleson.directions(n, directions)
    for gap in gaps:
        for d, u in enumerate(dirs):
            a = geometry.BallPoint.from_direction(u, gap)
            for j in range(n + 1):
                out.append(DictEntry(holo.test_fn(a, j, params), f"testfn(gap={gap:g},dir={d},j={j})"))
    return out


def _normed(f: AnalyticFn, p: float, nu: DiscreteMeasure, alpha: float, a=None) -> IntegralEstimate:
    center = f.focus() if a is None else a
    if center is not None:
        nu = _local_sample(nu, np.asarray(center), alpha, True)
    return holo.apalpha_norm(f, p, nu)


def difference_norm(spec: OperatorSpec, f: AnalyticFn, nu_beta: DiscreteMeasure) -> IntegralEstimate:
    """``||f o phi - f o psi||_{A_beta^q}``, recentred at the focus of ``f`` when it has one."""
    g = _DifferenceFn(f, spec.phi, spec.psi)
    return _normed(g, spec.q, nu_beta, spec.beta, f.focus())


@dataclass(frozen=True, eq=False)
class _DifferenceFn(AnalyticFn):
    f: AnalyticFn
    phi: HoloMap
    psi: HoloMap

    def __call__(self, z):
        z = np.atleast_2d(z)
        return self.f(holo.apply_map(self.phi, z)) - self.f(holo.apply_map(self.psi, z))


def _ratio_se(num: IntegralEstimate, den: IntegralEstimate) -> tuple[float, float]:
    r = num.value / den.value
    rel = math.hypot(num.std_error / num.value if num.value else 0.0, den.std_error / den.value)
    return r, abs(r) * rel


def direct_lower(spec: OperatorSpec, dictionary: Sequence, nu_alpha: DiscreteMeasure, nu_beta: DiscreteMeasure) -> DirectLower:
    """Max over the dictionary of ``||(C_phi - C_psi) f|| / ||f||``."""
    entries = [e if isinstance(e, DictEntry) else DictEntry(e, type(e).__name__) for e in dictionary]
    if not entries:
        raise ValueError("the dictionary is empty")

    def one(e):
        den = _normed(e.fn, spec.p, nu_alpha, spec.alpha)
        if not den.value > 0:
            raise ValueError(f"dictionary entry {e.label} has zero norm")
        num = difference_norm(spec, e.fn, nu_beta)
        return _ratio_se(num, den)

    results = pmap(one, entries)
    k = int(np.argmax([r for r, _ in results]))
    value, se = results[k]
    witness = entries[k].label if value > 0 else None
    cands = tuple((e.label, r, sd) for e, (r, sd) in zip(entries, results))
    return DirectLower(float(value), float(se), witness, cands)


def monomial_norm(m: Sequence[int], p: float, alpha: float) -> float:
    """Exact ``||z^m||_{A_alpha^p}`` for a single-variable power ``z_1^k`` (``m = (k, 0, ...)``)."""
    n = len(m)
    if any(e for e in m[1:]):
        raise ValueError("closed form only for powers of the first coordinate")
    half = m[0] * p / 2.0
    logv = math.lgamma(half + 1) + math.lgamma(n + alpha + 1) - math.lgamma(n + half + alpha + 1)
    return math.exp(logv / p)


def normalized_powers(n: int, p: float, alpha: float, kmax: int = 40) -> list[AnalyticFn]:
    """``z_1^k / ||z_1^k||_{A_alpha^p}`` for ``k = 1..kmax``."""
    out = []
    for k in range(1, kmax + 1):
        m = (k,) + (0,) * (n - 1)
        out.append(holo.LinComb([1.0 / monomial_norm(m, p, alpha)], [holo.Monomial(m)]))
    return out


@dataclass(frozen=True)
class CompactnessProfile:
    values: np.ndarray
    std_errors: np.ndarray
    input_norms: np.ndarray

    def eventually_decreasing(self, tail_fraction: float = 0.5) -> bool:
        v = self.values[int(len(self.values) * (1 - tail_fraction)) :]
        return bool(np.all(np.diff(v) <= 0))

    @property
    def last_over_first(self) -> float:
        return float(self.values[-1] / self.values[0]) if self.values[0] > 0 else 0.0

    def to_dict(self):
        return {
            "values": self.values.tolist(),
            "std_errors": self.std_errors.tolist(),
            "input_norms": self.input_norms.tolist(),
        }


def compactness_probe(
    spec: OperatorSpec,
    family: Sequence[AnalyticFn],
    nu_alpha: DiscreteMeasure,
    nu_beta: DiscreteMeasure,
    norm_tol: float = 0.25,
) -> CompactnessProfile:
    """``||(C_phi - C_psi) f_k||_{A_beta^q}`` along a family normalized in ``A_alpha^p``.

    Each member's Monte Carlo norm must lie within ``norm_tol`` (relative) of 1.
    """
    family = list(family)
    norms = pmap(lambda f: _normed(f, spec.p, nu_alpha, spec.alpha), family)
    for k, est in enumerate(norms):
        if abs(est.value - 1.0) > norm_tol:
            raise ValueError(f"family member {k} has norm {est.value:.6g}, not 1 within {norm_tol}")
    outs = pmap(lambda f: difference_norm(spec, f, nu_beta), family)
    return CompactnessProfile(
        np.array([o.value for o in outs]),
        np.array([o.std_error for o in outs]),
        np.array([e.value for e in norms]),
    )


# ------------------------------------------------------------------ reports


QUANTITIES = ("gamma_sup", "essential_tail", "lt_quantity", "direct_lower", "compactness_probe", "carleson")


@dataclass(frozen=True)
class CompareConfig:
    s: float | None = None
    quantities: tuple | None = None
    N_alpha: int = 50_000
    N_beta: int = 50_000
    N_lt: int = 4_000
    seed: int = 0
    grid_K: int = 8
    grid_directions: int | None = None
    tail_gaps: tuple = tuple(2.0 ** -k for k in range(1, 17))
    tail_directions: int | None = None
    tail_K: int = 3
    carleson_r: float = 0.5
    dict_degree: int = 4
    dict_gaps: tuple = (0.1, 0.01, 0.001)
    dict_directions: int = 2
    N_param: float = 4.0
    probe_kmax: int = 40

    def resolved_quantities(self, spec: OperatorSpec) -> tuple:
        """The requested quantities; by default all that apply (``lt_quantity`` only when ``q < p``)."""
        if self.quantities is None:
            return tuple(x for x in QUANTITIES if x != "lt_quantity" or spec.q < spec.p)
        unknown = set(self.quantities) - set(QUANTITIES)
        if unknown:
            raise ValueError(f"unknown quantities {sorted(unknown)}; choose from {list(QUANTITIES)}")
        if "lt_quantity" in self.quantities and not spec.q < spec.p:
            raise ValueError(f"lt_quantity requires q < p, got p={spec.p!r}, q={spec.q!r}")
        return tuple(x for x in QUANTITIES if x in self.quantities)

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


@dataclass
class NormReport:
    gamma_sup: float | None = None
    gamma_grid_sup: float | None = None
    gamma_witness: list | None = None
    essential_tail: ShellProfile | None = None
    lt_norm: float | None = None
    direct_lower: float | None = None
    direct_lower_se: float | None = None
    direct_witness: str | None = None
    compactness: CompactnessProfile | None = None
    carleson: dict | None = None
    ratio_diagnostics: dict = field(default_factory=dict)
    floor_events: int = 0

    def to_dict(self) -> dict:
        return {
            "gamma_sup": self.gamma_sup,
            "gamma_grid_sup": self.gamma_grid_sup,
            "gamma_witness": self.gamma_witness,
            "essential_tail": None if self.essential_tail is None else self.essential_tail.to_dict(),
            "lt_norm": self.lt_norm,
            "direct_lower": self.direct_lower,
            "direct_lower_se": self.direct_lower_se,
            "direct_witness": self.direct_witness,
            "compactness": None if self.compactness is None else self.compactness.to_dict(),
            "carleson": self.carleson,
            "ratio_diagnostics": self.ratio_diagnostics,
            "floor_events": self.floor_events,
        }


def _ratio(a, b):
    if a is None or b is None or not b > 0:
        return None
    return a / b


def compare(spec: OperatorSpec, config: CompareConfig | None = None) -> NormReport:
    """Every requested quantity for ``spec`` and the ratios between them.

    Undefined ratios (zero denominators, e.g. when ``phi = psi``) are reported as None.
    The reported ``gamma_sup`` also takes the essential-tail shells into account
    when both are computed, since those reach closer to the sphere than the grid.
    """
    cfg = CompareConfig() if config is None else config
    wanted = cfg.resolved_quantities(spec)
    s = spec.default_s() if cfg.s is None else cfg.s
    n = spec.n
    nu_alpha = sample_nu_alpha(WeightParams(n, spec.alpha), cfg.N_alpha, cfg.seed)
    nu_beta = sample_nu_alpha(WeightParams(n, spec.beta), cfg.N_beta, cfg.seed + 1)
    floors = FloorCounter()
    grid = carleson.default_grid(n, cfg.grid_K, cfg.grid_directions)
    rep = NormReport()

    if "essential_tail" in wanted:
        rep.essential_tail = essential_tail(spec, s, cfg.tail_gaps, cfg.tail_directions, nu_beta, cfg.tail_K)
    if "gamma_sup" in wanted:
        gs = gamma_sup(spec, s, grid, nu_beta, floors=floors)
        rep.gamma_grid_sup = gs.value
        rep.gamma_sup = gs.value
        rep.gamma_witness = [[z.real, z.imag] for z in gs.witness]
        if rep.essential_tail is not None and float(np.max(rep.essential_tail.values)) > gs.value:
            rep.gamma_sup = float(np.max(rep.essential_tail.values))
    if "lt_quantity" in wanted:
        small_a = sample_nu_alpha(WeightParams(n, spec.alpha), cfg.N_lt, cfg.seed + 2)
        small_b = sample_nu_alpha(WeightParams(n, spec.beta), cfg.N_lt, cfg.seed + 3)
        rep.lt_norm = lt_quantity(spec, s, small_a, small_b, floors=floors)
    if "direct_lower" in wanted:
        dictionary = default_dictionary(n, spec.p, spec.alpha, cfg.dict_degree, cfg.dict_gaps, cfg.dict_directions, cfg.N_param)
        dl = direct_lower(spec, dictionary, nu_alpha, nu_beta)
        rep.direct_lower, rep.direct_lower_se, rep.direct_witness = dl.value, dl.std_error, dl.witness
    if "compactness_probe" in wanted:
        rep.compactness = compactness_probe(spec, normalized_powers(n, spec.p, spec.alpha, cfg.probe_kmax), nu_alpha, nu_beta)
    crep = None
    if "carleson" in wanted:
        omega = holo.pullback_measure(spec.phi, spec.psi, spec.q, nu_beta, validate=False)
        params = CriterionParams(spec.lam, spec.alpha, cfg.carleson_r, n, s)
        if spec.lam >= 1:
            crep = carleson.carleson_report(omega, params, grid, gaps=cfg.tail_gaps, count=cfg.tail_directions)
        else:
            crep = carleson.carleson_report(omega, params, nu_sample=nu_alpha, p=spec.p, q=spec.q)
        rep.carleson = crep.to_dict()

    root = None if rep.gamma_sup is None else rep.gamma_sup ** (1.0 / spec.q)
    ratios = {
        "gamma_sup^(1/q)/direct_lower": _ratio(root, rep.direct_lower),
        "essential_tail/gamma_sup": _ratio(None if rep.essential_tail is None else rep.essential_tail.tail_estimate, rep.gamma_sup),
    }
    if crep is not None:
        ratios["gamma_sup/omega_ball_quantity"] = _ratio(rep.gamma_sup, crep.ball_quantity)
        ratios["omega_berezin_sup/gamma_sup"] = _ratio(crep.berezin_sup, rep.gamma_sup)
    if rep.lt_norm is not None:
        ratios["lt_norm^(1/q)/direct_lower"] = _ratio(rep.lt_norm ** (1.0 / spec.q), rep.direct_lower)
    rep.ratio_diagnostics = ratios
    rep.floor_events = floors.count + (crep.floor_events if crep is not None else 0)
    return rep
