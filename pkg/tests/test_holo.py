import json

import numpy as np
import pytest
from scipy import integrate as quad_

from holoball import geometry, holo, measure
from holoball.holo import Affine, Compose, Diagonal, KernelPower, LinComb, MobiusAut, Monomial, Poly
from holoball.measure import DiscreteMeasure, NonFiniteError, WeightParams


def nu(n, alpha, N, seed=0):
    return measure.sample_nu_alpha(WeightParams(n, alpha), N, seed)


# -- maps ----------------------------------------------------------------------


def test_map_eval_examples():
    assert holo.map_eval(Diagonal([0.5]), np.array([0.6]))[0] == pytest.approx(0.3)
    a = np.array([0.3, 0.4j])
    np.testing.assert_allclose(holo.map_eval(MobiusAut(a), np.zeros(2)), a, atol=1e-16)
    z = np.array([0.6 - 0.3j])
    np.testing.assert_allclose(holo.map_eval(Compose(Diagonal([0.5]), Diagonal([1 / 3])), z), z / 6)


def test_mobius_aut_with_unitary():
    a = np.array([0.3, 0.4j])
    U = holo.unitary_to_axis(np.array([0.2 + 0.1j, 0.5]))
    z = np.array([[0.1, 0.2j], [-0.4, 0.3]])
    np.testing.assert_allclose(holo.apply_map(MobiusAut(a, U), z), geometry.mobius(a, z @ U.T))


def test_poly_map():
    # (z1, z2) -> (z1 z2, z1^2 / 2)
    phi = Poly(((((1, 1), 1.0),), (((2, 0), 0.5),)), 2)
    out = holo.map_eval(phi, np.array([0.5, 0.5j]))
    np.testing.assert_allclose(out, [0.25j, 0.125])


def test_validate_self_map_examples():
    assert holo.validate_self_map(Diagonal([0.5])).ok
    bad = holo.validate_self_map(Affine(np.eye(1), np.array([0.5])))
    assert not bad.ok
    assert bad.max_image_norm > 1
    assert bad.witness is not None
    assert holo.validate_self_map(MobiusAut(np.array([0.9j, 0.1]), holo.unitary_to_axis(np.array([0.3, 0.1])))).ok
    with pytest.raises(holo.SelfMapError):
        holo.ensure_self_map(Affine(np.eye(1), np.array([0.5])))


def test_validate_self_map_sampled_polynomial():
    good = Poly(((((2,), 0.9),),), 1)
    assert holo.validate_self_map(good).ok
    bad = Poly(((((1,), 0.6), ((2,), 0.6)),), 1)
    assert not holo.validate_self_map(bad).ok


def test_apply_map_rejects_escape():
    with pytest.raises(holo.SelfMapError):
        holo.apply_map(Affine(np.eye(1), np.array([0.5])), np.array([0.9]))


def test_rho_gap_examples():
    z = np.array([[0.6]])
    assert holo.rho_gap(Diagonal([0.5]), Diagonal([1 / 3]), z)[0] == pytest.approx(0.1 / 0.94, rel=1e-12)
    pts = measure.uniform_ball(1, 50, 1)
    np.testing.assert_array_equal(holo.rho_gap(Diagonal([0.5]), Diagonal([0.5]), pts), 0)
    c = 0.3 - 0.4j
    np.testing.assert_allclose(holo.rho_gap(holo.constant_map([0]), holo.constant_map([c]), pts), abs(c))


def test_map_json_round_trip():
    maps = [
        Diagonal([0.5, -0.25j]),
        Affine(np.array([[0.3, 0.1j], [0.0, 0.2]]), np.array([0.1, 0.0])),
        MobiusAut(np.array([0.2, 0.1j]), holo.unitary_to_axis(np.array([0.1, 0.7]))),
        Poly(((((1, 1), 0.5),), (((0, 2), 0.25j),)), 2),
        Compose(Diagonal([0.5, 0.5]), MobiusAut(np.array([0.0, 0.3]))),
    ]
    z = measure.uniform_ball(2, 20, 3)
    for m in maps:
        back = holo.map_from_dict(json.loads(json.dumps(m.to_dict())))
        np.testing.assert_array_equal(holo.apply_map(back, z), holo.apply_map(m, z))


# -- pull-back measure ---------------------------------------------------------


def test_pullback_zero_for_equal_maps():
    om = holo.pullback_measure(Diagonal([0.5]), Diagonal([0.5]), 2, nu(1, 0, 100))
    assert om.total == 0
    assert len(om) == 200


def test_pullback_identity_exact():
    base = nu(2, 1.0, 2000, seed=4)
    phi, psi = Diagonal([0.5, 0.3j]), MobiusAut(np.array([0.2, 0.1]))
    q = 1.5
    om = holo.pullback_measure(phi, psi, q, base)
    rq = holo.rho_gap(phi, psi, base.points) ** q
    P, S = holo.apply_map(phi, base.points), holo.apply_map(psi, base.points)
    for g in (lambda z: np.ones(len(z)), lambda z: np.sum(np.abs(z) ** 2, axis=1), lambda z: 1 - np.sum(np.abs(z) ** 2, axis=1)):
        lhs = measure.integrate(g, om).value
        rhs = measure.integrate(lambda z: (g(P) + g(S)) * rq, base).value
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))


def test_pullback_radial_oracle():
    base = nu(1, 0.0, 400_000, seed=5)
    om = holo.pullback_measure(Diagonal([0.5]), Diagonal([-0.5]), 2, base)
    oracle, _ = quad_.quad(lambda r: 2 * 2 * r * (r / (1 + r * r / 4)) ** 2, 0, 1)
    per_atom = 2 * holo.rho_gap(Diagonal([0.5]), Diagonal([-0.5]), base.points) ** 2
    est = measure.estimate_from_values(per_atom, base)
    assert om.total == pytest.approx(est.value, rel=1e-12)
    assert abs(om.total - oracle) < 3 * est.std_error


# -- functions -----------------------------------------------------------------


def test_fn_eval_examples():
    assert holo.fn_eval(Monomial((2, 1)), np.array([0.5, 0.5j])) == pytest.approx(0.125j)
    pts = measure.uniform_ball(2, 10, 1)
    np.testing.assert_array_equal(holo.fn_eval(KernelPower(np.zeros(2), 3.7), pts), 1)
    z = np.array([0.4 - 0.2j])
    assert holo.fn_eval(holo.dilate(Monomial((1,)), 1), z) == pytest.approx(z[0] / 2)


def test_kernel_power_value():
    w = np.array([0.3 + 0.4j])
    z = np.array([0.5j])
    f = KernelPower(w, 2.5, scale=2.0, kappa=0.5)
    expect = 2.0 / (1 - 0.5 * z[0] * np.conj(w[0])) ** 2.5
    assert holo.fn_eval(f, z) == pytest.approx(expect, rel=1e-14)
    with pytest.raises(ValueError):
        KernelPower(np.array([0.9]), 1.0, kappa=1.2)


def test_lincomb_and_non_finite():
    f = LinComb((2.0, -1j), (Monomial((1, 0)), Monomial((0, 1))))
    assert holo.fn_eval(f, np.array([0.3, 0.2])) == pytest.approx(0.6 - 0.2j)

    class Bad(holo.AnalyticFn):
        def __call__(self, z):
            return np.full(len(np.atleast_2d(z)), np.nan)

    with pytest.raises(NonFiniteError):
        holo.fn_eval(Bad(), np.array([0.1]))


def test_dilation_limit_and_contraction():
    f = LinComb((1.0, 0.5), (Monomial((3,)), Monomial((1,))))
    z = np.array([0.7 + 0.1j])
    errs = [abs(holo.fn_eval(holo.dilate(f, m), z) - holo.fn_eval(f, z)) for m in (1, 10, 100, 1000)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 2e-3
    sample = nu(1, 1.0, 100_000, seed=6)
    full = holo.apalpha_norm(f, 3.0, sample)
    for m in (1, 3, 10):
        Km = holo.apalpha_norm(holo.dilate(f, m), 3.0, sample)
        assert Km.value <= full.value + 3 * np.hypot(full.std_error, Km.std_error)


def test_monomials_enumeration():
    ms = holo.monomials(2, 2)
    assert sorted(m.m for m in ms) == sorted([(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)])


def test_function_json_round_trip():
    params = holo.TestFnParams(2, 2.0, 0.0)
    fns = [
        Monomial((1, 2)),
        KernelPower(np.array([0.3, 0.2j]), 2.5, 0.5, 0.8),
        LinComb((1.0, 2j), (Monomial((1, 0)), Monomial((0, 0)))),
        holo.dilate(Monomial((0, 3)), 4),
        holo.test_fn(np.array([0.95, 0.1j]), 2, params),
    ]
    z = measure.uniform_ball(2, 10, 2)
    for f in fns:
        back = holo.fn_from_dict(json.loads(json.dumps(f.to_dict())))
        np.testing.assert_array_equal(holo.fn_eval(back, z), holo.fn_eval(f, z))


@pytest.mark.parametrize("alpha,expect", [(0.0, 1 / np.sqrt(2)), (1.0, 1 / np.sqrt(3))])
def test_apalpha_norm_examples(alpha, expect):
    sample = nu(1, alpha, 200_000, seed=7)
    assert holo.apalpha_norm(KernelPower(np.zeros(1), 1.0), 2.0, sample).value == 1.0
    est = holo.apalpha_norm(Monomial((1,)), 2.0, sample)
    assert abs(est.value - expect) < 3 * est.std_error


def test_apalpha_norm_against_lgamma_formula():
    from holoball.opnorm import monomial_norm

    sample = nu(1, 0.5, 200_000, seed=8)
    est = holo.apalpha_norm(Monomial((3,)), 1.5, sample)
    assert abs(est.value - monomial_norm((3,), 1.5, 0.5)) < 3 * est.std_error


def test_principal_branch_continuity():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 3))
        w = measure.uniform_ball(n, 1, int(rng.integers(1 << 30)))[0]
        w = w / np.linalg.norm(w) * rng.uniform(0.9, 0.999)
        e = rng.uniform(0.3, 4.0)
        f = KernelPower(w, e)
        ends = measure.uniform_ball(n, 2, int(rng.integers(1 << 30)))
        s = np.linspace(0, 1, 201)[:, None]
        seg = ends[0] * (1 - s) + ends[1] * s
        vals = holo.fn_eval(f, seg)
        base = np.abs(1 - geometry.inner(seg, w))
        # |f'| <= e |w| / |1 - <z,w>|^(e+1); allow the larger of the two endpoint slopes, doubled
        slope = e * np.linalg.norm(w) / base ** (e + 1)
        step = np.linalg.norm(ends[1] - ends[0]) / 200
        bound = 2 * np.maximum(slope[1:], slope[:-1]) * step
        assert np.all(np.abs(np.diff(vals)) <= bound)


# -- rotation and test functions -------------------------------------------------


def test_unitary_examples():
    np.testing.assert_allclose(holo.unitary_to_axis(np.array([0.5, 0])), np.eye(2), atol=1e-15)
    U = holo.unitary_to_axis(np.array([0, 0.5]))
    np.testing.assert_allclose(U @ np.array([0, 0.5]), [0.5, 0], atol=1e-15)
    assert np.count_nonzero(np.abs(U) > 1e-15) == 2
    with pytest.raises(ValueError):
        holo.unitary_to_axis(np.zeros(2))


def test_unitary_random():
    for a in measure.uniform_ball(3, 200, 9):
        U = holo.unitary_to_axis(a)
        assert np.max(np.abs(U.conj().T @ U - np.eye(3))) < 1e-12
        target = np.zeros(3)
        target[0] = np.linalg.norm(a)
        assert np.linalg.norm(U @ a - target) < 1e-12


def test_special_points_examples():
    vecs, tN = holo.special_points(0.8, 4, 2)
    np.testing.assert_allclose(vecs[0], [0.8, 0])
    np.testing.assert_allclose(vecs[1], [0.64, 0.48])
    assert tN == pytest.approx(0.2)
    vecs, _ = holo.special_points(0.37, 4, 4)
    np.testing.assert_allclose([np.linalg.norm(v) for v in vecs], 0.37, rtol=1e-15)


def test_test_fn_examples():
    params = holo.TestFnParams(2, 2.0, 0.0)
    assert params.delta == 2.0 and params.t == 5.0
    r = 0.95
    a = np.array([r, 0])
    f0 = holo.test_fn(a, 0, params)
    d = 1 - r * r
    assert holo.fn_eval(f0, np.zeros(2)) == pytest.approx(d ** (params.delta / params.p), rel=1e-13)
    assert holo.fn_eval(f0, a) == pytest.approx(d ** ((params.delta - params.t) / params.p), rel=1e-12)


def test_test_fn_rotation_covariance():
    params = holo.TestFnParams(2, 3.0, 1.0)
    a = np.array([0.6 + 0.5j, -0.6j])
    a = a / np.linalg.norm(a) * 0.97
    U = holo.unitary_to_axis(a)
    z = measure.uniform_ball(2, 20, 3)
    axis = np.array([0.97, 0])
    for j in range(3):
        rotated = holo.fn_eval(holo.test_fn(a, j, params), z)
        aligned = holo.fn_eval(holo.test_fn(axis, j, params), z @ U.T)
        np.testing.assert_allclose(rotated, aligned, rtol=1e-12)


def test_test_fn_errors():
    params = holo.TestFnParams(1, 2.0, 0.0)
    with pytest.raises(ValueError, match="validity"):
        holo.test_fn(np.array([0.5]), 0, params)
    with pytest.raises(ValueError):
        holo.test_fn(np.array([0.95]), 2, params)
    with pytest.raises(ValueError, match="t ="):
        holo.TestFnParams(1, 5.0, 0.0, delta=1.0)


def test_test_fn_norms_bounded():
    params = holo.TestFnParams(1, 2.0, 0.0)
    sample = nu(1, 0.0, 20_000, seed=10)
    sums = []
    for gap in (0.1, 0.01, 0.001):
        a = np.array([1 - gap])
        total = 0.0
        for f in holo.test_family(a, params):
            local = measure.recenter(sample, f.focus(), 0.0)
            total += holo.apalpha_norm(f, params.p, local).value
        sums.append(total)
    assert max(sums) / min(sums) <= 10


def test_difference_ratio_sweeps_positive():
    params = holo.TestFnParams(2, 2.0, 0.0)
    a = np.array([1 - 1 / 16, 0])
    z = measure.uniform_pseudo_ball(a, params.r0, 500, seed=1)
    w = measure.uniform_ball(2, 500, 2)
    assert np.min(holo.test_fn_difference_ratios(a, params, z, w)) > 0
    ratios = holo.kernel_difference_ratios(z, w, 0.9375, 2.0, params.N)
    assert np.all(np.isfinite(ratios)) and np.min(ratios) > 0


def test_local_oscillation_ratio_finite():
    sample = nu(1, 0.0, 20_000, seed=11)
    a = np.array([0.9])
    f = LinComb((1 / holo.apalpha_norm(Monomial((2,)), 2.0, sample).value,), (Monomial((2,)),))
    local = measure.recenter(sample, a, 0.0)
    z = measure.uniform_pseudo_ball(a, 0.3, 200, seed=3)
    ratios = holo.local_oscillation_ratios(f, a, z, 2.0, 2.0, 0.0, 0.6, local)
    assert np.all(np.isfinite(ratios)) and np.max(ratios) > 0


def test_local_oscillation_sweep_stable_under_refinement():
    # sup of the local-oscillation ratio over a in a radial grid; adding |a| = 0.99 to
    # the grid that stops at 0.9 must not raise it by more than a factor 2
    sample = nu(1, 0.0, 20_000, seed=12)
    fam = [LinComb((np.sqrt(k + 1),), (Monomial((k,)),)) for k in range(1, 5)]

    def sup_over(radii):
        best = 0.0
        for j, rad in enumerate(radii):
            a = np.array([rad * np.exp(0.7j * j)])
            local = measure.recenter(sample, a, 0.0)
            z = measure.uniform_pseudo_ball(a, 0.3, 300, seed=20 + j)
            for f in fam:
                best = max(best, float(np.max(holo.local_oscillation_ratios(f, a, z, 2.0, 2.0, 0.0, 0.6, local))))
        return best

    coarse = sup_over([0.0, 0.3, 0.6, 0.9])
    fine = max(coarse, sup_over([0.99]))
    assert np.isfinite(fine) and coarse > 0
    assert fine <= 2 * coarse
