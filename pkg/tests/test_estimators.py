import numpy as np
import pytest
from sklearn.base import clone

from holoball import carleson, measure
from holoball.estimators import CarlesonCriteria, as_complex
from holoball.measure import DiscreteMeasure, WeightParams


def test_real_layout_matches_complex():
    Z = np.array([[0.1 + 0.2j, -0.3j], [0.0, 0.5]])
    X = np.hstack([Z.real, Z.imag])
    np.testing.assert_array_equal(as_complex(X), Z)
    with pytest.raises(ValueError):
        as_complex(np.zeros((2, 3)))


def test_fit_matches_functional_api():
    mu = measure.sample_nu_alpha(WeightParams(1, 0.0), 3000, seed=1)
    est = CarlesonCriteria(grid_K=5, grid_directions=4).fit(mu.points)
    P = carleson.CriterionParams(1.0, 0.0, 0.5, 1)
    grid = carleson.default_grid(1, 5, 4)
    ref = DiscreteMeasure(mu.points, mu.weights)
    assert est.ball_quantity_ == carleson.ball_quantity(ref, P, grid)
    assert est.berezin_sup_ == carleson.berezin_sup(ref, P, grid)
    out = est.transform(np.zeros((1, 2)))
    assert out.shape == (1, 2)
    assert out[0, 1] == pytest.approx(1.0, rel=1e-12)


def test_clone_and_dimension_check():
    est = CarlesonCriteria(lam=2.0, r=0.3)
    assert clone(est).get_params()["lam"] == 2.0
    fitted = CarlesonCriteria(grid_K=3, grid_directions=4).fit(np.array([[0.1j]]), sample_weight=[2.0])
    assert fitted.measure_.total == 2.0
    with pytest.raises(ValueError, match="dimension"):
        fitted.transform(np.zeros((1, 2), dtype=complex))
