"""scikit-learn style wrapper around the Carleson criteria.

``fit`` takes atoms as rows (complex ``(N, n)`` or real ``(N, 2n)`` laid out as
real parts then imaginary parts) with optional ``sample_weight`` and computes
the supremum criteria; ``transform`` evaluates the pointwise quantities at new
points.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import carleson
from .measure import DiscreteMeasure


def as_complex(X) -> np.ndarray:
    X = np.asarray(X)
    if np.iscomplexobj(X):
        return np.atleast_2d(X).astype(complex)
    X = np.atleast_2d(X.astype(float))
    if X.shape[1] % 2:
        raise ValueError("real input needs an even number of columns (real parts, then imaginary parts)")
    n = X.shape[1] // 2
    return X[:, :n] + 1j * X[:, n:]


class CarlesonCriteria(TransformerMixin, BaseEstimator):
    """Ball-mass and Berezin criteria of a weighted point cloud.

    After ``fit``: ``ball_quantity_`` and ``berezin_sup_`` (supremum estimates),
    ``measure_`` and ``n_features_in_``.  ``transform`` returns one row per point
    with columns ``[ball ratio, Berezin transform]``.
    """

    def __init__(self, lam=1.0, alpha=0.0, r=0.5, s_exp=None, grid_K=8, grid_directions=None, refine=True):
        self.lam = lam
        self.alpha = alpha
        self.r = r
        self.s_exp = s_exp
        self.grid_K = grid_K
        self.grid_directions = grid_directions
        self.refine = refine

    def _params(self, n):
        return carleson.CriterionParams(self.lam, self.alpha, self.r, n, self.s_exp)

    def fit(self, X, y=None, sample_weight=None):
        Z = as_complex(X)
        w = np.full(Z.shape[0], 1.0 / Z.shape[0]) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        self.measure_ = DiscreteMeasure(Z, w)
        self.n_features_in_ = np.asarray(X).shape[1]
        params = self._params(Z.shape[1])
        grid = carleson.default_grid(Z.shape[1], self.grid_K, self.grid_directions, refine=self.refine)
        self.ball_quantity_ = carleson.ball_quantity(self.measure_, params, grid)
        self.berezin_sup_ = carleson.berezin_sup(self.measure_, params, grid)
        return self

    def transform(self, X):
        check_is_fitted(self, "measure_")
        Z = as_complex(X)
        if Z.shape[1] != self.measure_.n:
            raise ValueError(f"expected points of dimension {self.measure_.n}, got {Z.shape[1]}")
        params = self._params(Z.shape[1])
        ball = carleson.ball_ratio(self.measure_, params, Z)
        ber = carleson.kernel_transform(self.measure_, Z, params.s_exp, params.weight_exp + params.s_exp)
        return np.column_stack([ball, ber])
