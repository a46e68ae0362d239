"""scikit-learn style wrappers around the radial model.

Inputs are arrays of shape ``(n, 2)`` whose rows are ``(h, delta)``.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import nnls
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .minimize import DEFAULT_SEED
from .scaling import SWEEP_MAX_ITER, run_point

__all__ = ["ScalingLawRegressor", "MinimalEnergyTransformer", "scaling_features"]


def _check_params(X):
    X = check_array(X, dtype=float)
    if X.shape[1] != 2:
        raise ValueError(f"expected rows (h, delta), got {X.shape[1]} columns")
    h, d = X[:, 0], X[:, 1]
    if np.any((h <= 0) | (h > 0.5)):
        raise ValueError("h must satisfy 0 < h <= 1/2")
    if np.any((d < 0) | (d > 1)):
        raise ValueError("delta must satisfy 0 <= delta <= 1")
    return X


def scaling_features(X):
    """Columns ``h^2 log(1/h)`` and ``min(delta^2 h^(1/2), delta^(1/2) h^(3/2))``."""
    X = _check_params(X)
    h, d = X[:, 0], X[:, 1]
    return np.column_stack([h * h * np.log(1.0 / h),
                            np.minimum(d * d * np.sqrt(h), np.sqrt(d) * h**1.5)])


class ScalingLawRegressor(RegressorMixin, BaseEstimator):
    """Nonnegative prefactors ``c`` of ``E ~ c0 h^2 log(1/h) + c1 min(...)``.

    The fit minimizes the sum of squared relative errors, so energies spanning
    many decades weigh equally.

    Attributes
    ----------
    coef_ : ndarray of shape (2,)
    n_features_in_ : int
    """

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        if np.any(y <= 0):
            raise ValueError("energies must be positive")
        F = scaling_features(X)
        self.coef_, _ = nnls(F / y[:, None], np.ones_like(y))
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return scaling_features(X) @ self.coef_

    def score(self, X, y, sample_weight=None):
        """Mean absolute log10 error, negated (higher is better)."""
        y = np.asarray(y, dtype=float)
        return -float(np.mean(np.abs(np.log10(self.predict(X) / y))))


class MinimalEnergyTransformer(TransformerMixin, BaseEstimator):
    """Maps rows ``(h, delta)`` to the computed minimal energy.

    ``fit`` only validates its input; there is nothing to learn.

    Parameters
    ----------
    n_cells : int
    policy : {"focus", "graded"}
    seed : int
    max_iter : int
    """

    def __init__(self, n_cells=2048, policy="focus", seed=DEFAULT_SEED,
                 max_iter=SWEEP_MAX_ITER):
        self.n_cells = n_cells
        self.policy = policy
        self.seed = seed
        self.max_iter = max_iter

    def fit(self, X, y=None):
        X = _check_params(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = _check_params(X)
        out = np.empty((X.shape[0], 1))
        for i, (h, d) in enumerate(X):
            rec = run_point(h, d, self.n_cells, self.policy, self.seed, self.max_iter)
            if rec.error is not None:
                raise ArithmeticError(f"minimization failed at h={h}, delta={d}: {rec.error}")
            out[i, 0] = rec.e_min
        return out
