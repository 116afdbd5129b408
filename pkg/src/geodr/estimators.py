"""scikit-learn wrappers over rows of initial conditions ``(r0, p0)``.

Nothing is learned: ``fit`` only validates input so the objects compose with
pipelines and grid utilities.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .glaw import GeometricTypeLaw, ModelConfig, iterate
from .regime import DEFAULT_DELTA, Regime, classify

_CLASSES = np.array([r.code for r in Regime], dtype=object)


def _rows(X) -> np.ndarray:
    X = check_array(X, dtype=float)
    if X.shape[1] != 2:
        raise ValueError(f"expected two columns (r0, p0), got {X.shape[1]}")
    return X


class RegimeClassifier(ClassifierMixin, BaseEstimator):
    """Predicts the regime code ('S', 'U' or 'C?') of each ``(r0, p0)`` row."""

    def __init__(self, m: float = 2.0, budget: int = 10**5, delta: float = DEFAULT_DELTA):
        self.m = m
        self.budget = budget
        self.delta = delta

    def fit(self, X, y=None):
        _rows(X)
        self.classes_ = _CLASSES
        self.n_features_in_ = 2
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "classes_")
        config = ModelConfig(self.m)
        out = [
            classify(GeometricTypeLaw(r0, p0), config, self.budget, self.delta, constants=False).regime.code
            for r0, p0 in _rows(X)
        ]
        return np.array(out, dtype=object)


class TrajectoryTransformer(TransformerMixin, BaseEstimator):
    """Maps each ``(r0, p0)`` row to ``(r_0..r_steps, p_0..p_steps)``."""

    def __init__(self, m: float = 2.0, steps: int = 10):
        self.m = m
        self.steps = steps

    def fit(self, X, y=None):
        _rows(X)
        self.n_features_in_ = 2
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "n_features_in_")
        config = ModelConfig(self.m)
        rows = []
        for r0, p0 in _rows(X):
            traj = iterate(GeometricTypeLaw(r0, p0), config, self.steps)
            rows.append(np.concatenate([traj.r, traj.p]))
        return np.array(rows, dtype=float)

    def get_feature_names_out(self, input_features=None):
        n = range(self.steps + 1)
        return np.array([f"r_{i}" for i in n] + [f"p_{i}" for i in n], dtype=object)
