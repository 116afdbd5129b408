import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from geodr.estimators import RegimeClassifier, TrajectoryTransformer


def test_classifier_predicts_codes():
    X = np.array([[0.4, 0.9], [0.5, 0.5], [0.9, 0.9]])
    clf = RegimeClassifier(m=2).fit(X)
    assert list(clf.predict(X)) == ["S", "S", "U"]
    assert clone(clf).get_params()["m"] == 2


def test_classifier_rejects_wrong_shape():
    with pytest.raises(ValueError):
        RegimeClassifier().fit(np.zeros((2, 3)))


def test_transformer_in_pipeline():
    X = np.array([[0.5, 0.5], [0.9, 0.9]])
    t = TrajectoryTransformer(m=2, steps=3)
    Z = t.fit_transform(X)
    assert Z.shape == (2, 8)
    assert Z[0, 1] == pytest.approx(1 / 3)
    assert Z[0, 5] == pytest.approx(5 / 9)
    assert len(t.get_feature_names_out()) == 8
    make_pipeline(TrajectoryTransformer(steps=2), StandardScaler()).fit_transform(X)
