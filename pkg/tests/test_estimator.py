import numpy as np
import pytest
from sklearn.base import clone
from sklearn.model_selection import cross_val_score
from sklearn.pipeline import make_pipeline
from sklearn.utils.estimator_checks import parametrize_with_checks

from conftest import random_dataset
from flowpat.data import TEST1, standardize_fit
from flowpat.estimator import FeatureStandardizer, MLPFlowClassifier
from flowpat.mlp import init_model
from flowpat.training import TrainConfig, train


@parametrize_with_checks([FeatureStandardizer(), MLPFlowClassifier(epochs=100, hidden_layer_sizes=(8,))])
def test_sklearn_contract(estimator, check):
    check(estimator)


def test_params_round_trip():
    clf = MLPFlowClassifier(hidden_layer_sizes=(4, 4), l1=0.0, random_state=3)
    params = clf.get_params()
    assert params["hidden_layer_sizes"] == (4, 4) and params["random_state"] == 3
    twin = clone(clf)
    assert twin.get_params() == params and twin is not clf


def test_matches_dataset_training(rng):
    ds = random_dataset(rng, 120)
    clf = MLPFlowClassifier(epochs=4, classes=TEST1.classes, random_state=11).fit(ds.X, ds.labels)
    config = TrainConfig(epochs=4, seed=11)
    std, _ = standardize_fit(ds)
    reference = train(init_model(config.topology(6), TEST1.classes, 11), std, config)
    assert clf.model_.parameters_equal(reference.model)
    assert clf.loss_curve_ == list(reference.losses)


def test_separable_problem_in_pipeline():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(300, 3)) * [1.0, 50.0, 0.01]
    y = np.where(X[:, 0] + X[:, 1] / 50 > 0, "up", "down")
    pipe = make_pipeline(FeatureStandardizer(), MLPFlowClassifier(epochs=60, standardize=False))
    scores = cross_val_score(pipe, X, y, cv=3)
    assert scores.min() > 0.9


def test_unknown_label_with_fixed_classes():
    with pytest.raises(ValueError):
        MLPFlowClassifier(epochs=1, classes=["a", "b"]).fit(np.zeros((3, 2)), ["a", "b", "c"])


def test_standardizer_inverse(rng):
    X = rng.normal(size=(40, 5)) * 7 + 3
    X[:, 2] = 4.0
    sc = FeatureStandardizer().fit(X)
    Z = sc.transform(X)
    assert np.allclose(Z[:, [0, 1, 3, 4]].std(axis=0), 1)
    assert np.all(Z[:, 2] == 0)
    assert np.allclose(sc.inverse_transform(Z), X)
