"""scikit-learn compatible wrappers around the flowpat network and scaler.

These let the classifier sit inside ``Pipeline``, ``cross_val_score`` or
``GridSearchCV`` like any other estimator::

    clf = MLPFlowClassifier(epochs=200, random_state=7).fit(X_train, y_train)
    clf.score(X_test, y_test)
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, validate_data

from .data import fit_standardization
from .mlp import DEFAULT_HIDDEN, MlpTopology, forward_batch, init_model
from .training import TrainConfig, fit_arrays


class FeatureStandardizer(TransformerMixin, BaseEstimator):
    """Z-score columns with population statistics; constant columns are only centred."""

    def fit(self, X, y=None):
        X = validate_data(self, X, dtype=np.float64)
        params = fit_standardization(X)
        self.mean_ = np.array(params.mean)
        self.scale_ = np.array(params.scale)
        return self

    def transform(self, X):
        check_is_fitted(self, ["mean_", "scale_"])
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self, ["mean_", "scale_"])
        return check_array(X, dtype=np.float64) * self.scale_ + self.mean_


class MLPFlowClassifier(ClassifierMixin, BaseEstimator):
    """ReLU multilayer perceptron trained by per-sample SGD with l1/l2 penalties.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int, default (25, 25, 25)
    learning_rate : float, default 0.01
    epochs : int, default 500
    l1, l2 : float, default 1e-5
        Penalty weights; the l2 term contributes ``2 * l2 * w`` to the gradient.
    loss : {"mse", "cross_entropy"}, default "mse"
    shuffle : bool, default True
        Reshuffle the samples every epoch.
    lr_decay : bool, default False
        Use ``learning_rate / (1 + epoch / epochs)``.
    standardize : bool, default True
        Z-score the inputs with statistics from the training data.
    classes : sequence, optional
        Fixes the output order; defaults to the sorted unique labels.
    random_state : int, default 0
    """

    def __init__(
        self,
        hidden_layer_sizes=DEFAULT_HIDDEN,
        learning_rate=0.01,
        epochs=500,
        l1=1e-5,
        l2=1e-5,
        loss="mse",
        shuffle=True,
        lr_decay=False,
        standardize=True,
        classes=None,
        random_state=0,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.l1 = l1
        self.l2 = l2
        self.loss = loss
        self.shuffle = shuffle
        self.lr_decay = lr_decay
        self.standardize = standardize
        self.classes = classes
        self.random_state = random_state

    def _config(self):
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            l1_weight=self.l1,
            l2_weight=self.l2,
            loss=self.loss,
            seed=self.random_state,
            shuffle_each_epoch=self.shuffle,
            lr_decay=self.lr_decay,
            hidden_topology=tuple(self.hidden_layer_sizes),
        )

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64)
        check_classification_targets(y)
        config = self._config()
        if self.classes is None:
            self.classes_ = np.unique(y)
        else:
            self.classes_ = np.asarray(self.classes)
            missing = set(np.unique(y)) - set(self.classes_.tolist())
            if missing:
                raise ValueError(f"labels {sorted(missing)} are not in classes")
        if self.standardize:
            self.standardizer_ = FeatureStandardizer().fit(X)
            X = self.standardizer_.transform(X)
        else:
            self.standardizer_ = None
        lookup = {c: i for i, c in enumerate(self.classes_.tolist())}
        y_idx = np.array([lookup[v] for v in y.tolist()], dtype=np.intp)
        topology = MlpTopology((X.shape[1], *config.hidden_topology, len(self.classes_)))
        model = init_model(topology, [str(c) for c in self.classes_], config.seed)
        report = fit_arrays(model, X, y_idx, config)
        self.model_ = report.model
        self.loss_curve_ = list(report.losses)
        return self

    def _outputs(self, X):
        check_is_fitted(self, "model_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        if self.standardizer_ is not None:
            X = self.standardizer_.transform(X)
        return forward_batch(self.model_, X)

    def decision_function(self, X):
        """Raw network outputs, one column per class.

        With two classes this is the margin of the second output over the
        first, following the scikit-learn binary convention.
        """
        out = self._outputs(X)
        return out[:, 1] - out[:, 0] if len(self.classes_) == 2 else out

    def predict(self, X):
        winners = np.argmax(self._outputs(X), axis=1)
        return self.classes_[winners]
