"""Losses, penalized per-sample SGD, the epoch loop and k-fold cross-validation."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .data import Dataset, DataError, standardize_apply, standardize_fit
from .errors import ShapeError, TrainingDivergedError
from .mlp import DEFAULT_HIDDEN, RELU, MlpTopology, init_model

log = logging.getLogger(__name__)

MSE = "MeanSquaredError"
CROSS_ENTROPY = "CrossEntropySoftmax"
LOSSES = (MSE, CROSS_ENTROPY)
_LOSS_ALIASES = {"mse": MSE, "meansquarederror": MSE, "crossentropysoftmax": CROSS_ENTROPY,
                 "cross_entropy": CROSS_ENTROPY, "crossentropy": CROSS_ENTROPY, "ce": CROSS_ENTROPY}

PAPER_EPOCHS = 1_000_000

# Independent RNG streams derived from one user seed.
_SHUFFLE_STREAM = 1
_FOLD_STREAM = 2


def loss_kind(name):
    key = str(name).strip().lower().replace("-", "_")
    if key in _LOSS_ALIASES:
        return _LOSS_ALIASES[key]
    raise DataError(f"unknown loss {name!r}; expected one of {LOSSES}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 500
    l1_weight: float = 1e-5
    l2_weight: float = 1e-5
    loss: str = MSE
    seed: int = 0
    nfolds: int = 10
    shuffle_each_epoch: bool = True
    lr_decay: bool = False
    hidden_topology: tuple = DEFAULT_HIDDEN

    def __post_init__(self):
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise DataError(f"learning_rate must be a positive number, got {self.learning_rate}")
        if int(self.epochs) != self.epochs or self.epochs <= 0:
            raise DataError(f"epochs must be a positive integer, got {self.epochs}")
        if self.l1_weight < 0 or self.l2_weight < 0:
            raise DataError("penalty weights must be >= 0")
        if int(self.nfolds) != self.nfolds or self.nfolds < 2:
            raise DataError(f"nfolds must be an integer >= 2, got {self.nfolds}")
        hidden = tuple(int(h) for h in self.hidden_topology)
        if any(h <= 0 for h in hidden):
            raise DataError(f"hidden layer sizes must be positive, got {hidden}")
        object.__setattr__(self, "loss", loss_kind(self.loss))
        object.__setattr__(self, "hidden_topology", hidden)
        object.__setattr__(self, "epochs", int(self.epochs))
        object.__setattr__(self, "nfolds", int(self.nfolds))
        object.__setattr__(self, "seed", int(self.seed))

    def topology(self, n_classes, n_inputs=11):
        return MlpTopology((n_inputs, *self.hidden_topology, n_classes))


_CONFIG_KEYS = {
    "learning_rate": ("learning_rate", float),
    "epochs": ("epochs", int),
    "l1": ("l1_weight", float),
    "l2": ("l2_weight", float),
    "loss": ("loss", str),
    "seed": ("seed", int),
    "nfolds": ("nfolds", int),
    "hidden_topology": ("hidden_topology", lambda s: tuple(int(t) for t in s.split(",") if t.strip())),
    "shuffle_each_epoch": ("shuffle_each_epoch", lambda s: _parse_bool(s)),
    "lr_decay": ("lr_decay", lambda s: _parse_bool(s)),
}


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_config(text, base=None):
    """Parse ``key = value`` lines; unspecified keys keep ``base``'s values."""
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise DataError(f"config line {lineno}: unknown key {key!r}")
        attr, convert = _CONFIG_KEYS[key]
        try:
            updates[attr] = convert(value)
        except ValueError:
            raise DataError(f"config line {lineno}: bad value for {key}: {value!r}") from None
    return replace(base or TrainConfig(), **updates)


def load_config(path, base=None):
    return parse_config(Path(path).read_text(encoding="utf-8"), base)


def format_config(config):
    """Inverse of ``parse_config``."""
    inverse = {attr: key for key, (attr, _) in _CONFIG_KEYS.items()}
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{inverse[f.name]} = {value}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ losses


def one_hot(label, scheme):
    """Unit vector for ``label`` in the scheme's class order."""
    if label not in scheme.classes:
        raise DataError(f"label {label!r} is not in scheme {scheme.name}")
    vec = np.zeros(scheme.n_classes)
    vec[scheme.index(label)] = 1.0
    return vec


def _check_pair(output, target):
    output = np.asarray(output, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if output.shape != target.shape or output.ndim != 1:
        raise ShapeError(f"output shape {output.shape} does not match target shape {target.shape}")
    return output, target


def mse_loss(output, target):
    """Mean squared error over the k outputs and its gradient."""
    output, target = _check_pair(output, target)
    diff = output - target
    k = diff.size
    return float(diff @ diff) / k, (2.0 / k) * diff


def softmax_cross_entropy(output, target):
    """Cross-entropy of ``softmax(output)`` against a one-hot target."""
    output, target = _check_pair(output, target)
    shifted = output - output.max()
    log_norm = math.log(np.exp(shifted).sum())
    probs = np.exp(shifted - log_norm)
    return float(-(target @ (shifted - log_norm))), probs - target


LOSS_FUNCTIONS = {MSE: mse_loss, CROSS_ENTROPY: softmax_cross_entropy}


# --------------------------------------------------------------------- SGD


def sgd_step(model, gradients, config):
    """One penalized gradient step.

    Weights move by ``-lr * (g + l1 * sign(w) + 2 * l2 * w)``; biases by
    ``-lr * g``.
    """
    grad_w, grad_b = gradients
    if len(grad_w) != len(model.weights) or len(grad_b) != len(model.biases):
        raise ShapeError("gradient layer count does not match the model")
    lr, l1, l2 = config.learning_rate, config.l1_weight, config.l2_weight
    new_w, new_b = [], []
    for w, b, gw, gb in zip(model.weights, model.biases, grad_w, grad_b):
        gw = np.asarray(gw, dtype=np.float64)
        gb = np.asarray(gb, dtype=np.float64)
        if gw.shape != w.shape or gb.shape != b.shape:
            raise ShapeError(f"gradient shapes {gw.shape}/{gb.shape} != {w.shape}/{b.shape}")
        new_w.append(w - lr * (gw + l1 * np.sign(w) + 2 * l2 * w))
        new_b.append(b - lr * gb)
    return model.replace(tuple(new_w), tuple(new_b))


@dataclass
class TrainReport:
    losses: list
    model: object
    validation_accuracy: list = field(default_factory=list)

    @property
    def final_loss(self):
        return self.losses[-1]


def _run_epochs(model, X, T, config, X_val=None, y_val=None):
    # Overflow shows up as a non-finite epoch loss, which is reported below.
    with np.errstate(over="ignore", invalid="ignore"):
        return _sgd_epochs(model, X, T, config, X_val, y_val)


def _sgd_epochs(model, X, T, config, X_val=None, y_val=None):
    """Per-sample SGD over ``X`` with one-hot targets ``T``.

    Works on private copies of the parameters and performs exactly the
    arithmetic of ``forward`` + ``backprop`` + ``sgd_step`` for each sample.
    """
    W = [np.array(w) for w in model.weights]
    B = [np.array(b) for b in model.biases]
    relu = [kind == RELU for kind in model.topology.activations]
    n_layers = len(W)
    n, k = T.shape
    loss_fn = LOSS_FUNCTIONS[config.loss]
    l1, l2 = config.l1_weight, config.l2_weight
    rng = np.random.default_rng([config.seed, _SHUFFLE_STREAM])
    losses, val_acc = [], []
    for epoch in range(config.epochs):
        lr = config.learning_rate
        if config.lr_decay:
            lr = lr / (1.0 + epoch / config.epochs)
        order = rng.permutation(n) if config.shuffle_each_epoch else range(n)
        total = 0.0
        for i in order:
            acts = [X[i]]
            pres = []
            a = X[i]
            for layer in range(n_layers):
                z = W[layer] @ a + B[layer]
                a = np.maximum(z, 0.0) if relu[layer] else z
                pres.append(z)
                acts.append(a)
            loss, g = loss_fn(a, T[i])
            total += loss
            for layer in reversed(range(n_layers)):
                w = W[layer]
                delta = g * (pres[layer] > 0) if relu[layer] else g
                if layer:
                    g = w.T @ delta
                w -= lr * (np.outer(delta, acts[layer]) + l1 * np.sign(w) + 2 * l2 * w)
                B[layer] -= lr * delta
        mean_loss = total / n
        if not math.isfinite(mean_loss):
            raise TrainingDivergedError(epoch + 1, mean_loss)
        losses.append(mean_loss)
        if X_val is not None:
            val_acc.append(_accuracy(W, B, relu, X_val, y_val))
        if (epoch + 1) % 50 == 0:
            log.debug("epoch %d/%d loss %.6g", epoch + 1, config.epochs, mean_loss)
    return model.replace(tuple(W), tuple(B)), losses, val_acc


def _accuracy(W, B, relu, X, y):
    A = X
    for w, b, r in zip(W, B, relu):
        A = A @ w.T + b
        if r:
            A = np.maximum(A, 0.0)
    return float(np.mean(np.argmax(A, axis=1) == y))


def _check_training_set(model, ds, role):
    if len(ds) == 0:
        raise DataError(f"{role} set is empty")
    if tuple(ds.scheme.classes) != tuple(model.classes):
        raise DataError(
            f"{role} set scheme {ds.scheme.name} {list(ds.scheme.classes)} does not match "
            f"model classes {list(model.classes)}"
        )
    if ds.standardization is None:
        raise DataError(f"{role} set must be standardized before training")
    if ds.X.shape[1] != model.topology.n_inputs:
        raise ShapeError(f"{role} set has {ds.X.shape[1]} features, model expects {model.topology.n_inputs}")


def train(model, train_set, config, validation_set=None):
    """Train ``model`` by per-sample SGD for ``config.epochs`` passes."""
    _check_training_set(model, train_set, "training")
    T = np.eye(train_set.scheme.n_classes)[train_set.y]
    X_val = y_val = None
    if validation_set is not None:
        _check_training_set(model, validation_set, "validation")
        X_val, y_val = validation_set.X, validation_set.y
    trained, losses, val_acc = _run_epochs(model, train_set.X, T, config, X_val, y_val)
    return TrainReport(losses, trained, val_acc)


def fit_arrays(model, X, y, config):
    """Train on a standardized array ``X`` with integer targets ``y``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    T = np.eye(model.topology.n_outputs)[np.asarray(y, dtype=np.intp)]
    trained, losses, _ = _run_epochs(model, X, T, config)
    return TrainReport(losses, trained)


# -------------------------------------------------------- cross-validation


def stratified_fold_ids(labels, classes, nfolds, seed):
    """Fold number for every sample.

    Each class is shuffled and dealt round-robin, continuing where the
    previous class stopped, so per-class and total fold sizes differ by at
    most one.
    """
    labels = np.asarray(labels, dtype=object)
    if nfolds < 2:
        raise DataError("nfolds must be >= 2")
    if nfolds > labels.size:
        raise DataError(f"nfolds = {nfolds} exceeds the dataset size {labels.size}")
    rng = np.random.default_rng([int(seed), _FOLD_STREAM])
    fold_of = np.full(labels.size, -1, dtype=np.intp)
    offset = 0
    for cls in classes:
        idx = rng.permutation(np.flatnonzero(labels == cls))
        fold_of[idx] = (offset + np.arange(idx.size)) % nfolds
        offset = (offset + idx.size) % nfolds
    if np.any(fold_of < 0):
        raise DataError("dataset contains labels outside the class list")
    return fold_of


@dataclass
class CrossValidationResult:
    fold_matrices: list
    pooled: object
    fold_ids: np.ndarray
    reports: list = field(default_factory=list)


def _run_fold(ds, fold_ids, fold, topology, config):
    from .evaluation import confusion_matrix

    train_part = ds.subset(np.flatnonzero(fold_ids != fold))
    held_out = ds.subset(np.flatnonzero(fold_ids == fold))
    if ds.standardization is None:
        train_part, params = standardize_fit(train_part)
        held_out = standardize_apply(held_out, params)
    fold_config = replace(config, seed=config.seed + fold)
    model = init_model(topology, ds.scheme.classes, fold_config.seed)
    report = train(model, train_part, fold_config)
    return confusion_matrix(report.model, held_out), report


def k_fold_cv(ds, topology, config, n_jobs=1):
    """Stratified k-fold cross-validation with ``config.nfolds`` folds.

    Fold ``i`` trains a fresh model seeded with ``config.seed + i`` on the
    remaining folds (standardized on those folds only) and is scored on the
    held-out fold.  Classes with fewer samples than folds leave some folds
    without that class.  The pooled matrix is the sum of the fold matrices.
    """
    from .evaluation import sum_matrices

    if topology.n_outputs != ds.scheme.n_classes:
        raise DataError(
            f"topology has {topology.n_outputs} outputs but scheme {ds.scheme.name} "
            f"has {ds.scheme.n_classes} classes"
        )
    fold_ids = stratified_fold_ids(ds.labels, ds.scheme.classes, config.nfolds, config.seed)
    if n_jobs == 1:
        results = [_run_fold(ds, fold_ids, f, topology, config) for f in range(config.nfolds)]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(
            delayed(_run_fold)(ds, fold_ids, f, topology, config) for f in range(config.nfolds)
        )
    matrices = [m for m, _ in results]
    return CrossValidationResult(matrices, sum_matrices(matrices), fold_ids, [r for _, r in results])

