"""Fully connected feed-forward network with ReLU hidden layers.

Weights are stored per layer as ``(n_out, n_in)`` matrices, so a layer
computes ``pre = W @ prev + b`` followed by its activation.  Everything runs
in float64.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import N_FEATURES, Standardization
from .errors import DataError, ModelFormatError, ModelShapeError, ShapeError

RELU = "ReLU"
LINEAR = "Linear"
ACTIVATIONS = (RELU, LINEAR)

MAGIC = "FLOWPAT-MLP v1"
DEFAULT_HIDDEN = (25, 25, 25)


def _activation_tag(tag):
    for known in ACTIVATIONS:
        if str(tag).lower() == known.lower():
            return known
    raise ShapeError(f"unknown activation {tag!r}; expected one of {ACTIVATIONS}")


@dataclass(frozen=True)
class MlpTopology:
    """Layer sizes ``[n_in, h1, ..., n_out]`` and one activation per non-input layer."""

    layer_sizes: tuple
    activations: tuple = None

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise ShapeError("a topology needs at least an input and an output layer")
        if any(s <= 0 for s in sizes):
            raise ShapeError(f"layer sizes must be positive, got {sizes}")
        if self.activations is None:
            acts = (RELU,) * (len(sizes) - 2) + (LINEAR,)
        else:
            acts = tuple(_activation_tag(a) for a in self.activations)
        if len(acts) != len(sizes) - 1:
            raise ShapeError(f"{len(sizes) - 1} layers need as many activations, got {len(acts)}")
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "activations", acts)

    @classmethod
    def default(cls, n_classes, hidden=DEFAULT_HIDDEN, n_inputs=N_FEATURES):
        return cls((n_inputs, *hidden, n_classes))

    @property
    def n_inputs(self):
        return self.layer_sizes[0]

    @property
    def n_outputs(self):
        return self.layer_sizes[-1]

    @property
    def n_layers(self):
        return len(self.layer_sizes) - 1

    @property
    def n_parameters(self):
        s = self.layer_sizes
        return sum(s[i + 1] * s[i] + s[i + 1] for i in range(len(s) - 1))


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class MlpModel:
    topology: MlpTopology
    weights: tuple
    biases: tuple
    classes: tuple

    def __post_init__(self):
        topo = self.topology
        weights = tuple(_frozen(w) for w in self.weights)
        biases = tuple(_frozen(b) for b in self.biases)
        if len(weights) != topo.n_layers or len(biases) != topo.n_layers:
            raise ShapeError(f"expected {topo.n_layers} weight matrices and bias vectors")
        sizes = topo.layer_sizes
        for layer, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (sizes[layer + 1], sizes[layer]):
                raise ShapeError(
                    f"layer {layer}: weight shape {w.shape} != {(sizes[layer + 1], sizes[layer])}"
                )
            if b.shape != (sizes[layer + 1],):
                raise ShapeError(f"layer {layer}: bias shape {b.shape} != {(sizes[layer + 1],)}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DataError(f"layer {layer}: parameters must be finite")
        classes = tuple(str(c) for c in self.classes)
        if len(classes) != topo.n_outputs:
            raise DataError(f"{len(classes)} classes for {topo.n_outputs} output neurons")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)
        object.__setattr__(self, "classes", classes)

    def parameters_equal(self, other):
        """Bitwise equality of topology, class list and every parameter."""
        return (
            self.topology == other.topology
            and self.classes == other.classes
            and all(np.array_equal(a, b) and a.tobytes() == b.tobytes()
                    for a, b in zip(self.weights + self.biases, other.weights + other.biases))
        )

    def replace(self, weights=None, biases=None):
        return MlpModel(
            self.topology,
            self.weights if weights is None else weights,
            self.biases if biases is None else biases,
            self.classes,
        )


@dataclass(frozen=True)
class ForwardTrace:
    """Input plus per-layer pre- and post-activation vectors."""

    inputs: np.ndarray
    pre: tuple
    post: tuple


def init_model(topology, classes, seed=0):
    """Uniform ``+-sqrt(6 / fan_in)`` weights and zero biases, drawn in layer order."""
    classes = tuple(classes)
    if len(classes) != topology.n_outputs:
        raise DataError(f"{len(classes)} classes for {topology.n_outputs} output neurons")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    sizes = topology.layer_sizes
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(topology, tuple(weights), tuple(biases), classes)


def _activate(kind, z):
    if kind == RELU:
        return np.maximum(z, 0.0)
    return z


def _derivative(kind, z):
    if kind == RELU:
        return (z > 0).astype(np.float64)
    return np.ones_like(z)


def _check_input(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.topology.n_inputs,):
        raise ShapeError(f"input has shape {x.shape}, network expects ({model.topology.n_inputs},)")
    return x


def forward(model, x):
    """Run one sample through the network; returns ``(output, trace)``."""
    a = _check_input(model, x)
    pre, post = [], []
    for w, b, kind in zip(model.weights, model.biases, model.topology.activations):
        z = w @ a + b
        a = _activate(kind, z)
        pre.append(z)
        post.append(a)
    return a, ForwardTrace(np.array(x, dtype=np.float64), tuple(pre), tuple(post))


def forward_batch(model, X):
    """Outputs for every row of ``X`` (shape ``(n, n_out)``)."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim != 2 or A.shape[1] != model.topology.n_inputs:
        raise ShapeError(f"inputs have shape {A.shape}, network expects (n, {model.topology.n_inputs})")
    for w, b, kind in zip(model.weights, model.biases, model.topology.activations):
        A = _activate(kind, A @ w.T + b)
    return A


def predict_index(model, X):
    """Argmax output index per row; ties go to the lowest index."""
    return np.argmax(forward_batch(model, X), axis=1)


def predict_class(model, x):
    output, _ = forward(model, x)
    return model.classes[int(np.argmax(output))]


def predict_labels(model, X):
    classes = np.array(model.classes, dtype=object)
    return classes[predict_index(model, X)]


def backprop(model, trace, output_gradient):
    """Reverse-mode gradients of the loss w.r.t. every weight and bias.

    ``output_gradient`` is dLoss/d(output), the derivative with respect to
    the final post-activation vector.  Returns ``(weight_grads, bias_grads)``
    as tuples aligned with ``model.weights`` and ``model.biases``.
    """
    g = np.asarray(output_gradient, dtype=np.float64)
    n_layers = model.topology.n_layers
    if g.shape != (model.topology.n_outputs,):
        raise ShapeError(f"output gradient has shape {g.shape}, expected ({model.topology.n_outputs},)")
    if len(trace.pre) != n_layers or len(trace.post) != n_layers:
        raise ShapeError("trace does not match the model's layer count")
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    for layer in reversed(range(n_layers)):
        kind = model.topology.activations[layer]
        delta = g * _derivative(kind, trace.pre[layer])
        prev = trace.inputs if layer == 0 else trace.post[layer - 1]
        grad_w[layer] = np.outer(delta, prev)
        grad_b[layer] = delta
        g = model.weights[layer].T @ delta
    return tuple(grad_w), tuple(grad_b)


# ------------------------------------------------------------ serialization


def _fmt(values):
    return " ".join(format(float(v), ".17g") for v in values)


def serialize(model, path, standardization=None):
    """Write the text model format, optionally followed by input scaling."""
    topo = model.topology
    lines = [
        MAGIC,
        " ".join(str(s) for s in topo.layer_sizes),
        " ".join(topo.activations),
        " ".join(model.classes),
    ]
    for w, b in zip(model.weights, model.biases):
        lines.extend(_fmt(row) for row in w)
        lines.append(_fmt(b))
    if standardization is not None:
        lines.append("standardize")
        lines.append(_fmt(standardization.mean))
        lines.append(_fmt(standardization.scale))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _numbers(line, lineno):
    try:
        return [float(t) for t in line.split()]
    except ValueError:
        raise ModelFormatError(f"line {lineno}: non-numeric value") from None


def load_model_file(path):
    """Parse a model file; returns ``(model, standardization or None)``."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MAGIC:
        found = lines[0].strip() if lines else "<empty file>"
        raise ModelFormatError(f"unsupported model format {found!r}; expected {MAGIC!r}")
    if len(lines) < 4:
        raise ModelFormatError("truncated model file: header incomplete")
    try:
        sizes = [int(t) for t in lines[1].split()]
    except ValueError:
        raise ModelFormatError("line 2: layer sizes must be integers") from None
    try:
        topology = MlpTopology(tuple(sizes), tuple(lines[2].split()))
    except ShapeError as exc:
        raise ModelShapeError(f"inconsistent topology: {exc}") from None
    classes = tuple(lines[3].split())
    if len(classes) != topology.n_outputs:
        raise ModelShapeError(f"{len(classes)} classes for {topology.n_outputs} output neurons")

    pos = 4

    def take(n_values, what):
        nonlocal pos
        if pos >= len(lines):
            raise ModelFormatError(f"truncated model file: missing {what}")
        vals = _numbers(lines[pos], pos + 1)
        if len(vals) != n_values:
            raise ModelShapeError(
                f"line {pos + 1}: {what} has {len(vals)} values, expected {n_values}"
            )
        pos += 1
        return vals

    weights, biases = [], []
    for layer, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        weights.append([take(n_in, f"layer {layer} weight row {r}") for r in range(n_out)])
        biases.append(take(n_out, f"layer {layer} bias"))

    standardization = None
    rest = [ln for ln in lines[pos:] if ln.strip()]
    if rest:
        if rest[0].strip() != "standardize" or len(rest) != 3:
            raise ModelFormatError(f"line {pos + 1}: unexpected trailing content")
        pos += 1
        mean = take(topology.n_inputs, "standardization means")
        scale = take(topology.n_inputs, "standardization scales")
        try:
            standardization = Standardization(mean, scale)
        except DataError as exc:
            raise ModelFormatError(str(exc)) from None
    try:
        model = MlpModel(topology, tuple(weights), tuple(biases), classes)
    except (DataError, ShapeError) as exc:
        raise ModelFormatError(str(exc)) from None
    return model, standardization


def deserialize(path):
    return load_model_file(path)[0]
