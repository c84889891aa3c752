"""Seeded synthetic flow-pattern datasets labelled by a fixed rule-based map.

The map is a deliberately simple decision list over superficial velocities,
inclination and diameter.  It is not a physical transition model; it only
gives the training pipeline a learnable target whose Bayes accuracy is 100%
when no label noise is added.

Rule set ``flowmap-rules v1``, applied in order:

1. ``vsg >= 15 m/s``                                        -> A
2. ``|inclination| < 5 deg`` and ``vsl < 0.1 m/s``          -> SS if
   ``vsg < 1.5 m/s * (D / 1 in)``, else SW
3. ``vsl >= 0.5 m/s`` and ``vsg < 1 m/s``                   -> DB if
   ``vsl >= 2 m/s``, else B
4. everything else                                          -> I

Intermittent flow therefore surrounds the dispersed and stratified regions,
which keeps the classes from being linearly separable.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import FEATURES, TEST1, Dataset, DataError, validate_features

RULES_VERSION = "flowmap-rules v1"

INCH = 0.0254
VSG_ANNULAR = 15.0
STRATIFIED_MAX_INCLINATION = 5.0
VSL_STRATIFIED = 0.1
VSG_WAVY_PER_INCH = 1.5
VSL_BUBBLE = 0.5
VSG_BUBBLE_MAX = 1.0
VSL_DISPERSED = 2.0

_LOG_UNIFORM = frozenset({"vsl", "vsg", "mu_l", "mu_g"})

DEFAULT_RANGES = {
    "vsl": (0.005, 5.0),
    "vsg": (0.03, 50.0),
    "rho_l": (750.0, 1050.0),
    "rho_g": (1.0, 40.0),
    "mu_l": (5e-4, 5e-2),
    "mu_g": (1e-5, 3e-5),
    "sigma": (0.02, 0.075),
    "pressure": (100.0, 1000.0),
    "temperature": (10.0, 80.0),
}

_BLOCK = 1024

_COL = {name: i for i, name in enumerate(FEATURES)}


def classify_batch(X):
    """Vectorized rule map; returns base labels as an object array."""
    X = validate_features(X)
    vsl = X[:, _COL["vsl"]]
    vsg = X[:, _COL["vsg"]]
    incl = X[:, _COL["inclination"]]
    diameter = X[:, _COL["diameter"]]

    labels = np.full(X.shape[0], "I", dtype=object)
    undecided = np.ones(X.shape[0], dtype=bool)

    annular = vsg >= VSG_ANNULAR
    labels[annular] = "A"
    undecided &= ~annular

    stratified = undecided & (np.abs(incl) < STRATIFIED_MAX_INCLINATION) & (vsl < VSL_STRATIFIED)
    smooth = vsg < VSG_WAVY_PER_INCH * diameter / INCH
    labels[stratified & smooth] = "SS"
    labels[stratified & ~smooth] = "SW"
    undecided &= ~stratified

    dispersed = undecided & (vsl >= VSL_BUBBLE) & (vsg < VSG_BUBBLE_MAX)
    labels[dispersed & (vsl >= VSL_DISPERSED)] = "DB"
    labels[dispersed & (vsl < VSL_DISPERSED)] = "B"
    return labels


def classify_mechanistic(x):
    """Label one feature vector with the v1 rule map."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (len(FEATURES),):
        raise DataError(f"expected {len(FEATURES)} features, got shape {x.shape}")
    return str(classify_batch(x.reshape(1, -1))[0])


@dataclass(frozen=True)
class GenSpec:
    n_samples: int = 5676
    seed: int = 0
    ranges: dict = field(default_factory=lambda: dict(DEFAULT_RANGES))
    diameter_choices: tuple = (INCH, 2 * INCH)
    inclination_range: tuple = (-90.0, 90.0)
    noise_fraction: float = 0.0

    def __post_init__(self):
        if int(self.n_samples) != self.n_samples or self.n_samples <= 0:
            raise DataError(f"n_samples must be a positive integer, got {self.n_samples}")
        if not 0.0 <= self.noise_fraction < 0.5:
            raise DataError(f"noise_fraction must lie in [0, 0.5), got {self.noise_fraction}")
        ranges = dict(DEFAULT_RANGES)
        ranges.update(self.ranges)
        unknown = set(ranges) - set(FEATURES)
        if unknown or "diameter" in ranges or "inclination" in ranges:
            raise DataError(f"ranges may only cover sampled scalar features, got {sorted(ranges)}")
        for name, (lo, hi) in ranges.items():
            if not lo < hi:
                raise DataError(f"degenerate range for {name}: ({lo}, {hi})")
            if name in ("vsl", "vsg") and lo < 0:
                raise DataError(f"{name} range must be non-negative")
            if name in _LOG_UNIFORM and lo <= 0:
                raise DataError(f"{name} is sampled log-uniformly; its range must be positive")
            if name in ("rho_l", "rho_g", "mu_l", "mu_g", "sigma") and lo <= 0:
                raise DataError(f"{name} range must be positive")
        lo, hi = self.inclination_range
        if not (-90.0 <= lo < hi <= 90.0):
            raise DataError(f"inclination range must be a proper sub-interval of [-90, 90], got ({lo}, {hi})")
        if not self.diameter_choices or any(d <= 0 for d in self.diameter_choices):
            raise DataError("diameter choices must be a non-empty set of positive values")
        object.__setattr__(self, "ranges", ranges)
        object.__setattr__(self, "diameter_choices", tuple(float(d) for d in self.diameter_choices))


def _sample_block(spec, block, size=_BLOCK):
    # Every block has its own generator and is always drawn in full, so
    # sample i depends only on (seed, i); callers truncate the last block.
    rng = np.random.default_rng([int(spec.seed), block])
    X = np.empty((size, len(FEATURES)))
    for name in FEATURES:
        col = _COL[name]
        if name == "diameter":
            X[:, col] = rng.choice(np.array(spec.diameter_choices), size=size)
        elif name == "inclination":
            X[:, col] = rng.uniform(*spec.inclination_range, size=size)
        else:
            lo, hi = spec.ranges[name]
            if name in _LOG_UNIFORM:
                X[:, col] = np.exp(rng.uniform(np.log(lo), np.log(hi), size=size))
            else:
                X[:, col] = rng.uniform(lo, hi, size=size)
    noisy = rng.random(size) < spec.noise_fraction
    redraw = rng.integers(0, len(TEST1.classes), size=size)
    return X, noisy, redraw


def generate_dataset(spec=None):
    """Sample features, label them with the rule map and add label noise."""
    spec = GenSpec() if spec is None else spec
    blocks = []
    for block, start in enumerate(range(0, spec.n_samples, _BLOCK)):
        blocks.append(_sample_block(spec, block))
    n = spec.n_samples
    X = np.concatenate([b[0] for b in blocks])[:n]
    noisy = np.concatenate([b[1] for b in blocks])[:n]
    redraw = np.concatenate([b[2] for b in blocks])[:n]
    labels = classify_batch(X)
    labels[noisy] = np.array(TEST1.classes, dtype=object)[redraw[noisy]]
    return Dataset(X, labels, TEST1, provenance=RULES_VERSION)
