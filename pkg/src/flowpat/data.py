"""Feature schema, label schemes, the dataset container and its transforms.

Every sample is an 11-column feature row plus a flow-pattern label.  The
column order is fixed and is also the CSV header order::

    vsl, vsg, diameter, inclination, rho_l, rho_g, mu_l, mu_g, sigma,
    pressure, temperature

Units are m/s for the superficial velocities, m for the inner diameter,
degrees for the inclination, kg/m^3, Pa.s, N/m, kPa and degrees Celsius.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

FEATURES = (
    "vsl",
    "vsg",
    "diameter",
    "inclination",
    "rho_l",
    "rho_g",
    "mu_l",
    "mu_g",
    "sigma",
    "pressure",
    "temperature",
)
N_FEATURES = len(FEATURES)
HEADER = FEATURES + ("label",)

_NONNEGATIVE = (FEATURES.index("vsl"), FEATURES.index("vsg"))
_POSITIVE = tuple(
    FEATURES.index(name) for name in ("diameter", "rho_l", "rho_g", "mu_l", "mu_g", "sigma")
)
_INCLINATION = FEATURES.index("inclination")

BASE_CLASSES = ("A", "B", "DB", "I", "SS", "SW")

# Slug and churn are folded into intermittent flow upstream of this toolkit.
_FOLDED_TAGS = {"SL": "slug", "CH": "churn"}


@dataclass(frozen=True)
class LabelScheme:
    """An ordered class set together with the map from the six base labels."""

    name: str
    classes: tuple
    merge_map: dict = field(hash=False, compare=False)

    def __post_init__(self):
        if set(self.merge_map) != set(BASE_CLASSES):
            raise DataError(f"{self.name}: merge map must cover every base label")
        if set(self.merge_map.values()) != set(self.classes):
            raise DataError(f"{self.name}: merge map must be onto the class list")

    @property
    def n_classes(self):
        return len(self.classes)

    def index(self, label):
        return self.classes.index(label)

    def parse_label(self, token):
        """Resolve a label token case-insensitively against this scheme."""
        text = token.strip()
        for cls in self.classes:
            if cls.lower() == text.lower():
                return cls
        if text.upper() in _FOLDED_TAGS:
            raise DataError(
                f"label {text!r} ({_FOLDED_TAGS[text.upper()]}) is not a separate class; "
                "slug and churn points must be labelled I (intermittent)"
            )
        raise DataError(f"unknown label {text!r} for scheme {self.name} {list(self.classes)}")


TEST1 = LabelScheme("Test1", BASE_CLASSES, {c: c for c in BASE_CLASSES})
TEST2 = LabelScheme(
    "Test2",
    ("A", "B", "DB", "I", "ST"),
    {"A": "A", "B": "B", "DB": "DB", "I": "I", "SS": "ST", "SW": "ST"},
)
TEST3 = LabelScheme(
    "Test3",
    ("Intermittent", "Dispersed", "Segregate"),
    {
        "I": "Intermittent",
        "DB": "Dispersed",
        "B": "Dispersed",
        "SS": "Segregate",
        "SW": "Segregate",
        "A": "Segregate",
    },
)
SCHEMES = {s.name: s for s in (TEST1, TEST2, TEST3)}


def get_scheme(name):
    """Look up ``Test1``/``Test2``/``Test3`` (case-insensitive); schemes pass through."""
    if isinstance(name, LabelScheme):
        return name
    for key, scheme in SCHEMES.items():
        if key.lower() == str(name).strip().lower():
            return scheme
    raise DataError(f"unknown label scheme {name!r}; expected one of {list(SCHEMES)}")


def scheme_for_classes(classes):
    """Return the scheme whose ordered class list equals ``classes``."""
    classes = tuple(classes)
    for scheme in SCHEMES.values():
        if scheme.classes == classes:
            return scheme
    raise DataError(f"class list {list(classes)} does not match any label scheme")


def scheme_map(source, target):
    """Map each class of ``source`` onto a class of ``target``.

    Raises ``DataError`` when some source class would have to split across
    several target classes, i.e. ``target`` is not a coarsening of ``source``.
    """
    mapping = {}
    for base in BASE_CLASSES:
        src = source.merge_map[base]
        dst = target.merge_map[base]
        if mapping.setdefault(src, dst) != dst:
            raise DataError(f"scheme {target.name} is not reachable from {source.name}")
    return mapping


@dataclass(frozen=True)
class Standardization:
    """Per-feature ``(mean, scale)`` pairs; transform is ``(x - mean) / scale``."""

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64)
        scale = np.array(self.scale, dtype=np.float64)
        if mean.ndim != 1 or mean.shape != scale.shape:
            raise DataError(
                f"standardization needs matching mean and stddev vectors, "
                f"got shapes {mean.shape} and {scale.shape}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(scale)) and np.all(scale > 0)):
            raise DataError("standardization parameters must be finite with stddev > 0")
        mean.flags.writeable = False
        scale.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)

    def apply(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale

    def __eq__(self, other):
        if not isinstance(other, Standardization):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.scale, other.scale)

    __hash__ = None


def validate_features(X, *, where=None):
    """Check the physical-domain invariants of a feature matrix.

    Returns ``X`` as a float64 array of shape ``(n, 11)``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != N_FEATURES:
        raise DataError(f"expected {N_FEATURES} feature columns, got shape {X.shape}")

    def fail(row, msg):
        prefix = f"{where}: " if where else ""
        raise DataError(f"{prefix}row {row}: {msg}")

    bad = ~np.isfinite(X)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        fail(r, f"{FEATURES[c]} is not finite")
    for c in _NONNEGATIVE:
        rows = np.flatnonzero(X[:, c] < 0)
        if rows.size:
            fail(rows[0], f"{FEATURES[c]} must be >= 0")
    for c in _POSITIVE:
        rows = np.flatnonzero(X[:, c] <= 0)
        if rows.size:
            fail(rows[0], f"{FEATURES[c]} must be > 0")
    rows = np.flatnonzero(np.abs(X[:, _INCLINATION]) > 90)
    if rows.size:
        fail(rows[0], "inclination must lie in [-90, 90] degrees")
    return X


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, labels and the scheme those labels belong to.

    ``standardization`` is set once the features have been z-scored, so
    physical-domain checks are only applied to raw datasets.  ``provenance``
    carries the rule-set tag of synthetic data (``flowmap-rules v1``).
    """

    X: np.ndarray
    labels: np.ndarray
    scheme: LabelScheme = TEST1
    standardization: Standardization | None = None
    provenance: str | None = None

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, N_FEATURES)
        if X.ndim != 2 or X.shape[1] != N_FEATURES:
            raise DataError(f"expected {N_FEATURES} feature columns, got shape {X.shape}")
        if self.standardization is None:
            validate_features(X)
        elif not np.all(np.isfinite(X)):
            raise DataError("standardized features must be finite")
        labels = np.array([str(lab) for lab in self.labels], dtype=object)
        if labels.shape != (X.shape[0],):
            raise DataError(f"{X.shape[0]} feature rows but {labels.size} labels")
        unknown = set(labels) - set(self.scheme.classes)
        if unknown:
            raise DataError(
                f"labels {sorted(unknown)} do not belong to scheme {self.scheme.name}"
            )
        X.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.X.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.scheme == other.scheme
            and self.standardization == other.standardization
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None

    @property
    def y(self):
        """Integer class indices in scheme order."""
        lookup = {c: i for i, c in enumerate(self.scheme.classes)}
        return np.fromiter((lookup[lab] for lab in self.labels), dtype=np.intp, count=len(self))

    def class_counts(self):
        return {c: int(np.count_nonzero(self.labels == c)) for c in self.scheme.classes}

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.intp)
        return Dataset(
            self.X[indices], self.labels[indices], self.scheme, self.standardization, self.provenance
        )


# --------------------------------------------------------------------- CSV


def _read_rows(path):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    provenance = None
    body = []
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            if not body and provenance is None:
                provenance = stripped.lstrip("#").strip() or None
            continue
        body.append((lineno, line))
    return provenance, body


def _parse_features(lineno, fields, path):
    values = []
    for name, text in zip(FEATURES, fields):
        try:
            values.append(float(text))
        except ValueError:
            raise DataError(f"{path}:{lineno}: {name} is not numeric: {text!r}") from None
    return values


def load_csv(path, scheme=TEST1):
    """Read a labelled dataset.

    The header must be exactly ``vsl,...,temperature,label``.  Leading ``#``
    comment lines are allowed; the first one is kept as provenance.
    """
    scheme = get_scheme(scheme)
    provenance, body = _read_rows(path)
    if not body:
        raise DataError(f"{path}: empty file (no header)")
    header_lineno, header_line = body[0]
    header = tuple(h.strip() for h in next(csv.reader([header_line])))
    if header != HEADER:
        raise DataError(f"{path}:{header_lineno}: header must be {','.join(HEADER)}")
    rows, labels = [], []
    for lineno, fields in zip((n for n, _ in body[1:]), csv.reader(line for _, line in body[1:])):
        if len(fields) != len(HEADER):
            raise DataError(
                f"{path}:{lineno}: expected {len(HEADER)} fields, got {len(fields)}"
            )
        rows.append(_parse_features(lineno, fields, path))
        try:
            labels.append(scheme.parse_label(fields[-1]))
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: empty dataset (header only)")
    X = validate_features(rows, where=str(path))
    return Dataset(X, labels, scheme, provenance=provenance)


def load_features_csv(path):
    """Read an unlabelled feature file (the 11 feature columns only)."""
    _, body = _read_rows(path)
    if not body:
        raise DataError(f"{path}: empty file (no header)")
    header_lineno, header_line = body[0]
    header = tuple(h.strip() for h in next(csv.reader([header_line])))
    if header != FEATURES:
        raise DataError(f"{path}:{header_lineno}: header must be {','.join(FEATURES)}")
    rows = []
    for lineno, fields in zip((n for n, _ in body[1:]), csv.reader(line for _, line in body[1:])):
        if len(fields) != N_FEATURES:
            raise DataError(f"{path}:{lineno}: expected {N_FEATURES} fields, got {len(fields)}")
        rows.append(_parse_features(lineno, fields, path))
    if not rows:
        raise DataError(f"{path}: empty dataset (header only)")
    return validate_features(rows, where=str(path))


def save_csv(ds, path, *, comment=None):
    """Write ``ds`` in the CSV interchange format.

    Numbers use Python's shortest round-trip repr, so ``load_csv`` recovers
    every value bit for bit.
    """
    if len(ds) == 0:
        raise DataError("cannot save an empty dataset")
    comment = ds.provenance if comment is None else comment
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for row, label in zip(ds.X, ds.labels):
            writer.writerow([repr(float(v)) for v in row] + [label])


# --------------------------------------------------------------- transforms


def merge_labels(ds, target):
    """Relabel ``ds`` under the coarser scheme ``target``."""
    target = get_scheme(target)
    mapping = scheme_map(ds.scheme, target)
    labels = [mapping[lab] for lab in ds.labels]
    return Dataset(ds.X, labels, target, ds.standardization, ds.provenance)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.6
    validation_fraction: float = 0.2
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        fracs = self.fractions
        if not all(0.0 < f < 1.0 for f in fracs):
            raise DataError(f"split fractions must lie in (0, 1), got {fracs}")
        if abs(math.fsum(fracs) - 1.0) > 1e-9:
            raise DataError(f"split fractions must sum to 1, got {math.fsum(fracs)}")
        if not (0 <= int(self.seed) < 2**64):
            raise DataError("split seed must be a 64-bit unsigned integer")

    @property
    def fractions(self):
        return (self.train_fraction, self.validation_fraction, self.test_fraction)


def _apportion(n, fractions):
    """Split ``n`` items by ``fractions`` with nearest rounding.

    A shortfall goes to the first part (train, then validation, ...) that was
    rounded down; a surplus is taken from the last part that was rounded up.
    Each part ends within 1 of its exact share.
    """
    targets = [f * n for f in fractions]
    counts = [math.floor(t + 0.5) for t in targets]
    while sum(counts) < n:
        i = next(i for i, (c, t) in enumerate(zip(counts, targets)) if c < t)
        counts[i] += 1
    while sum(counts) > n:
        i = next(i for i in reversed(range(len(counts))) if counts[i] > targets[i])
        counts[i] -= 1
    return counts


def stratified_split_indices(labels, classes, spec):
    """Index arrays (train, validation, test), each in ascending order."""
    labels = np.asarray(labels, dtype=object)
    rng = np.random.default_rng(int(spec.seed))
    parts = ([], [], [])
    for cls in classes:
        idx = rng.permutation(np.flatnonzero(labels == cls))
        start = 0
        for part, count in zip(parts, _apportion(idx.size, spec.fractions)):
            part.append(idx[start:start + count])
            start += count
    return tuple(np.sort(np.concatenate(p)).astype(np.intp) if p else np.empty(0, np.intp)
                 for p in parts)


def stratified_split(ds, spec=None):
    """Per-class shuffled split into (train, validation, test) datasets."""
    spec = SplitSpec() if spec is None else spec
    return tuple(ds.subset(idx) for idx in stratified_split_indices(ds.labels, ds.scheme.classes, spec))


def fit_standardization(X):
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        raise DataError("cannot standardize an empty dataset")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    constant = np.ptp(X, axis=0) == 0
    # Constant columns become (x - mean).
    scale[constant] = 1.0
    mean[constant] = X[0, constant]
    return Standardization(mean, scale)


def standardize_fit(ds):
    """Z-score every column with its mean and population stddev."""
    if ds.standardization is not None:
        raise DataError("dataset is already standardized")
    params = fit_standardization(ds.X)
    return standardize_apply(ds, params), params


def standardize_apply(ds, params):
    """Z-score ``ds`` with previously fitted parameters."""
    if not isinstance(params, Standardization):
        mean, scale = zip(*params)
        params = Standardization(mean, scale)
    if params.mean.size != N_FEATURES:
        raise DataError(
            f"standardization needs {N_FEATURES} (mean, stddev) pairs, got {params.mean.size}"
        )
    if ds.standardization is not None:
        raise DataError("dataset is already standardized")
    return Dataset(params.apply(ds.X), ds.labels, ds.scheme, params, ds.provenance)
