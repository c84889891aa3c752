"""Confusion matrices, error-rate reports and their text renderings.

Counts stay integers and rates stay ``Fraction`` objects until a table is
rendered, so reference tables can be checked digit for digit.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .data import DataError, get_scheme, scheme_for_classes, scheme_map
from .mlp import predict_index

ERROR_DECIMALS = 7


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    classes: tuple
    counts: np.ndarray

    def __post_init__(self):
        classes = tuple(str(c) for c in self.classes)
        counts = np.array(self.counts)
        k = len(classes)
        if counts.shape != (k, k):
            raise DataError(f"counts must be {k}x{k}, got shape {counts.shape}")
        if counts.size and not np.all(counts == np.round(counts)):
            raise DataError("confusion counts must be integers")
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise DataError("confusion counts must be non-negative")
        counts.flags.writeable = False
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "counts", counts)

    def __eq__(self, other):
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.classes == other.classes and np.array_equal(self.counts, other.counts)

    __hash__ = None

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def correct(self):
        return int(np.trace(self.counts))

    @property
    def misclassified(self):
        return self.total - self.correct

    @property
    def accuracy(self):
        return Fraction(self.correct, self.total) if self.total else Fraction(0)

    @property
    def error(self):
        return Fraction(self.misclassified, self.total) if self.total else Fraction(0)

    def __add__(self, other):
        if self.classes != other.classes:
            raise DataError("cannot add confusion matrices over different classes")
        return ConfusionMatrix(self.classes, self.counts + other.counts)


def matrix_from_labels(classes, true_labels, predicted_labels):
    classes = tuple(classes)
    lookup = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        try:
            counts[lookup[t], lookup[p]] += 1
        except KeyError as exc:
            raise DataError(f"label {exc.args[0]!r} not in {list(classes)}") from None
    return ConfusionMatrix(classes, counts)


def confusion_matrix(model, ds):
    """Evaluate ``model`` on the (already standardized) dataset ``ds``."""
    if tuple(ds.scheme.classes) != tuple(model.classes):
        raise DataError(
            f"dataset scheme {ds.scheme.name} {list(ds.scheme.classes)} does not match "
            f"model classes {list(model.classes)}"
        )
    k = len(model.classes)
    counts = np.zeros((k, k), dtype=np.int64)
    if len(ds):
        np.add.at(counts, (ds.y, predict_index(model, ds.X)), 1)
    return ConfusionMatrix(model.classes, counts)


def sum_matrices(matrices):
    matrices = list(matrices)
    if not matrices:
        raise DataError("no matrices to sum")
    total = matrices[0]
    for m in matrices[1:]:
        total = total + m
    return total


def merge_confusion(cm, target):
    """Aggregate ``cm`` onto a coarser label scheme (rows and columns)."""
    target = get_scheme(target)
    mapping = scheme_map(scheme_for_classes(cm.classes), target)
    k = target.n_classes
    proj = np.zeros((len(cm.classes), k), dtype=np.int64)
    for i, cls in enumerate(cm.classes):
        proj[i, target.index(mapping[cls])] = 1
    return ConfusionMatrix(target.classes, proj.T @ cm.counts @ proj)


@dataclass(frozen=True)
class ClassReport:
    """Per-row error fractions plus the overall error and accuracy."""

    classes: tuple
    misclassified: tuple
    row_totals: tuple
    total_misclassified: int
    total: int

    @property
    def row_errors(self):
        return tuple(Fraction(m, n) if n else Fraction(0) for m, n in zip(self.misclassified, self.row_totals))

    @property
    def rates(self):
        return tuple(f"{m}/{n}" for m, n in zip(self.misclassified, self.row_totals))

    @property
    def undefined(self):
        """Classes with no true samples, whose error is reported as 0."""
        return tuple(c for c, n in zip(self.classes, self.row_totals) if n == 0)

    @property
    def overall_error(self):
        return Fraction(self.total_misclassified, self.total) if self.total else Fraction(0)

    @property
    def overall_rate(self):
        return f"{self.total_misclassified}/{self.total}"

    @property
    def accuracy(self):
        return 1 - self.overall_error


def class_report(cm):
    counts = cm.counts
    row_totals = counts.sum(axis=1)
    misclassified = row_totals - np.diag(counts)
    return ClassReport(
        cm.classes,
        tuple(int(v) for v in misclassified),
        tuple(int(v) for v in row_totals),
        cm.misclassified,
        cm.total,
    )


def format_error(value, decimals=ERROR_DECIMALS):
    """Exact decimal rounding of a fraction, e.g. ``4/621 -> '0.0064412'``."""
    scaled = round(Fraction(value) * 10**decimals)
    sign = "-" if scaled < 0 else ""
    whole, frac = divmod(abs(scaled), 10**decimals)
    return f"{sign}{whole}.{frac:0{decimals}d}"


def render_table(report, cm):
    """Fixed-width table: counts, 7-decimal error and misclassified/total rate."""
    if report.classes != cm.classes:
        raise DataError("report and matrix cover different classes")
    label_w = max([len(c) for c in cm.classes] + [5])
    cell_w = max([len(c) for c in cm.classes] + [len(str(int(cm.counts.max(initial=0)))),
                                                  len(str(cm.total))])
    err_w = ERROR_DECIMALS + 2
    rate_w = max(len(r) for r in report.rates + (report.overall_rate, "Rate"))

    def line(label, cells, err, rate):
        body = " ".join(str(c).rjust(cell_w) for c in cells)
        return f"{label.ljust(label_w)} {body} {err.rjust(err_w)}  {rate.rjust(rate_w)}"

    rows = [line("", cm.classes, "Error", "Rate")]
    for i, cls in enumerate(cm.classes):
        mark = "*" if report.row_totals[i] == 0 else ""
        rows.append(line(cls, cm.counts[i], format_error(report.row_errors[i]) + mark, report.rates[i]))
    rows.append(line("Total", cm.counts.sum(axis=0), format_error(report.overall_error), report.overall_rate))
    for cls in report.undefined:
        rows.append(f"* no true samples of {cls}: error undefined, reported as 0")
    return "\n".join(rows) + "\n"


def parse_table(text):
    """Recover a ``ConfusionMatrix`` from ``render_table`` output.

    Anything before the column header (report comments, banners) is skipped.
    """
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("*")]
    start = next((i for i, ln in enumerate(lines) if ln.split()[-2:] == ["Error", "Rate"]), None)
    if start is None:
        raise DataError("no confusion table header found")
    lines = lines[start:]
    classes = tuple(lines[0].split()[:-2])
    k = len(classes)
    counts = []
    for ln in lines[1:1 + k]:
        parts = ln.split()
        if parts[0] != classes[len(counts)]:
            raise DataError(f"unexpected row label {parts[0]!r}")
        counts.append([int(v) for v in parts[1:1 + k]])
    return ConfusionMatrix(classes, counts)


def render_flat(cm):
    """One ``true_label,predicted_label,count`` line per cell."""
    rows = ["true_label,predicted_label,count"]
    for i, t in enumerate(cm.classes):
        for j, p in enumerate(cm.classes):
            rows.append(f"{t},{p},{int(cm.counts[i, j])}")
    return "\n".join(rows) + "\n"


def parse_flat(text):
    lines = [ln for ln in text.splitlines() if ln.strip()][1:]
    cells = [ln.split(",") for ln in lines]
    classes = []
    for t, _, _ in cells:
        if t not in classes:
            classes.append(t)
    lookup = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p, n in cells:
        counts[lookup[t], lookup[p]] = int(n)
    return ConfusionMatrix(tuple(classes), counts)
