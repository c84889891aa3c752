"""Acceptance criteria, one test per criterion.

Each criterion prints a single ``[criterion N] PASS|FAIL ...`` line, and the
lines are repeated in the terminal summary (see ``conftest.py``).  Runtime
limits are part of each criterion.
"""
import subprocess
import sys
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

import reference_tables
from conftest import random_dataset, random_model
from flowpat.data import TEST1, TEST2, TEST3, SplitSpec, standardize_apply, standardize_fit, stratified_split_indices
from flowpat.evaluation import ConfusionMatrix, class_report, confusion_matrix, format_error, merge_confusion
from flowpat.mlp import MlpTopology, backprop, deserialize, forward, init_model, predict_index, serialize
from flowpat.synth import GenSpec, generate_dataset
from flowpat.training import TrainConfig, stratified_fold_ids, train

RESULTS = {}


@contextmanager
def criterion(number, title, limit_s, already_elapsed=0.0):
    """Time a criterion, record its verdict and enforce the runtime limit.

    ``already_elapsed`` covers work done earlier in a shared fixture.
    """
    detail = {"status": "PASS", "note": ""}
    start = time.perf_counter() - already_elapsed
    try:
        yield detail
    except BaseException as exc:
        elapsed = time.perf_counter() - start
        _record(number, "FAIL", title, elapsed, limit_s, f"{type(exc).__name__}: {str(exc)[:120]}")
        raise
    elapsed = time.perf_counter() - start
    status = detail["status"] if elapsed < limit_s else "FAIL"
    note = detail["note"] if elapsed < limit_s else f"runtime over limit; {detail['note']}"
    _record(number, status, title, elapsed, limit_s, note)
    assert elapsed < limit_s, f"criterion {number} took {elapsed:.2f}s (limit {limit_s}s)"


def _record(number, status, title, elapsed, limit_s, note):
    line = f"[criterion {number}] {status} {title} ({elapsed:.2f}s / limit {limit_s}s)"
    if note:
        line += f" - {note}"
    RESULTS[number] = line
    print(line)


# --------------------------------------------------------- 1 reference tables


def _reference_cells():
    """(table, row, computed error, printed error, computed rate, printed rate) for every row."""
    for t in reference_tables.TABLES:
        report = class_report(ConfusionMatrix(t.classes, t.rows))
        for i, cls in enumerate(t.classes):
            yield t.name, cls, format_error(report.row_errors[i]), t.errors[i], report.rates[i], t.rates[i]
        yield t.name, "Total", format_error(report.overall_error), t.footer_error, report.overall_rate, t.footer_rate


def _printed_as_7dp(text):
    # Tables print trailing zeros inconsistently ("0.825", "0", "0.0").
    return format_error(Fraction(text))


def test_criterion_1_reference_tables():
    with criterion(1, "reference-table oracle", 1.0) as c:
        cells = list(_reference_cells())
        error_mismatch = [(t, r) for t, r, got, printed, _, _ in cells if got != _printed_as_7dp(printed)]
        rate_mismatch = [(t, r) for t, r, _, _, got, printed in cells if got != printed]
        assert rate_mismatch == []
        # Only the misprinted cells differ; every other Error value matches.
        assert sorted(error_mismatch) == sorted(reference_tables.ERRATA)
        n = len(cells)
        c["note"] = f"Rate {n}/{n}; Error {n - len(error_mismatch)}/{n}"
        if error_mismatch:
            c["status"] = "FAIL"
            c["note"] += " (misprinted: " + ", ".join(f"{t} {r}" for t, r in error_mismatch) + ")"


@pytest.mark.xfail(strict=True, reason="printed Error disagrees with the row's own counts and Rate")
@pytest.mark.parametrize("cell", sorted(reference_tables.ERRATA), ids=lambda c: f"{c[0]}-{c[1]}")
def test_criterion_1_misprinted_cells(cell):
    row = {(t, r): (got, printed) for t, r, got, printed, _, _ in _reference_cells()}[cell]
    assert row[0] == _printed_as_7dp(row[1])


def test_criterion_1_spot_values():
    t2 = class_report(ConfusionMatrix(*reference_tables.by_name("Test1 training")[1:3]))
    assert (format_error(t2.row_errors[0]), t2.rates[0]) == ("0.0064412", "4/621")
    t3 = class_report(ConfusionMatrix(*reference_tables.by_name("Test1 cross-validation")[1:3]))
    assert (format_error(t3.overall_error), t3.overall_rate) == ("0.1717379", "587/3418")


# ------------------------------------------------------------ 2 gradients


def _fd_oracle(model, x, upstream, step=1e-5):
    """Central differences of <upstream, output>, with a forward pass written out here."""
    acts = model.topology.activations

    def objective(ws, bs):
        a = x
        for w, b, kind in zip(ws, bs, acts):
            z = w @ a + b
            a = np.maximum(z, 0.0) if kind == "ReLU" else z
        return float(upstream @ a)

    ws = [w.copy() for w in model.weights]
    bs = [b.copy() for b in model.biases]
    out = []
    for group in (ws, bs):
        grads = []
        for p in group:
            g = np.empty_like(p)
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + step
                up = objective(ws, bs)
                p[idx] = old - step
                down = objective(ws, bs)
                p[idx] = old
                g[idx] = (up - down) / (2 * step)
            grads.append(g)
        out.append(grads)
    return out


def _compare(analytic, numeric, rel=1e-4, floor=1e-8):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(a), np.abs(n))
        err = np.abs(a - n)
        small = denom < floor
        if np.any(err[small] > floor):
            return False, worst
        if np.any(~small):
            worst = max(worst, float(np.max(err[~small] / denom[~small])))
    return worst <= rel, worst


def _clear_of_kinks(model, x, margin=1e-3):
    # A perturbation of 1e-5 must not flip any ReLU, or the difference quotient
    # measures the kink rather than the derivative.
    _, trace = forward(model, x)
    return all(np.all(np.abs(p) > margin) for p in trace.pre[:-1])


def test_criterion_2_gradients():
    rng = np.random.default_rng(2)
    with criterion(2, "backprop vs central differences, 50 models", 30.0) as c:
        worst = 0.0
        sizes_seen = set()
        for i in range(50):
            if i == 0:
                sizes = [11, 25, 25, 25, 6]
            else:
                depth = int(rng.integers(0, 4))
                sizes = [11] + [int(rng.integers(1, 26)) for _ in range(depth)] + [int(rng.integers(1, 7))]
            model = random_model(rng, sizes)
            x = rng.normal(size=11)
            while not _clear_of_kinks(model, x):
                x = rng.normal(size=11)
            upstream = rng.normal(size=sizes[-1])
            _, trace = forward(model, x)
            analytic_w, analytic_b = backprop(model, trace, upstream)
            numeric_w, numeric_b = _fd_oracle(model, x, upstream)
            ok, rel = _compare(list(analytic_w) + list(analytic_b), numeric_w + numeric_b)
            assert ok, f"model {i} {sizes}: worst relative error {rel:.3g}"
            worst = max(worst, rel)
            sizes_seen.add(tuple(sizes))
        c["note"] = f"{len(sizes_seen)} topologies, worst relative error {worst:.2e}"


# ---------------------------------------------------------- 3 learnability

LEARN_SEED = 7


@pytest.fixture(scope="module")
def learnability_run():
    """The full synthetic pipeline: generate, split 60/20/20, standardize, train 500 epochs."""
    start = time.perf_counter()
    ds = generate_dataset(GenSpec(n_samples=5676, seed=LEARN_SEED))
    train_idx, val_idx, test_idx = stratified_split_indices(ds.labels, TEST1.classes, SplitSpec(seed=LEARN_SEED))
    train_set, params = standardize_fit(ds.subset(train_idx))
    test_set = standardize_apply(ds.subset(test_idx), params)
    config = TrainConfig(seed=LEARN_SEED)
    assert (config.learning_rate, config.epochs, config.l1_weight, config.l2_weight) == (0.01, 500, 1e-5, 1e-5)
    model = init_model(config.topology(6), TEST1.classes, LEARN_SEED)
    report = train(model, train_set, config)
    return {
        "report": report,
        "test_matrix": confusion_matrix(report.model, test_set),
        "elapsed": time.perf_counter() - start,
    }


def test_criterion_3_learnability(learnability_run):
    with criterion(3, "synthetic end-to-end learnability", 300.0, learnability_run["elapsed"]) as c:
        cm = learnability_run["test_matrix"]
        merged = merge_confusion(cm, TEST3)
        c["note"] = (f"Test1 {float(cm.accuracy):.2%} ({cm.correct}/{cm.total}), "
                     f"Test3 {float(merged.accuracy):.2%} ({merged.correct}/{merged.total})")
        assert cm.accuracy >= Fraction(90, 100), c["note"]
        assert merged.accuracy >= Fraction(92, 100), c["note"]


def test_training_loss_falls_over_the_run(learnability_run):
    losses = np.array(learnability_run["report"].losses)
    tenth = len(losses) // 10
    assert losses[-tenth:].mean() < losses[:tenth].mean()


# ----------------------------------------------------------- 4 merge monotone


def _quick_trained_matrices(rng):
    out = []
    for seed in range(3):
        ds = generate_dataset(GenSpec(n_samples=400, seed=100 + seed))
        std, _ = standardize_fit(ds)
        config = TrainConfig(epochs=5, seed=seed)
        result = train(init_model(config.topology(6), TEST1.classes, seed), std, config)
        out.append(confusion_matrix(result.model, std))
    return out


def test_criterion_4_merge_monotonicity(learnability_run):
    rng = np.random.default_rng(4)
    with criterion(4, "merging never increases overall error", 5.0) as c:
        trained = [learnability_run["test_matrix"]] + _quick_trained_matrices(rng)
        randoms = [ConfusionMatrix(TEST1.classes, rng.integers(0, int(rng.integers(1, 1000)), size=(6, 6)))
                   for _ in range(1000)]
        checked = 0
        for cm in randoms + trained:
            for target in (TEST2, TEST3):
                merged = merge_confusion(cm, target)
                assert merged.total == cm.total
                assert merged.error <= cm.error
                checked += 1
        c["note"] = f"{checked} merges ({len(randoms)} random, {len(trained)} trained matrices)"


# ------------------------------------------------------- 5 splits and folds


def test_criterion_5_split_and_fold_properties():
    rng = np.random.default_rng(5)
    with criterion(5, "stratified split and 10-fold properties, 100 datasets", 10.0) as c:
        sizes = []
        for _ in range(100):
            n = int(rng.integers(10, 600))
            k = int(rng.integers(1, 7))
            classes = list(rng.choice(TEST1.classes, size=k, replace=False))
            ds = random_dataset(rng, n, classes=classes)
            labels = ds.labels
            spec = SplitSpec(seed=int(rng.integers(0, 2**63)))
            parts = stratified_split_indices(labels, TEST1.classes, spec)

            joined = np.concatenate(parts)
            assert len(joined) == n and np.array_equal(np.sort(joined), np.arange(n))
            for cls in set(labels):
                n_c = int(np.sum(labels == cls))
                for part, frac in zip(parts, spec.fractions):
                    assert abs(int(np.sum(labels[part] == cls)) - frac * n_c) <= 1

            folds = stratified_fold_ids(labels, TEST1.classes, 10, int(rng.integers(0, 2**32)))
            assert folds.shape == (n,) and set(folds.tolist()) <= set(range(10))
            # One fold id per sample makes folds disjoint and exhaustive by construction;
            # balance is what needs checking.
            for cls in set(labels):
                per_fold = np.bincount(folds[labels == cls], minlength=10)
                assert per_fold.max() - per_fold.min() <= 1
            total = np.bincount(folds, minlength=10)
            assert total.max() - total.min() <= 1
            sizes.append(n)
        c["note"] = f"n from {min(sizes)} to {max(sizes)}"


# ------------------------------------------------------------ 6 determinism


def _cli(*args, cwd):
    proc = subprocess.run([sys.executable, "-m", "flowpat", *args], cwd=cwd, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return proc.stdout


def _pipeline(workdir):
    workdir.mkdir()
    _cli("gen-data", "--seed", "11", "--out", "data.csv", cwd=workdir)
    _cli("train", "--data", "data.csv", "--seed", "11", "--out", "model.txt", cwd=workdir)
    evaluation = _cli("evaluate", "--model", "model.txt", "--data", "data.csv", cwd=workdir)
    banner, _, body = evaluation.partition("\n")
    assert banner.startswith("flowpat ") and " evaluate, run at " in banner
    outputs = {name: (workdir / name).read_bytes()
               for name in ("data.csv", "model.txt", "split_manifest.csv", "validation_report.txt", "test_report.txt")}
    outputs["evaluate stdout"] = body.encode()
    return outputs


@pytest.mark.slow
def test_criterion_6_cli_determinism(tmp_path):
    with criterion(6, "two CLI pipeline runs are byte-identical", 600.0) as c:
        first = _pipeline(tmp_path / "run1")
        second = _pipeline(tmp_path / "run2")
        differing = [name for name in first if first[name] != second[name]]
        assert differing == [], f"differ: {differing}"
        c["note"] = f"{len(first)} artifacts compared, default 500 epochs"


# --------------------------------------------------------- 7 serialization


def test_criterion_7_serialization(tmp_path):
    rng = np.random.default_rng(7)
    with criterion(7, "serialize/deserialize fidelity, 100 models", 5.0) as c:
        for i in range(100):
            k = int(rng.integers(1, 7))
            depth = int(rng.integers(0, 4))
            sizes = [11] + [int(rng.integers(1, 26)) for _ in range(depth)] + [k]
            model = random_model(rng, sizes, classes=[f"class{j}" for j in range(k)])
            path = tmp_path / f"m{i}.txt"
            serialize(model, path)
            back = deserialize(path)
            assert back.topology == model.topology and back.classes == model.classes
            for a, b in zip([*model.weights, *model.biases], [*back.weights, *back.biases]):
                assert a.tobytes() == b.tobytes()
            X = rng.normal(size=(100, 11)) * 10
            assert np.array_equal(predict_index(model, X), predict_index(back, X))
        c["note"] = "bitwise parameters, identical predictions on 100 inputs each"


def test_default_topology_is_table_topology():
    assert MlpTopology.default(6).layer_sizes == (11, 25, 25, 25, 6)
