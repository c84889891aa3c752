"""``flowpat`` command-line interface.

Exit codes: 0 success, 1 usage, 2 I/O, 3 data validation, 4 training divergence.
"""
from __future__ import annotations

import argparse
import datetime
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    TEST1,
    TEST2,
    TEST3,
    Dataset,
    SplitSpec,
    get_scheme,
    load_csv,
    load_features_csv,
    merge_labels,
    save_csv,
    scheme_for_classes,
    scheme_map,
    standardize_apply,
    standardize_fit,
    stratified_split_indices,
)
from .errors import DataError, FlowpatError, TrainingDivergedError
from .evaluation import class_report, confusion_matrix, merge_confusion, render_table
from .mlp import init_model, load_model_file, predict_labels, serialize
from .synth import GenSpec, generate_dataset
from .training import TrainConfig, k_fold_cv, load_config, train

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3, 4

log = logging.getLogger("flowpat")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _load_for_scheme(path, scheme):
    """Load labelled data and relabel it under ``scheme``.

    Files may carry base labels or labels of any scheme coarser-or-equal to
    the target; the first scheme that parses and can be merged wins.
    """
    first_error = None
    for source in (TEST1, TEST2, TEST3):
        try:
            scheme_map(source, scheme)
        except DataError:
            continue
        try:
            ds = load_csv(path, source)
        except DataError as exc:
            first_error = first_error or exc
            continue
        return merge_labels(ds, scheme)
    raise first_error


def _config(args):
    config = load_config(args.config) if args.config else TrainConfig()
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "nfolds", None) is not None:
        config = replace(config, nfolds=args.nfolds)
    return config


def _body_header(**items):
    return "".join(f"# {key}: {value}\n" for key, value in items.items() if value is not None)


def _table(cm):
    return render_table(class_report(cm), cm)


def cmd_gen_data(args):
    spec = GenSpec(n_samples=args.n, seed=args.seed, noise_fraction=args.noise)
    ds = generate_dataset(spec)
    save_csv(ds, args.out)
    counts = ", ".join(f"{c}={n}" for c, n in ds.class_counts().items())
    print(f"wrote {len(ds)} samples to {args.out} ({counts})")


def cmd_train(args):
    scheme = get_scheme(args.test_scheme)
    config = _config(args)
    ds = _load_for_scheme(args.data, scheme)
    out = Path(args.out)
    report_dir = Path(args.report_dir) if args.report_dir else out.parent
    report_dir.mkdir(parents=True, exist_ok=True)

    split = stratified_split_indices(ds.labels, scheme.classes, SplitSpec(seed=config.seed))
    train_set, params = standardize_fit(ds.subset(split[0]))
    val_set = standardize_apply(ds.subset(split[1]), params)
    test_set = standardize_apply(ds.subset(split[2]), params)

    topology = config.topology(scheme.n_classes)
    model = init_model(topology, scheme.classes, config.seed)
    result = train(model, train_set, config, val_set if len(val_set) else None)
    serialize(result.model, out, params)

    assignment = np.empty(len(ds), dtype=object)
    for name, idx in zip(("train", "validation", "test"), split):
        assignment[idx] = name
    manifest = "index,split\n" + "".join(f"{i},{s}\n" for i, s in enumerate(assignment))
    (report_dir / "split_manifest.csv").write_text(manifest, encoding="utf-8")

    summary = []
    for name, part in (("validation", val_set), ("test", test_set)):
        cm = confusion_matrix(result.model, part)
        body = _body_header(
            report=f"{name} set",
            scheme=scheme.name,
            seed=config.seed,
            data=ds.provenance,
            epochs=config.epochs,
            final_training_loss=repr(result.final_loss),
        ) + _table(cm)
        (report_dir / f"{name}_report.txt").write_text(body, encoding="utf-8")
        summary.append(f"{name} accuracy {float(cm.accuracy):.4f} ({cm.correct}/{cm.total})")
    print(f"trained {scheme.name} model -> {out}; " + "; ".join(summary))


def cmd_evaluate(args):
    model, params = load_model_file(args.model)
    scheme = scheme_for_classes(model.classes)
    ds = _load_for_scheme(args.data, scheme)
    if params is not None:
        ds = standardize_apply(ds, params)
    cm = confusion_matrix(model, ds)
    shown = scheme.name
    if args.merge:
        target = get_scheme(args.merge)
        cm = merge_confusion(cm, target)
        shown = f"{target.name} (merged from {scheme.name})"
    if not args.no_banner:
        stamp = datetime.datetime.now().isoformat(timespec="seconds")
        print(f"flowpat {__version__} evaluate, run at {stamp}")
    sys.stdout.write(
        _body_header(model=Path(args.model).name, data=ds.provenance, scheme=shown) + _table(cm)
    )


def cmd_crossval(args):
    scheme = get_scheme(args.test_scheme)
    config = _config(args)
    ds = _load_for_scheme(args.data, scheme)
    result = k_fold_cv(ds, config.topology(scheme.n_classes), config)
    out = [_body_header(scheme=scheme.name, seed=config.seed, nfolds=config.nfolds, data=ds.provenance)]
    for i, cm in enumerate(result.fold_matrices):
        out.append(f"\nfold {i + 1}/{config.nfolds}\n" + _table(cm))
    out.append("\npooled\n" + _table(result.pooled))
    sys.stdout.write("".join(out))


def cmd_predict(args):
    model, params = load_model_file(args.model)
    X = load_features_csv(args.data)
    inputs = params.apply(X) if params is not None else X
    labels = predict_labels(model, inputs)
    save_csv(Dataset(X, labels, scheme_for_classes(model.classes)), args.out, comment="")
    print(f"wrote {len(labels)} predictions to {args.out}")


def build_parser():
    parser = _Parser(prog="flowpat", description="Two-phase flow-pattern MLP toolkit")
    parser.add_argument("--version", action="version", version=f"flowpat {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a synthetic labelled dataset")
    p.add_argument("--n", type=int, default=5676)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0, help="fraction of labels redrawn at random")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="60/20/20 split, standardize, train and report")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--test-scheme", default="Test1", help="Test1, Test2 or Test3")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--report-dir", help="defaults to the model file's directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="print the confusion table of a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--merge", help="aggregate the matrix onto a coarser scheme")
    p.add_argument("--no-banner", action="store_true", help="omit the timestamp line")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("crossval", help="stratified k-fold cross-validation")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--test-scheme", default="Test1")
    p.add_argument("--nfolds", type=int, help="overrides the config nfolds")
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("predict", help="label an unlabelled feature file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)
    return parser


def run(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except TrainingDivergedError as exc:
        print(f"flowpat: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"flowpat: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "), file=sys.stderr)
        return EXIT_IO
    except FlowpatError as exc:
        print(f"flowpat: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(run())
