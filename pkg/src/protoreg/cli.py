"""Command-line interface: ``protoreg {fit,predict,evaluate,gram,report}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. Output files are written to a temporary file and renamed, so a
failing command leaves no partial output behind.
"""

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import report as rpt
from .archetypes import FitOptions
from .dataio import (atomic_write_text, distribution_block, dumps, load_gram, load_model,
                     load_schema, load_table, save_gram, save_model, stratified_folds, stratified_split)
from .exceptions import InvalidArgumentError, NumericalError, ParseError
from .gram import KernelSpec, gram_matrix
from .pipeline import UNSUPERVISED, Pipeline, evaluate, infer_kind, resolve_kernels

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4

DEFAULTS = {
    "seed": 0,
    "tol": 1e-7,
    "max_iter": 500,
    "report": "svg",
    "folds": 5,
}


class ConfigError(Exception):
    pass


def _common(p):
    p.add_argument("--config", help="JSON file of option defaults; flags override it")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--tol", type=float, help="relative objective change to stop at (default 1e-7)")
    p.add_argument("--max-iter", dest="max_iter", type=int, help="outer iteration cap (default 500)")


def _model_flags(p):
    p.add_argument("--k", type=int, action="append",
                   help="number of prototypes; repeat once per predictor block")
    p.add_argument("--lambda", dest="lam", type=float, action="append",
                   help="locality penalty; repeat once per predictor block")
    p.add_argument("--kernel", action="append",
                   help="kernel as family[:param]; repeat once per predictor block")
    p.add_argument("--response-kernel", dest="response_kernel", help="kernel for the response block")


def build_parser():
    parser = argparse.ArgumentParser(prog="protoreg",
                                     description="Prototypal analysis and regression.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model and write a model file")
    _common(p)
    _model_flags(p)
    p.add_argument("--data", help="training table (CSV)")
    p.add_argument("--schema", help="JSON schema mapping columns to blocks")
    p.add_argument("--kind", choices=["prototypal", "archetypal", "regression"],
                   help="default: regression when the schema has a response, else prototypal")
    p.add_argument("--train-frac", dest="train_frac", type=float,
                   help="fit on a stratified fraction of the rows; the rest is kept for evaluate")
    p.add_argument("--gram", action="append", metavar="BLOCK=PATH",
                   help="use a cached Gram matrix for a predictor block")
    p.add_argument("--out", help="model file to write")

    p = sub.add_parser("predict", help="predict new rows with a fitted model")
    _common(p)
    p.add_argument("--model", help="model file")
    p.add_argument("--data", help="table of new rows")
    p.add_argument("--schema", help="schema for the new rows (default: the training schema)")
    p.add_argument("--train-data", dest="train_data", help="override the training table location")
    p.add_argument("--out", help="CSV of predictions")

    p = sub.add_parser("evaluate", help="score a model, or grid-search (k, lambda) by cross-validation")
    _common(p)
    _model_flags(p)
    p.add_argument("--model", help="model file; without it a grid search is run")
    p.add_argument("--data", help="labeled table (default: rows held out at fit time)")
    p.add_argument("--schema", help="schema (default: the training schema)")
    p.add_argument("--train-data", dest="train_data", help="override the training table location")
    p.add_argument("--grid-k", dest="grid_k", type=int, action="append", help="k values to search")
    p.add_argument("--grid-lambda", dest="grid_lambda", type=float, action="append",
                   help="lambda values to search")
    p.add_argument("--folds", type=int, help="cross-validation folds (default 5)")
    p.add_argument("--out", help="JSON metrics file")

    p = sub.add_parser("gram", help="compute and cache a Gram matrix")
    _common(p)
    p.add_argument("--data", help="table (with --schema and --block)")
    p.add_argument("--schema")
    p.add_argument("--block", help="predictor or response block name")
    p.add_argument("--samples", help="long-format sample file (group_id,v1,...) instead of a table")
    p.add_argument("--kernel", action="append", help="kernel as family[:param]")
    p.add_argument("--out", help="Gram cache file")

    p = sub.add_parser("report", help="render a fitted model as SVG or CSV")
    _common(p)
    p.add_argument("--model", help="model file")
    p.add_argument("--report", choices=["svg", "csv"], help="output format (default svg)")
    p.add_argument("--data", help="rows to show in a ternary plot (default: training rows)")
    p.add_argument("--train-data", dest="train_data", help="override the training table location")
    p.add_argument("--out", help="output file")
    return parser


def merge_config(args):
    """Flags win over the config file, which wins over built-in defaults."""
    cfg = {}
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        if "lambda" in cfg:
            cfg["lam"] = cfg.pop("lambda")
    for key, value in vars(args).items():
        if value is None:
            if key in cfg:
                value = cfg[key]
            elif key in DEFAULTS:
                value = DEFAULTS[key]
        if key in ("k", "lam", "kernel", "grid_k", "grid_lambda") and value is not None \
                and not isinstance(value, list):
            value = [value]
        setattr(args, key, value)
    return args


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _options(args):
    return FitOptions(max_outer_iter=args.max_iter, tol=args.tol, seed=args.seed)


def _check_hyper(ks, lams):
    for k in ks or []:
        if k < 1:
            raise ConfigError(f"k must be at least 1, got {k}")
    for lam in lams or []:
        if not lam >= 0:
            raise ConfigError(f"lambda must be nonnegative, got {lam}")


def _labels_for_split(ds):
    if ds.response is not None and ds.response.kind == "onehot":
        return ds.response.labels()
    return np.zeros(ds.n, dtype=int)


def _categories(ds):
    return {b.name: b.categories for b in ds.blocks if b.kind == "onehot"}


# fit

def _load_grams(specs, ds, kernels, rows=None, n_full=None):
    if not specs:
        return None
    by_name = {}
    for item in specs:
        name, sep, path = item.partition("=")
        if not sep:
            raise ConfigError(f"--gram expects BLOCK=PATH, got {item!r}")
        by_name[name] = path
    unknown = set(by_name) - {b.name for b in ds.predictors}
    if unknown:
        raise ConfigError(f"--gram names unknown predictor blocks {sorted(unknown)}")
    grams = []
    for b, spec in zip(ds.predictors, kernels):
        if b.name not in by_name:
            grams.append(gram_matrix(b.items, spec))
            continue
        G, _ = load_gram(by_name[b.name])
        expected = ds.n if rows is None else n_full
        if G.shape[0] != expected:
            raise ParseError(f"cached Gram for {b.name!r} has {G.shape[0]} rows, data have {expected}")
        cached = G.provenance.get("kernel")
        if cached is not None and KernelSpec.from_dict(cached) != spec:
            raise ParseError(f"cached Gram for {b.name!r} used kernel {cached}, expected {spec.to_dict()}")
        grams.append(G if rows is None else G.entries[np.ix_(rows, rows)])
    return grams


def fit_report(pipe):
    lines = [f"kind: {pipe.kind}"]
    for l, (pm, b) in enumerate(zip(pipe.models, pipe.train.predictors)):
        lines.append(f"predictor {b.name}: k = {pm.k}, lambda = {pm.lam!r}, "
                     f"{len(pm.objective_trace)} iterations, objective {pm.objective!r}")
        lines.append("  objective trace: " + " ".join(f"{v:.10g}" for v in pm.objective_trace))
        for j in range(pm.k):
            col = pm.B[:, j]
            top = np.argsort(-col, kind="stable")[:5]
            cells = ", ".join(f"row {int(i)}: {col[i]:.4f}" for i in top if col[i] > 0)
            lines.append(f"  prototype {j} top weights: {cells}")
    if pipe.fit_trace:
        lines.append("response objective trace: " + " ".join(f"{v:.10g}" for v in pipe.fit_trace))
    if pipe.tau is not None:
        lines.append("importance tau: " + ", ".join(
            f"{b.name} = {t:.7f}" for b, t in zip(pipe.train.predictors, pipe.tau)))
    return "\n".join(lines) + "\n"


def _fit_pipeline(args, ds, schema, rows=None, n_full=None):
    kind = args.kind
    kind = infer_kind(ds, None if kind == "regression" and ds.response is None else kind)
    if args.lam is None and kind != "archetypal":
        raise ConfigError("missing required option: --lambda")
    kernels = resolve_kernels(ds.predictors, args.kernel, schema.get("predictors"))
    rk = None
    if ds.response is not None and kind not in UNSUPERVISED:
        rk = KernelSpec.parse(args.response_kernel or (schema.get("response") or {}).get("kernel")
                              or ("energy" if ds.response.kind == "distribution" else "linear"))
    grams = _load_grams(args.gram, ds, kernels, rows, n_full) if getattr(args, "gram", None) else None
    return Pipeline.fit(ds, kind=kind, k=args.k, lam=args.lam if kind != "archetypal" else None,
                        kernels=kernels, response_kernel=rk, opts=_options(args), grams=grams)


def cmd_fit(args):
    _require(args, "data", "schema", "k", "out")
    _check_hyper(args.k, args.lam)
    schema = load_schema(args.schema)
    full = load_table(args.data, schema)
    rows = None
    if args.train_frac is not None:
        rows, _ = stratified_split(_labels_for_split(full), args.train_frac, args.seed)
    ds = full.take(rows) if rows is not None else full
    pipe = _fit_pipeline(args, ds, schema, rows, full.n)
    extra = {
        "training": {
            "data": str(Path(args.data).resolve()),
            "schema": schema,
            "rows": None if rows is None else [int(r) for r in rows],
            "train_frac": args.train_frac,
            "seed": args.seed,
        },
    }
    save_model(args.out, pipe.to_document(extra))
    sys.stdout.write(fit_report(pipe))
    return 0


# predict / evaluate

def _load_pipeline(args):
    doc = load_model(args.model)
    training = doc.get("training")
    if not training:
        raise ParseError(f"{args.model} does not record its training data")
    path = getattr(args, "train_data", None) or training["data"]
    full = load_table(path, training["schema"])
    rows = training.get("rows")
    train = full.take(rows) if rows is not None else full
    return Pipeline.from_document(doc, train), doc, full


def _load_new(args, doc, full, with_response):
    schema = load_schema(args.schema) if args.schema else dict(doc["training"]["schema"])
    if not with_response:
        schema = dict(schema, response=None)
    return load_table(args.data, schema, categories=_categories(full))


def cmd_predict(args):
    _require(args, "model", "data", "out")
    pipe, doc, full = _load_pipeline(args)
    new = _load_new(args, doc, full, with_response=False)
    header, rows = pipe.predict_table(new)
    atomic_write_text(args.out, rpt.rows_to_csv(header, rows))
    return 0


def _held_out(doc, full):
    rows = doc["training"].get("rows")
    if rows is None:
        raise ConfigError("the model was fitted on all rows; pass --data to evaluate")
    test = np.setdiff1d(np.arange(full.n), np.asarray(rows, dtype=int))
    return full.take(test)


def cmd_evaluate(args):
    _require(args, "out")
    if args.model is None:
        return grid_search(args)
    pipe, doc, full = _load_pipeline(args)
    test = _load_new(args, doc, full, with_response=True) if args.data else _held_out(doc, full)
    metrics = evaluate(pipe, test)
    atomic_write_text(args.out, dumps(metrics))
    sys.stdout.write(_metrics_text(metrics))
    return 0


def _metrics_text(m):
    if "accuracy" in m:
        lines = [f"accuracy: {m['accuracy']:.4f} on {m['n']} rows", "confusion (rows = actual):"]
        width = max(len(str(c)) for c in m["classes"])
        for c, row in zip(m["classes"], m["confusion"]):
            lines.append(f"  {str(c):>{width}} " + " ".join(f"{v:4d}" for v in row))
        return "\n".join(lines) + "\n"
    return f"rmse: {m['rmse']:.6g} on {m['n']} rows\n"


def grid_search(args):
    _require(args, "data", "schema", "grid_k", "grid_lambda")
    _check_hyper(args.grid_k, args.grid_lambda)
    schema = load_schema(args.schema)
    ds = load_table(args.data, schema)
    if ds.response is None:
        raise ConfigError("grid search needs a response block")
    folds = stratified_folds(_labels_for_split(ds), args.folds, args.seed)
    kernels = resolve_kernels(ds.predictors, args.kernel, schema.get("predictors"))
    all_rows = np.arange(ds.n)
    cells = []
    for k in args.grid_k:
        for lam in args.grid_lambda:
            scores = []
            for test_rows in folds:
                train = ds.take(np.setdiff1d(all_rows, test_rows))
                pipe = Pipeline.fit(train, k=[k], lam=[lam], kernels=kernels, opts=_options(args))
                scores.append(evaluate(pipe, ds.take(test_rows)))
            key = "accuracy" if "accuracy" in scores[0] else "rmse"
            cells.append({"k": k, "lambda": lam, key: float(np.mean([s[key] for s in scores]))})
    key = "accuracy" if "accuracy" in cells[0] else "rmse"
    sign = -1.0 if key == "accuracy" else 1.0
    best = min(cells, key=lambda c: sign * c[key])
    result = {"metric": key, "folds": args.folds, "cells": cells, "best": best}
    atomic_write_text(args.out, dumps(result))
    for c in cells:
        sys.stdout.write(f"k = {c['k']}, lambda = {c['lambda']!r}: {key} {c[key]:.4f}\n")
    sys.stdout.write(f"best: k = {best['k']}, lambda = {best['lambda']!r}\n")
    return 0


# gram

def cmd_gram(args):
    _require(args, "out")
    spec = KernelSpec.parse(args.kernel[-1] if args.kernel else None)
    if args.samples:
        _, block = distribution_block(args.samples)
        if not args.kernel:
            spec = KernelSpec("energy")
    else:
        _require(args, "data", "schema", "block")
        ds = load_table(args.data, load_schema(args.schema))
        found = [b for b in ds.blocks if b.name == args.block]
        if not found:
            raise ConfigError(f"no block named {args.block!r}")
        block = found[0]
        if not args.kernel and block.kind == "distribution":
            spec = KernelSpec("energy")
    if (block.kind == "distribution") != (spec.family == "energy"):
        raise ConfigError("the energy kernel is for distribution blocks only, and required there")
    save_gram(args.out, gram_matrix(block.items, spec))
    return 0


# report

def cmd_report(args):
    _require(args, "model", "out")
    pipe, doc, full = _load_pipeline(args)
    fmt = args.report
    train = pipe.train
    block = train.predictors[0]
    resp = train.response
    is_vec = block.kind == "vector"

    if pipe.kind in UNSUPERVISED and is_vec and block.data.shape[1] == 2 and len(train.predictors) == 1:
        pm = pipe.models[0]
        U = pm.B.T @ block.data
        text = rpt.prototypes_svg(block.data, U, pm.A, title=f"{pipe.kind} analysis, k = {pm.k}") \
            if fmt == "svg" else rpt.prototypes_csv(U, pm.A)
    elif (pipe.kind == "simple_regression" and is_vec and block.data.shape[1] == 1
          and resp.kind == "vector" and resp.data.shape[1] == 1):
        x = block.data[:, 0]
        grid = np.linspace(x.min(), x.max(), rpt.GRID_POINTS)
        new = type(train)([type(block)("vector", block.name, grid[:, None])])
        fitted = (pipe.weights(new).T @ resp.data)[:, 0]
        pm = pipe.models[0]
        if fmt == "svg":
            text = rpt.regression_svg(x, resp.data[:, 0], grid, fitted, pm.B.T @ x,
                                      pipe.Cs[0].T @ resp.data[:, 0],
                                      title=f"prototypal regression, k = {pm.k}")
        else:
            text = rpt.curve_csv(grid, fitted)
    elif pipe.kind not in UNSUPERVISED and resp.kind == "onehot" and len(resp.categories) == 3:
        rows = _load_new(args, doc, full, with_response=True) if args.data else train
        W = pipe.weights(rows)
        P = (resp.data.T @ W).T
        labels = rows.response.labels()
        text = rpt.ternary_svg(P, labels, resp.categories) if fmt == "svg" \
            else rpt.probabilities_csv(P, labels)
    else:
        raise ConfigError("unsupported model for a report; supported: " + "; ".join(rpt.SUPPORTED))
    atomic_write_text(args.out, text)
    return 0


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "evaluate": cmd_evaluate, "gram": cmd_gram,
            "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        merge_config(args)
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = _warn_to_stderr
            return COMMANDS[args.command](args)
    except (ConfigError, InvalidArgumentError) as exc:
        return _fail(EXIT_CONFIG, exc)
    except (ParseError, OSError) as exc:
        return _fail(EXIT_DATA, exc)
    except NumericalError as exc:
        return _fail(EXIT_NUMERICAL, exc)


def _warn_to_stderr(message, category, filename, lineno, file=None, line=None):
    sys.stderr.write(f"protoreg: warning: {message}\n")


def _fail(code, exc):
    sys.stderr.write(f"protoreg: error: {exc}\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
