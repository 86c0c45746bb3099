"""Reading tables and sample sets, splitting rows, and persisting models.

A *schema* maps table columns to feature blocks::

    {
      "predictors": [
        {"name": "sepal", "columns": ["sepal_length", "sepal_width"]},
        {"name": "petal", "columns": ["petal_length", "petal_width"], "kernel": "gaussian:0.5"},
        {"name": "signal", "kind": "distribution", "key": "trial", "samples": "signal.csv"}
      ],
      "response": {"name": "species", "columns": ["species"], "kind": "onehot"}
    }

``kind`` defaults to ``"vector"``. A distribution block pulls sample sets from
a long-format file (``group_id,v1[,v2,...]``) and matches them to table rows
through the ``key`` column. Relative sample paths resolve against the schema
file's directory.
"""

import csv
import hashlib
import json
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InvalidArgumentError, ParseError
from .gram import EmpiricalDistribution, GramMatrix
from .rng import SplitMix64

SCHEMA_VERSION = 1
MODEL_KINDS = ("prototypal", "archetypal", "simple_regression", "multiple_regression")
BLOCK_KINDS = ("vector", "onehot", "distribution")


@dataclass
class FeatureBlock:
    """One predictor or the response.

    ``data`` is an ``(n, d)`` float array for vector blocks, an ``(n, c)``
    indicator array for one-hot blocks (``categories`` names the columns) and
    a list of :class:`EmpiricalDistribution` for distribution blocks.
    """

    kind: str
    name: str
    data: object
    categories: list = None
    columns: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in BLOCK_KINDS:
            raise InvalidArgumentError(f"unknown block kind {self.kind!r}")
        if self.kind == "onehot":
            data = np.asarray(self.data, dtype=float)
            if data.ndim != 2 or not np.all(data.sum(axis=1) == 1) or not np.all((data == 0) | (data == 1)):
                raise InvalidArgumentError(f"block {self.name!r}: one-hot rows need exactly one 1")
            self.data = data
        elif self.kind == "vector":
            data = np.asarray(self.data, dtype=float)
            if data.ndim == 1:
                data = data[:, None]
            if not np.all(np.isfinite(data)):
                raise InvalidArgumentError(f"block {self.name!r} has non-finite entries")
            self.data = data

    def __len__(self):
        return len(self.data)

    @property
    def items(self):
        """What goes into :func:`~protoreg.gram.gram_matrix`."""
        return self.data

    def take(self, rows):
        rows = np.asarray(rows, dtype=int)
        if self.kind == "distribution":
            data = [self.data[i] for i in rows]
        else:
            data = self.data[rows]
        return FeatureBlock(self.kind, self.name, data, self.categories, list(self.columns))

    def labels(self):
        if self.kind != "onehot":
            raise InvalidArgumentError(f"block {self.name!r} is not categorical")
        return np.argmax(self.data, axis=1)


@dataclass
class Dataset:
    predictors: list
    response: FeatureBlock = None

    def __post_init__(self):
        blocks = self.blocks
        if not self.predictors:
            raise InvalidArgumentError("a dataset needs at least one predictor block")
        names = [b.name for b in blocks]
        if len(set(names)) != len(names):
            raise InvalidArgumentError(f"block names must be unique, got {names}")
        sizes = {len(b) for b in blocks}
        if len(sizes) != 1:
            raise InvalidArgumentError(f"blocks disagree on the row count: {sorted(sizes)}")

    @property
    def blocks(self):
        return self.predictors + ([self.response] if self.response is not None else [])

    @property
    def n(self):
        return len(self.predictors[0])

    def take(self, rows):
        resp = None if self.response is None else self.response.take(rows)
        return Dataset([b.take(rows) for b in self.predictors], resp)


def _read_csv(path):
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise ParseError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise ParseError(f"{path} has a header but no data rows")
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells, got {len(row)}", row=r)
    return header, body


def _column_index(header, name, path):
    try:
        return header.index(name)
    except ValueError:
        raise ParseError(f"{path}: missing column {name!r}", column=name) from None


def _parse_float(cell, row, column):
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"non-numeric value {cell!r}", row=row, column=column) from None
    if not np.isfinite(v):
        raise ParseError(f"non-finite value {cell!r}", row=row, column=column)
    return v


def load_schema(path):
    """Read a JSON schema file; relative sample paths become absolute."""
    path = Path(path)
    try:
        schema = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read schema {path}: {exc}") from exc
    for spec in schema.get("predictors", []) + ([schema["response"]] if schema.get("response") else []):
        if "samples" in spec and not os.path.isabs(spec["samples"]):
            spec["samples"] = str((path.parent / spec["samples"]).resolve())
    return schema


def _block_specs(schema):
    if not isinstance(schema, dict) or not schema.get("predictors"):
        raise InvalidArgumentError("schema needs a nonempty 'predictors' list")
    return schema["predictors"], schema.get("response")


def load_table(path, schema, categories=None):
    """Parse a comma-separated table into a :class:`Dataset` following ``schema``.

    Categorical columns become one-hot blocks whose category order is first
    appearance in the file, unless ``categories`` (block name -> list) fixes
    it, as at prediction time, where an unseen category is an error.
    """
    header, body = _read_csv(path)
    pred_specs, resp_spec = _block_specs(schema)
    categories = categories or {}

    def build(spec):
        name = spec["name"]
        kind = spec.get("kind", "vector")
        if kind == "distribution":
            key_col = spec.get("key", name)
            ci = _column_index(header, key_col, path)
            keys = [row[ci].strip() for row in body]
            groups = load_grouped_samples(spec["samples"])
            missing = [(r, k) for r, k in enumerate(keys, start=2) if k not in groups]
            if missing:
                r, k = missing[0]
                raise ParseError(f"no samples for group {k!r}", row=r, column=key_col)
            return FeatureBlock("distribution", name, [groups[k] for k in keys], columns=[key_col])
        cols = spec.get("columns") or [name]
        idx = [_column_index(header, c, path) for c in cols]
        if kind == "onehot":
            if len(cols) != 1:
                raise InvalidArgumentError(f"one-hot block {name!r} must come from one column")
            values = [row[idx[0]].strip() for row in body]
            known = categories.get(name)
            cats = list(known) if known is not None else list(dict.fromkeys(values))
            pos = {c: i for i, c in enumerate(cats)}
            data = np.zeros((len(values), len(cats)))
            for r, v in enumerate(values):
                if v not in pos:
                    raise ParseError(f"unknown category {v!r}", row=r + 2, column=cols[0])
                data[r, pos[v]] = 1.0
            return FeatureBlock("onehot", name, data, categories=cats, columns=cols)
        if kind != "vector":
            raise InvalidArgumentError(f"unknown block kind {kind!r}")
        data = np.array([[_parse_float(row[i], r, c) for i, c in zip(idx, cols)]
                         for r, row in enumerate(body, start=2)])
        return FeatureBlock("vector", name, data, columns=cols)

    predictors = [build(s) for s in pred_specs]
    response = build(resp_spec) if resp_spec else None
    return Dataset(predictors, response)


def load_grouped_samples(path):
    """Read a long-format sample file into ``{group_id: EmpiricalDistribution}``.

    The header is ``group_id,v1[,v2,...]``; rows may come in any order. The
    dict preserves first-appearance order of the groups.
    """
    header, body = _read_csv(path)
    if len(header) < 2:
        raise ParseError(f"{path}: need a group column and at least one value column")
    groups = {}
    for r, row in enumerate(body, start=2):
        vals = [_parse_float(cell, r, header[c + 1]) for c, cell in enumerate(row[1:])]
        groups.setdefault(row[0].strip(), []).append(vals)
    return {g: EmpiricalDistribution(np.array(v)) for g, v in groups.items()}


def distribution_block(path, name="samples"):
    """All groups of a long-format file as one distribution block, plus their ids."""
    groups = load_grouped_samples(path)
    return list(groups), FeatureBlock("distribution", name, list(groups.values()))


def _round_half_up(x):
    return int(np.floor(x + 0.5))


def stratified_split(labels, train_fraction, seed=0):
    """Per-class random split; returns sorted ``(train, test)`` index arrays.

    Each class contributes ``round(train_fraction * size)`` rows (halves round
    up) to the training side. Classes are visited in sorted label order and
    shuffled with one :class:`~protoreg.rng.SplitMix64` stream seeded by ``seed``.
    """
    labels = np.asarray(labels)
    if not 0 < train_fraction < 1:
        raise InvalidArgumentError("train_fraction must lie strictly between 0 and 1")
    rng = SplitMix64(seed)
    train, test = [], []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c).tolist()
        if len(members) < 2:
            raise InvalidArgumentError(f"class {c!r} has fewer than 2 members")
        rng.shuffle(members)
        cut = _round_half_up(train_fraction * len(members))
        train += members[:cut]
        test += members[cut:]
    return np.array(sorted(train), dtype=int), np.array(sorted(test), dtype=int)


def stratified_folds(labels, n_folds, seed=0):
    """``n_folds`` disjoint test folds, each class dealt round-robin after a shuffle."""
    labels = np.asarray(labels)
    if n_folds < 2:
        raise InvalidArgumentError("need at least 2 folds")
    rng = SplitMix64(seed)
    folds = [[] for _ in range(n_folds)]
    start = 0
    for c in np.unique(labels):
        members = rng.shuffle(np.flatnonzero(labels == c).tolist())
        for i, row in enumerate(members):
            folds[(start + i) % n_folds].append(row)
        start += len(members)
    return [np.array(sorted(f), dtype=int) for f in folds]


def fingerprint(blocks):
    """Row count and SHA-256 content hash of a list of feature blocks."""
    h = hashlib.sha256()
    n = None
    for b in blocks:
        h.update(f"{b.kind}:{b.name}:".encode())
        if b.kind == "distribution":
            for d in b.data:
                h.update(np.ascontiguousarray(d.samples, dtype="<f8").tobytes())
                h.update(b"|")
        else:
            arr = np.ascontiguousarray(b.data, dtype="<f8")
            h.update(str(arr.shape).encode())
            h.update(arr.tobytes())
        n = len(b)
    return {"rows": int(n or 0), "hash": h.hexdigest()}


def check_fingerprint(expected, blocks):
    """Warn (do not fail) when training data differ from what a model was fitted on."""
    got = fingerprint(blocks)
    if got != expected:
        warnings.warn(f"training data fingerprint {got} differs from the model's {expected}; "
                      "predictions may be meaningless", stacklevel=2)
        return False
    return True


def dumps(doc):
    """Canonical JSON text; floats use the shortest repr that round-trips."""
    return json.dumps(doc, indent=1, ensure_ascii=False) + "\n"


def atomic_write_text(path, text):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _matrix(a):
    return np.asarray(a, dtype=float).tolist()


def _floats(xs):
    return [float(x) for x in xs]


def prototype_model_to_dict(pm):
    return {
        "A": _matrix(pm.A),
        "B": _matrix(pm.B),
        "BGB": _matrix(pm.BGB),
        "lambda": float(pm.lam),
        "objective_trace": _floats(pm.objective_trace),
        "init_indices": [int(i) for i in pm.init_indices],
    }


def prototype_model_from_dict(d):
    from .archetypes import PrototypeModel

    return PrototypeModel(A=np.array(d["A"], dtype=float), B=np.array(d["B"], dtype=float),
                          lam=float(d["lambda"]), BGB=np.array(d["BGB"], dtype=float),
                          objective_trace=list(d["objective_trace"]),
                          init_indices=list(d["init_indices"]))


def model_document(kind, models, kernel_specs, fingerprint_, Cs=None, tau=None, fit_trace=None,
                   response_kernel=None, extra=None):
    """Assemble the model file document."""
    if kind not in MODEL_KINDS:
        raise InvalidArgumentError(f"unknown model kind {kind!r}")
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "kernel_specs": [s.to_dict() for s in kernel_specs],
        "lambda": [float(pm.lam) for pm in models],
        "k": [int(pm.k) for pm in models],
        "models": [prototype_model_to_dict(pm) for pm in models],
        "C": None if Cs is None else [_matrix(C) for C in Cs],
        "tau": None if tau is None else _floats(tau),
        "fit_trace": None if fit_trace is None else _floats(fit_trace),
        "response_kernel": None if response_kernel is None else response_kernel.to_dict(),
        "fingerprint": fingerprint_,
    }
    if extra:
        doc.update(extra)
    return doc


_REQUIRED = ("schema_version", "kind", "kernel_specs", "lambda", "k", "models", "tau", "fingerprint")


def parse_model_document(text, source="model"):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source} is not valid JSON: {exc.msg}", row=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{source} must hold a JSON object")
    missing = [key for key in _REQUIRED if key not in doc]
    if missing:
        raise ParseError(f"{source} lacks keys {missing}")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ParseError(f"{source} has schema version {doc['schema_version']}, expected {SCHEMA_VERSION}")
    if doc["kind"] not in MODEL_KINDS:
        raise ParseError(f"{source} has unknown kind {doc['kind']!r}")
    return doc


def save_model(path, doc):
    atomic_write_text(path, dumps(doc))


def load_model(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_model_document(text, str(path))


def save_gram(path, G, fingerprint_=None):
    G = G if isinstance(G, GramMatrix) else GramMatrix(G)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "gram",
        "provenance": G.provenance,
        "gram": _matrix(G.entries),
        "fingerprint": fingerprint_,
    }
    atomic_write_text(path, dumps(doc))


def load_gram(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path} is not valid JSON: {exc.msg}", row=exc.lineno) from exc
    if not isinstance(doc, dict) or doc.get("kind") != "gram" or "gram" not in doc:
        raise ParseError(f"{path} is not a Gram cache file")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ParseError(f"{path} has schema version {doc.get('schema_version')}")
    return GramMatrix(np.array(doc["gram"], dtype=float), doc.get("provenance") or {}), doc
