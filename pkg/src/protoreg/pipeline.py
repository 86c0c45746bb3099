"""Fitting, predicting and persisting models on :class:`~protoreg.dataio.Dataset` objects."""

import numpy as np

from .archetypes import FitOptions, encode, fit_prototypal
from .dataio import check_fingerprint, fingerprint, model_document, prototype_model_from_dict
from .exceptions import InvalidArgumentError, ParseError
from .gram import KernelSpec, cross_gram, gram_matrix
from .regression import (MultipleRegressionModel, SimpleRegressionModel, fit_multiple, fit_simple,
                         predict_multiple, predict_simple)

UNSUPERVISED = ("prototypal", "archetypal")


def default_kernel(block):
    return KernelSpec("energy") if block.kind == "distribution" else KernelSpec()


def resolve_kernels(blocks, overrides=None, schema_specs=None):
    """Kernel per block: explicit override, else the schema's ``kernel`` entry, else the default."""
    overrides = list(overrides or [])
    if overrides and len(overrides) not in (1, len(blocks)):
        raise InvalidArgumentError(f"got {len(overrides)} kernels for {len(blocks)} predictor blocks")
    if len(overrides) == 1:
        overrides = overrides * len(blocks)
    out = []
    for i, b in enumerate(blocks):
        if overrides:
            spec = KernelSpec.parse(overrides[i])
        elif schema_specs and schema_specs[i].get("kernel"):
            spec = KernelSpec.parse(schema_specs[i]["kernel"])
        else:
            spec = default_kernel(b)
        if (b.kind == "distribution") != (spec.family == "energy"):
            raise InvalidArgumentError(
                f"block {b.name!r}: the energy kernel is for distribution blocks only, and required there")
        out.append(spec)
    return out


def infer_kind(dataset, kind=None):
    if kind in UNSUPERVISED:
        return kind
    if kind not in (None, "regression", "simple_regression", "multiple_regression"):
        raise InvalidArgumentError(f"unknown model kind {kind!r}")
    if dataset.response is None:
        if kind is not None:
            raise InvalidArgumentError("regression needs a response block in the schema")
        return "prototypal"
    if kind == "multiple_regression" or len(dataset.predictors) > 1:
        return "multiple_regression"
    return "simple_regression"


class Pipeline:
    """A fitted model together with the training rows it refers to."""

    def __init__(self, kind, kernels, models, train, response_kernel=None, Cs=None, tau=None,
                 fit_trace=None):
        self.kind = kind
        self.kernels = kernels
        self.models = models
        self.train = train
        self.response_kernel = response_kernel
        self.Cs = Cs
        self.tau = tau
        self.fit_trace = fit_trace

    @classmethod
    def fit(cls, dataset, kind=None, k=None, lam=None, kernels=None, response_kernel=None,
            opts=None, grams=None):
        """Fit on every row of ``dataset``.

        ``k`` and ``lam`` are lists with one entry per predictor block (a
        single entry is broadcast). ``grams`` optionally supplies precomputed
        predictor Gram matrices.
        """
        opts = opts or FitOptions()
        kind = infer_kind(dataset, kind)
        blocks = dataset.predictors
        m = len(blocks)
        if kind in UNSUPERVISED and m != 1:
            raise InvalidArgumentError(f"{kind} analysis takes exactly one predictor block, got {m}")
        ks = _broadcast(k, m, "k")
        lams = [0.0] * m if kind == "archetypal" else _broadcast(lam, m, "lambda")
        kernels = kernels or [default_kernel(b) for b in blocks]
        Gx = grams or [gram_matrix(b.items, s) for b, s in zip(blocks, kernels)]
        if kind in UNSUPERVISED:
            pm = fit_prototypal(Gx[0], ks[0], lams[0], opts)
            return cls(kind, kernels, [pm], dataset)
        response_kernel = response_kernel or default_kernel(dataset.response)
        Gy = gram_matrix(dataset.response.items, response_kernel)
        if kind == "simple_regression":
            sm = fit_simple(Gx[0], Gy, ks[0], lams[0], opts)
            return cls(kind, kernels, [sm.x_model], dataset, response_kernel, [sm.C], None,
                       sm.objective_trace)
        mm = fit_multiple(Gx, Gy, ks, lams, opts)
        return cls(kind, kernels, mm.models, dataset, response_kernel, mm.Cs, mm.tau, mm.fit_trace)

    def _inner_products(self, new):
        if len(new.predictors) != len(self.train.predictors):
            raise ParseError(f"expected {len(self.train.predictors)} predictor blocks, "
                             f"got {len(new.predictors)}")
        g0, g00 = [], []
        for a, b, spec in zip(new.predictors, self.train.predictors, self.kernels):
            if a.kind != b.kind or a.name != b.name:
                raise ParseError(f"predictor block {a.name!r} ({a.kind}) does not match "
                                 f"the model's {b.name!r} ({b.kind})")
            if a.kind != "distribution" and a.data.shape[1] != b.data.shape[1]:
                raise ParseError(f"block {a.name!r} has {a.data.shape[1]} columns, "
                                 f"the model expects {b.data.shape[1]}")
            K, diag = cross_gram(a.items, b.items, spec)
            g0.append(K.T)
            g00.append(diag)
        return g0, g00

    def coordinates(self, new):
        """Barycentric coordinates of new rows, shape (k, m) (unsupervised kinds)."""
        g0, g00 = self._inner_products(new)
        return encode(self.models[0], g0[0], g00[0])

    def weights(self, new):
        """Training-response weights for new rows, shape (n_train, m)."""
        if self.kind in UNSUPERVISED:
            raise InvalidArgumentError(f"a {self.kind} model has no response")
        g0, g00 = self._inner_products(new)
        if self.kind == "simple_regression":
            return predict_simple(SimpleRegressionModel(self.models[0], self.Cs[0]), g0[0], g00[0])
        mm = MultipleRegressionModel(list(zip(self.models, self.Cs)), self.tau)
        return predict_multiple(mm, g0, g00)

    def predict_table(self, new):
        """Prediction rows as ``(header, rows)``: coordinates, class probabilities or values."""
        if self.kind in UNSUPERVISED:
            W = self.coordinates(new)
            return [f"a{j}" for j in range(W.shape[0])], W.T.tolist()
        W = self.weights(new)
        resp = self.train.response
        if resp.kind == "onehot":
            P = (resp.data.T @ W).T
            labels = [resp.categories[i] for i in np.argmax(P, axis=1)]
            header = [f"p_{c}" for c in resp.categories] + [resp.name]
            return header, [list(p) + [lab] for p, lab in zip(P.tolist(), labels)]
        if resp.kind == "vector":
            Y = (W.T @ resp.data)
            return list(resp.columns), Y.tolist()
        return [f"w{i}" for i in range(W.shape[0])], W.T.tolist()

    def to_document(self, extra=None):
        pieces = self.train.predictors + ([self.train.response] if self.train.response else [])
        return model_document(self.kind, self.models, self.kernels, fingerprint(pieces), Cs=self.Cs,
                              tau=self.tau, fit_trace=self.fit_trace,
                              response_kernel=self.response_kernel, extra=extra)

    @classmethod
    def from_document(cls, doc, train):
        """Rebuild from a model document and the (reloaded) training rows."""
        pieces = train.predictors + ([train.response] if train.response else [])
        check_fingerprint(doc["fingerprint"], pieces)
        models = [prototype_model_from_dict(d) for d in doc["models"]]
        if any(pm.n != train.n for pm in models):
            raise ParseError(f"model was fitted on {models[0].n} rows, training data has {train.n}")
        kernels = [KernelSpec.from_dict(d) for d in doc["kernel_specs"]]
        Cs = None if doc.get("C") is None else [np.array(C, dtype=float) for C in doc["C"]]
        tau = None if doc.get("tau") is None else np.array(doc["tau"], dtype=float)
        rk = doc.get("response_kernel")
        return cls(doc["kind"], kernels, models, train,
                   None if rk is None else KernelSpec.from_dict(rk), Cs, tau, doc.get("fit_trace"))


def _broadcast(values, m, name):
    if values is None:
        raise InvalidArgumentError(f"{name} is required")
    values = list(values) if isinstance(values, (list, tuple)) else [values]
    if len(values) == 1:
        values = values * m
    if len(values) != m:
        raise InvalidArgumentError(f"got {len(values)} {name} values for {m} predictor blocks")
    return values


def accuracy_and_confusion(true_codes, pred_codes, n_classes):
    C = np.zeros((n_classes, n_classes), dtype=int)
    for t, p in zip(true_codes, pred_codes):
        C[t, p] += 1
    return float(np.trace(C) / max(1, C.sum())), C


def evaluate(pipe, test):
    """Metrics of ``pipe`` on labeled rows ``test``: accuracy and confusion, or RMSE."""
    if pipe.kind in UNSUPERVISED:
        raise InvalidArgumentError("only regression models can be evaluated")
    if test.response is None:
        raise ParseError("evaluation data lack the response block")
    W = pipe.weights(test)
    resp = pipe.train.response
    if resp.kind == "onehot":
        P = (resp.data.T @ W).T
        acc, conf = accuracy_and_confusion(test.response.labels(), np.argmax(P, axis=1),
                                           len(resp.categories))
        return {"n": int(test.n), "accuracy": acc, "classes": list(resp.categories),
                "confusion": conf.tolist()}
    if resp.kind == "vector":
        Y = W.T @ resp.data
        rmse = float(np.sqrt(np.mean(np.sum((Y - test.response.data) ** 2, axis=1))))
        return {"n": int(test.n), "rmse": rmse}
    G = gram_matrix(resp.items, pipe.response_kernel).entries
    K, diag = cross_gram(test.response.items, resp.items, pipe.response_kernel)
    # ||y_t - sum_i w_i y_i||^2 in the response feature space
    err = diag - 2.0 * np.sum(K * W.T, axis=1) + np.sum(W * (G @ W), axis=0)
    return {"n": int(test.n), "rmse": float(np.sqrt(np.mean(np.maximum(err, 0.0))))}
