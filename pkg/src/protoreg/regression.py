"""Simple and multiple prototypal regression in Gram space.

A predictor's prototypes ``u_j`` come from prototypal analysis. Each is paired
with a response prototype ``v_j = sum_i C[i, j] y_i`` and a new input is
mapped to ``sum_j a_j v_j``, where ``a`` are its barycentric coordinates with
respect to the ``u_j``. With several predictors, their contributions are
mixed by importance coefficients ``tau`` on the simplex.

Predictions are returned as weights ``w`` over the training responses,
``y_hat = sum_i w_i y_i``, so vector, one-hot and distributional responses go
through the same code. Everything only needs the response Gram matrix.
"""

from dataclasses import dataclass, field

import numpy as np

from .archetypes import FitOptions, PrototypeModel, encode, fit_prototypal, objective, update_B
from .exceptions import InvalidArgumentError
from .gram import check_gram
from .simplex import solve_simplex_qp

DEFAULT_MAX_ALTERNATIONS = 100


@dataclass
class SimpleRegressionModel:
    x_model: PrototypeModel
    C: np.ndarray
    objective_trace: list = field(default_factory=list)
    gy_ref: dict = field(default_factory=dict)

    @property
    def k(self):
        return self.x_model.k


@dataclass
class MultipleRegressionModel:
    per_predictor: list
    tau: np.ndarray
    fit_trace: list = field(default_factory=list)
    gy_ref: dict = field(default_factory=dict)

    @property
    def m(self):
        return len(self.per_predictor)

    @property
    def models(self):
        return [pm for pm, _ in self.per_predictor]

    @property
    def Cs(self):
        return [C for _, C in self.per_predictor]


def _rel_change(prev, cur):
    return abs(prev - cur) / (1.0 + abs(cur))


def fit_response_prototypes(Gy, A, opts=None, C0=None, max_sweeps=DEFAULT_MAX_ALTERNATIONS):
    """Response mixing weights for fixed reconstruction weights ``A`` (k x n).

    Minimizes ``sum_i ||y_i - sum_j A[j, i] v_j||^2`` by repeated column
    sweeps, starting from ``C0`` (uniform columns by default). Returns
    ``(C, trace)``.
    """
    opts = opts or FitOptions()
    Gy = check_gram(Gy, psd=False)
    Gy = 0.5 * (Gy + Gy.T)
    A = np.asarray(A, dtype=float)
    n = Gy.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise InvalidArgumentError(f"A must have shape (k, {n}), got {A.shape}")
    C = np.full((n, A.shape[0]), 1.0 / n) if C0 is None else C0
    trace = []
    for _ in range(max_sweeps):
        C = update_B(Gy, A, 0.0, B0=C, tol=opts.qp_tol, max_iter=opts.qp_max_iter,
                     method=opts.qp_method, check=False)
        trace.append(objective(Gy, A, C, 0.0, check=False))
        if len(trace) > 1 and _rel_change(trace[-2], trace[-1]) < opts.tol:
            break
    return C, trace


def fit_simple(Gx, Gy, k, lam, opts=None, max_sweeps=DEFAULT_MAX_ALTERNATIONS):
    """Prototypal regression of one response on one predictor."""
    opts = opts or FitOptions()
    Gx = check_gram(Gx)
    Gy = check_gram(Gy)
    if Gx.shape != Gy.shape:
        raise InvalidArgumentError(f"predictor and response Gram sizes differ: {Gx.shape} vs {Gy.shape}")
    x_model = fit_prototypal(Gx, k, lam, opts)
    C, trace = fit_response_prototypes(Gy, x_model.A, opts, C0=x_model.B.copy(), max_sweeps=max_sweeps)
    return SimpleRegressionModel(x_model=x_model, C=C, objective_trace=trace,
                                 gy_ref={"n": int(Gy.shape[0]), "trace": float(np.trace(Gy))})


def predict_simple(model, g0x, g00x, lam=None):
    """Training-response weights for new inputs.

    ``g0x`` holds inner products with the training predictors, shape ``(n,)``
    or ``(n, m)`` for ``m`` inputs; ``g00x`` their squared norms.
    """
    a0 = encode(model.x_model, g0x, g00x, lam=lam)
    return model.C @ a0


def _stacked(models, Cs, tau):
    A = np.vstack([t * pm.A for t, pm in zip(tau, models)])
    C = np.hstack(Cs)
    return A, C


def multiple_objective(Gy, models, Cs, tau):
    """Squared training error ``sum_i ||y_i - sum_l tau_l sum_j a_ji^(l) v_j^(l)||^2``."""
    A, C = _stacked(models, Cs, tau)
    return objective(Gy, A, C, 0.0)


def _tau_step(Gy, models, Cs, tau, opts):
    # Column i of M_l is the training-response weight vector predicted for point i by predictor l.
    Ms = [C @ pm.A for pm, C in zip(models, Cs)]
    GM = [Gy @ M for M in Ms]
    m = len(Ms)
    H = np.empty((m, m))
    h = np.empty(m)
    for a in range(m):
        h[a] = np.sum(Ms[a] * Gy)
        for b in range(a, m):
            H[a, b] = H[b, a] = np.sum(Ms[a] * GM[b])
    return solve_simplex_qp(2.0 * H, -2.0 * h, tol=opts.qp_tol, max_iter=opts.qp_max_iter,
                            w0=tau, method=opts.qp_method)


def fit_multiple(Gx_list, Gy, k_list, lam_list, opts=None, max_alternations=DEFAULT_MAX_ALTERNATIONS,
                 tau_fixed=None, x_models=None):
    """Prototypal regression on several predictors with importance coefficients.

    Each predictor gets its own prototypal analysis (``k_list[l]`` prototypes,
    penalty ``lam_list[l]``). Then ``tau`` and the response weights are found
    by alternating an importance step and a full sweep over all response
    columns, predictors in index order. ``tau_fixed`` skips the importance
    step; ``x_models`` reuses already fitted predictor models.
    """
    opts = opts or FitOptions()
    m = len(Gx_list)
    if m == 0:
        raise InvalidArgumentError("need at least one predictor")
    if len(k_list) != m or len(lam_list) != m:
        raise InvalidArgumentError(
            f"got {m} predictors but {len(k_list)} k values and {len(lam_list)} lambda values")
    Gy = check_gram(Gy)
    Gy = 0.5 * (Gy + Gy.T)
    n = Gy.shape[0]
    Gx_list = [check_gram(G) for G in Gx_list]
    for G in Gx_list:
        if G.shape[0] != n:
            raise InvalidArgumentError(f"predictor Gram of size {G.shape[0]} does not match n = {n}")

    if x_models is None:
        x_models = [fit_prototypal(G, k, lam, opts) for G, k, lam in zip(Gx_list, k_list, lam_list)]
    # Each response prototype starts out built from the same rows as its predictor prototype.
    Cs = [pm.B.copy() for pm in x_models]
    if tau_fixed is not None:
        tau = np.asarray(tau_fixed, dtype=float)
        if tau.shape != (m,) or np.any(tau < 0) or abs(tau.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError("tau_fixed must be a simplex vector of length m")
    else:
        tau = np.full(m, 1.0 / m)

    splits = np.cumsum([pm.k for pm in x_models])[:-1]
    trace = []
    for _ in range(max_alternations):
        if tau_fixed is None:
            tau = _tau_step(Gy, x_models, Cs, tau, opts)
        A, C = _stacked(x_models, Cs, tau)
        C = update_B(Gy, A, 0.0, B0=C, tol=opts.qp_tol, max_iter=opts.qp_max_iter,
                     method=opts.qp_method, check=False)
        Cs = np.split(C, splits, axis=1)
        trace.append(objective(Gy, A, C, 0.0, check=False))
        if len(trace) > 1 and _rel_change(trace[-2], trace[-1]) < opts.tol:
            break
    return MultipleRegressionModel(per_predictor=list(zip(x_models, Cs)), tau=tau, fit_trace=trace,
                                   gy_ref={"n": int(n), "trace": float(np.trace(Gy))})


def predict_multiple(model, g0_list, g00_list):
    """Training-response weights for new inputs, one inner-product block per predictor.

    Each predictor encodes with its own training penalty.
    """
    if len(g0_list) != model.m or len(g00_list) != model.m:
        raise InvalidArgumentError(f"expected {model.m} predictor blocks")
    w = 0.0
    for t, (pm, C), g0, g00 in zip(model.tau, model.per_predictor, g0_list, g00_list):
        w = w + t * (C @ encode(pm, g0, g00))
    return w


def class_probabilities(w, labels):
    """Predicted class probabilities ``labels' w`` (one row per prediction)."""
    labels = np.asarray(labels, dtype=float)
    w = np.asarray(w, dtype=float)
    return (labels.T @ w).T


def classify(w, labels):
    """Most probable class index; ties go to the lowest index.

    ``w`` is a weight vector over training points (or one column per
    prediction); ``labels`` the one-hot training responses, shape ``(n, c)``.
    """
    return np.argmax(class_probabilities(w, labels), axis=-1)
