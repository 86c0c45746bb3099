"""Archetypal and prototypal analysis on a Gram matrix.

Given data points ``x_1..x_n`` known only through their inner products
``G[i, l] = <x_i, x_l>``, find ``k`` prototypes ``u_j = sum_l B[l, j] x_l``
and reconstruction weights ``A[:, i]`` (both column-stochastic) minimizing::

    sum_i ||x_i - sum_j A[j, i] u_j||^2 + lam * sum_i sum_j A[j, i] ||x_i - u_j||^2

``lam = 0`` is archetypal analysis; large ``lam`` approaches k-means, with
hard assignments and prototypes at cluster barycenters. The problem is
convex in ``A`` for fixed ``B`` and vice versa, and is minimized by
alternating the two updates, each solved exactly up to the simplex QP
tolerance and warm-started so the objective never increases.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .exceptions import InvalidArgumentError, NumericalError
from .gram import check_gram
from .rng import SplitMix64
from .simplex import (_NOT_PSD, _OK, DEFAULT_MAX_ITER, DEFAULT_TOL, _solve_column, solve_prevalidated,
                      solve_simplex_qp_batch)

DEAD_WEIGHT = 1e-12


@dataclass
class FitOptions:
    max_outer_iter: int = 500
    tol: float = 1e-7
    seed: int = 0
    restart_degenerate: bool = True
    qp_tol: float = DEFAULT_TOL
    qp_max_iter: int = DEFAULT_MAX_ITER
    qp_method: str = "active-set"

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidArgumentError("tol must be positive")
        if self.max_outer_iter < 1:
            raise InvalidArgumentError("max_outer_iter must be at least 1")
        if int(self.seed) != self.seed or self.seed < 0:
            raise InvalidArgumentError("seed must be a nonnegative integer")
        if not self.qp_tol > 0 or self.qp_max_iter < 1:
            raise InvalidArgumentError("qp_tol must be positive and qp_max_iter at least 1")


@dataclass
class PrototypeModel:
    """Fitted coefficients.

    Attributes
    ----------
    A : ndarray, shape (k, n)
        Column ``i`` holds the weights reconstructing point ``i``.
    B : ndarray, shape (n, k)
        Column ``j`` holds the mixing weights defining prototype ``j``.
    lam : float
    BGB : ndarray, shape (k, k)
        Inner products between prototypes, ``B' G B``; needed to encode new
        points without the training Gram matrix.
    objective_trace : list of float
        Objective after each outer iteration.
    init_indices : list of int
        Training points the prototypes started from.
    """

    A: np.ndarray
    B: np.ndarray
    lam: float
    BGB: np.ndarray
    objective_trace: list = field(default_factory=list)
    init_indices: list = field(default_factory=list)

    @property
    def k(self):
        return self.B.shape[1]

    @property
    def n(self):
        return self.B.shape[0]

    @property
    def objective(self):
        return self.objective_trace[-1] if self.objective_trace else float("nan")


def _check_k_lam(n, k, lam):
    if int(k) != k or k < 1:
        raise InvalidArgumentError(f"k must be a positive integer, got {k}")
    if k > n:
        raise InvalidArgumentError(f"k = {k} exceeds the number of points n = {n}")
    if not (np.isfinite(lam) and lam >= 0):
        raise InvalidArgumentError(f"lambda must be a finite nonnegative number, got {lam}")


def _sq_distances(G, B, GB=None, BGB=None):
    """Squared distances ``D[i, j] = ||x_i - u_j||^2`` expanded through G."""
    if GB is None:
        GB = G @ B
    if BGB is None:
        BGB = B.T @ GB
    return np.diag(G)[:, None] - 2.0 * GB + np.diag(BGB)[None, :]


def _validated(G, A=None, B=None):
    G = check_gram(G, psd=False)
    n = G.shape[0]
    if A is not None:
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[1] != n:
            raise InvalidArgumentError(f"A must have shape (k, {n}), got {A.shape}")
    if B is not None:
        B = np.asarray(B, dtype=float)
        if B.ndim != 2 or B.shape[0] != n:
            raise InvalidArgumentError(f"B must have shape ({n}, k), got {B.shape}")
    if A is not None and B is not None and A.shape[0] != B.shape[1]:
        raise InvalidArgumentError(f"A {A.shape} and B {B.shape} disagree on k")
    return G, A, B


def objective(G, A, B, lam, check=True):
    """Prototypal objective (archetypal when ``lam == 0``) in Gram form."""
    if check:
        G, A, B = _validated(G, A, B)
    GB = G @ B
    BGB = B.T @ GB
    recon = np.trace(G) - 2.0 * np.sum(A.T * GB) + np.sum(A * (BGB @ A))
    if lam == 0:
        return float(recon)
    D = _sq_distances(G, B, GB, BGB)
    return float(recon + lam * np.sum(A.T * D))


def reconstruction_errors(G, A, B):
    """Per-point squared reconstruction error ``||x_i - X B a_i||^2``."""
    GB = G @ B
    BGB = B.T @ GB
    return np.diag(G) - 2.0 * np.sum(A.T * GB, axis=1) + np.sum(A * (BGB @ A), axis=0)


def update_A(G, B, lam, A0=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
             method="active-set", check=True):
    """Optimal reconstruction weights for fixed prototypes.

    Each column is an independent simplex QP with quadratic part ``2 B'GB``;
    the distance penalty only contributes to the linear part. ``check=False``
    skips input validation for callers that already did it.
    """
    if check:
        G, _, B = _validated(G, B=B)
    GB = G @ B
    BGB = B.T @ GB
    lin = -2.0 * GB
    if lam:
        lin = lin + lam * _sq_distances(G, B, GB, BGB)
    BGB = 0.5 * (BGB + BGB.T)
    return solve_prevalidated(2.0 * BGB, np.ascontiguousarray(lin.T), tol, max_iter, A0, method)


@njit(cache=True)
def _sweep_columns(G, A, B, lam, L, tol, max_iter, use_apg):
    k = A.shape[0]
    qscale = np.abs(G).max()
    for j in range(k):
        alpha = A[j]
        mass = alpha.sum()
        if mass < DEAD_WEIGHT:
            continue
        sq = alpha @ alpha
        # Reconstruction of every point by the other prototypes, as weights on training points.
        others = B @ (A @ alpha) - B[:, j] * sq
        target = (1.0 + lam) * alpha - others
        # Dividing the column QP by its curvature factor 2 (sq + lam * mass) leaves G as the quadratic part.
        q = -(G @ target) / (sq + lam * mass)
        status, x = _solve_column(G, q, np.ascontiguousarray(B[:, j]), L, qscale, tol, max_iter, use_apg)
        if status != _OK:
            return status
        B[:, j] = x
    return _OK


def update_B(G, A, lam, B0=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
             method="active-set", check=True):
    """One block-coordinate sweep over the prototype columns.

    With the other columns held fixed, column ``j`` minimizes a QP whose
    quadratic part is ``2 (|a_j|^2 + lam * sum(a_j)) G``, ``a_j`` being row
    ``j`` of ``A``. Columns whose prototype reconstructs nothing are left
    unchanged since they do not enter the objective.
    """
    if check:
        G, A, _ = _validated(G, A=A)
        G = 0.5 * (G + G.T)
    k, n = A.shape
    B = np.full((n, k), 1.0 / n) if B0 is None else np.array(B0, dtype=float, copy=True)
    if B.shape != (n, k):
        raise InvalidArgumentError(f"B0 must have shape {(n, k)}, got {B.shape}")
    if np.any(B < 0) or np.max(np.abs(B.sum(axis=0) - 1.0)) > 1e-9:
        raise InvalidArgumentError("B0 columns must lie on the simplex")
    L = float(np.max(np.sum(np.abs(G), axis=1)))
    if n == 1 or L == 0.0:
        # Every feasible column is optimal.
        return B
    status = _sweep_columns(np.ascontiguousarray(G, dtype=float), np.ascontiguousarray(A, dtype=float),
                            B, float(lam), L, float(tol), int(max_iter), method == "apg")
    if status == _NOT_PSD:
        raise NumericalError("negative curvature found: G is not positive semidefinite")
    if status != _OK:
        raise NumericalError("simplex QP objective became non-finite")
    return B


def init_prototypes(G, k, seed=0):
    """Indices of ``k`` distinct points chosen by D^2-weighted sampling.

    The first point is uniform; each next one is drawn with probability
    proportional to its squared distance to the nearest point already chosen.
    Distances come from ``G`` so this works in any inner product space.
    """
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    rng = SplitMix64(seed)
    diag = np.diag(G)
    chosen = [rng.randbelow(n)]
    closest = np.maximum(diag + diag[chosen[0]] - 2.0 * G[:, chosen[0]], 0.0)
    while len(chosen) < k:
        closest[chosen] = 0.0
        total = closest.sum()
        if total <= 0.0:
            idx = next(i for i in range(n) if i not in chosen)
        else:
            cum = np.cumsum(closest)
            idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
            idx = min(idx, n - 1)
            while closest[idx] == 0.0:
                idx -= 1
        chosen.append(idx)
        closest = np.minimum(closest, np.maximum(diag + diag[idx] - 2.0 * G[:, idx], 0.0))
    return chosen


def _restart_dead(G, A, B):
    dead = np.flatnonzero(A.sum(axis=1) < DEAD_WEIGHT)
    if dead.size == 0:
        return B
    B = B.copy()
    err = reconstruction_errors(G, A, B)
    order = np.argsort(-err, kind="stable")
    for j, i in zip(dead, order):
        B[:, j] = 0.0
        B[i, j] = 1.0
    return B


def fit_prototypal(G, k, lam, opts=None):
    """Fit ``k`` prototypes with locality penalty ``lam`` by alternating minimization."""
    opts = opts or FitOptions()
    G = check_gram(G)
    G = 0.5 * (G + G.T)
    n = G.shape[0]
    _check_k_lam(n, k, lam)
    if opts.qp_method not in ("active-set", "apg"):
        raise InvalidArgumentError(f"unknown QP method {opts.qp_method!r}")
    lam = float(lam)

    init = init_prototypes(G, k, opts.seed)
    B = np.zeros((n, k))
    B[init, np.arange(k)] = 1.0
    A = None
    trace = []
    for _ in range(opts.max_outer_iter):
        A = update_A(G, B, lam, A0=A, tol=opts.qp_tol, max_iter=opts.qp_max_iter,
                     method=opts.qp_method, check=False)
        if opts.restart_degenerate:
            B = _restart_dead(G, A, B)
        B = update_B(G, A, lam, B0=B, tol=opts.qp_tol, max_iter=opts.qp_max_iter,
                     method=opts.qp_method, check=False)
        f = objective(G, A, B, lam, check=False)
        if not np.isfinite(f):
            raise NumericalError("objective became non-finite")
        trace.append(f)
        if len(trace) > 1 and abs(trace[-2] - f) / (1.0 + abs(f)) < opts.tol:
            break
    return PrototypeModel(A=A, B=B, lam=lam, BGB=B.T @ G @ B,
                          objective_trace=trace, init_indices=list(init))


def fit_archetypal(G, k, opts=None):
    """Archetypal analysis: prototypal analysis without the locality penalty."""
    return fit_prototypal(G, k, 0.0, opts)


def encode(model, g0, g00, lam=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Barycentric coordinates of new points with respect to the prototypes.

    Parameters
    ----------
    model : PrototypeModel
    g0 : array_like, shape (n,) or (n, m)
        Inner products of each new point with the training points.
    g00 : float or array_like, shape (m,)
        Squared norm of each new point.
    lam : float, optional
        Penalty used for encoding; defaults to the training penalty.

    Returns
    -------
    ndarray, shape (k,) or (k, m)
    """
    lam = model.lam if lam is None else float(lam)
    g0 = np.asarray(g0, dtype=float)
    single = g0.ndim == 1
    if single:
        g0 = g0[:, None]
    if g0.shape[0] != model.n:
        raise InvalidArgumentError(f"expected {model.n} inner products per point, got {g0.shape[0]}")
    g00 = np.broadcast_to(np.asarray(g00, dtype=float), (g0.shape[1],))
    Bg = model.B.T @ g0
    lin = -2.0 * Bg
    if lam:
        lin = lin + lam * (g00[None, :] - 2.0 * Bg + np.diag(model.BGB)[:, None])
    W = solve_simplex_qp_batch(2.0 * model.BGB, lin, tol=tol, max_iter=max_iter)
    return W[:, 0] if single else W
