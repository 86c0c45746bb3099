"""Quadratic minimization over the probability simplex.

Every coefficient update in the package (reconstruction weights, prototype
mixing weights, response mixing weights, importance coefficients and the
encoding of new points) is a problem of the form::

    minimize  0.5 * w' Q w + q' w   subject to  w >= 0, sum(w) = 1

with ``Q`` symmetric positive semidefinite. Two solvers are provided:

``"active-set"`` (default)
    Primal active-set method. On the current face it takes the exact Newton
    step of the equality-constrained problem, or, when the reduced Hessian is
    singular and the gradient has a component in its null space, follows that
    zero-curvature descent direction to the boundary. Finite termination,
    exact up to rounding, and cheap when solutions are sparse.
``"apg"``
    Monotone accelerated projected gradient with step ``1 / L``, ``L`` the
    largest absolute row sum of ``Q``. When an accelerated step would raise
    the objective the momentum is dropped and a plain projected gradient step
    is taken. Stops when the Frank-Wolfe gap ``g'w - min(g)``, an upper bound
    on the distance to the optimal value, falls below ``tol`` times the
    objective's scale.

Both start from a feasible point (uniform by default) and never return a
point with a larger objective than the start.
"""

import numpy as np
from numba import njit

from .exceptions import InvalidArgumentError, NumericalError

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10_000

_SYM_TOL = 1e-10
_PSD_TOL = 1e-8

_OK, _NOT_PSD, _NOT_FINITE = 0, 1, 2


@njit(cache=True)
def _project(v, out):
    d = v.shape[0]
    u = np.sort(v)
    css = 0.0
    theta = 0.0
    # Walk from the largest entry down; the last index with a positive gap fixes theta.
    for r in range(1, d + 1):
        css += u[d - r]
        t = (css - 1.0) / r
        if u[d - r] - t > 0.0:
            theta = t
    for i in range(d):
        out[i] = max(v[i] - theta, 0.0)


@njit(cache=True)
def _apg(Q, q, x, L, tol, max_iter):
    """Solve one problem in place of ``x``; returns (status, iterations)."""
    d = q.shape[0]
    scale = 0.0
    for i in range(d):
        for j in range(d):
            scale = max(scale, 0.5 * abs(Q[i, j]))
    qmax = 0.0
    for i in range(d):
        qmax = max(qmax, abs(q[i]))
    scale += qmax

    QX = Q @ x
    fX = 0.5 * (x @ QX) + q @ x
    y = x.copy()
    QY = QX.copy()
    z = np.empty(d)
    step = np.empty(d)
    t = 1.0
    for it in range(max_iter):
        g = QX + q
        gap = g @ x - g.min()
        if gap <= tol * max(abs(fX), scale):
            return _OK, it

        step[:] = y - (QY + q) / L
        _project(step, z)
        QZ = Q @ z
        fZ = 0.5 * (z @ QZ) + q @ z

        dd = 0.0
        curv = 0.0
        for i in range(d):
            di = z[i] - y[i]
            dd += di * di
            curv += di * (QZ[i] - QY[i])
        if curv < -_PSD_TOL * L * dd - 1e-13 * L * np.sqrt(dd * d) * (1.0 + np.abs(y).max()):
            return _NOT_PSD, it

        if fZ > fX:
            # Momentum overshot: restart with a plain gradient step from x.
            step[:] = x - g / L
            _project(step, z)
            QZ = Q @ z
            fZ = 0.5 * (z @ QZ) + q @ z
            t = 1.0
            if fZ > fX:
                return _OK, it
        if not np.isfinite(fZ):
            return _NOT_FINITE, it

        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_new
        y[:] = z + beta * (z - x)
        QY[:] = QZ + beta * (QZ - QX)
        x[:] = z
        QX = QZ
        fX = fZ
        t = t_new
    return _OK, max_iter


_JACOBI_MAX = 12


@njit(cache=True)
def _jacobi_eigh(H):
    """Eigenvalues (ascending) and eigenvectors of a small symmetric matrix by cyclic Jacobi.

    Much cheaper than a LAPACK call for the handful of free variables a
    typical face has.
    """
    n = H.shape[0]
    A = H.copy()
    V = np.eye(n)
    for _ in range(60):
        off = 0.0
        total = 0.0
        for p in range(n):
            total += A[p, p] ** 2
            for q in range(p + 1, n):
                off += A[p, q] ** 2
        if off <= 1e-32 * (total + 2.0 * off):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = c * akp - s * akq
                    A[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = c * apk - s * aqk
                    A[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = c * vkp - s * vkq
                    V[k, q] = s * vkp + c * vkq
    w = np.empty(n)
    for i in range(n):
        w[i] = A[i, i]
    order = np.argsort(w)
    return w[order], V[:, order]


@njit(cache=True)
def _sum_zero_basis(f):
    """Orthonormal basis (f x f-1) of the vectors summing to zero.

    Columns 2..f of the Householder reflector mapping e_1 onto -1/sqrt(f).
    """
    v = np.ones(f)
    v[0] += np.sqrt(f)
    vv = v @ v
    Z = np.empty((f, f - 1))
    for i in range(f):
        for j in range(1, f):
            Z[i, j - 1] = (1.0 if i == j else 0.0) - 2.0 * v[i] * v[j] / vv
    return Z


@njit(cache=True)
def _congruence(M, Z):
    """Symmetrized Z^T M Z."""
    f, r = Z.shape
    T = np.zeros((f, r))
    for a in range(f):
        for b in range(f):
            m = M[a, b]
            for j in range(r):
                T[a, j] += m * Z[b, j]
    H = np.zeros((r, r))
    for i in range(r):
        for j in range(r):
            acc = 0.0
            for a in range(f):
                acc += Z[a, i] * T[a, j]
            H[i, j] = acc
    for i in range(r):
        for j in range(i + 1, r):
            h = 0.5 * (H[i, j] + H[j, i])
            H[i, j] = h
            H[j, i] = h
    return H


@njit(cache=True)
def _grad(Q, q, x):
    """Q x + q for symmetric Q, touching only the rows where x is nonzero."""
    g = q.copy()
    for b in range(x.shape[0]):
        xb = x[b]
        if xb != 0.0:
            for a in range(q.shape[0]):
                g[a] += Q[b, a] * xb
    return g


@njit(cache=True)
def _qp_value(Q, q, x):
    S = np.nonzero(x)[0]
    val = 0.0
    for a in S:
        acc = 0.0
        for b in S:
            acc += Q[a, b] * x[b]
        val += x[a] * (0.5 * acc + q[a])
    return val


@njit(cache=True)
def _tmatvec(M, v):
    out = np.zeros(M.shape[1])
    for a in range(M.shape[0]):
        for j in range(M.shape[1]):
            out[j] += M[a, j] * v[a]
    return out


@njit(cache=True)
def _active_set(Q, q, x, tol, max_iter, qscale):
    """Primal active-set solve of one problem in place of ``x``; returns (status, iterations).

    ``qscale`` is the largest absolute entry of ``Q``.
    """
    d = q.shape[0]
    gtol = tol * (qscale + np.abs(q).max())
    free = x > 0.0
    g = _grad(Q, q, x)
    last_added = -1
    for it in range(max_iter):
        F = np.nonzero(free)[0]
        f = F.shape[0]
        p = np.zeros(f)
        slope = 0.0
        stationary = True
        # The reduced gradient's norm bounds its coordinates in any orthonormal basis, so a
        # small one means stationary on this face without factoring the reduced Hessian.
        red = 0.0
        if f > 1:
            mean = 0.0
            for a in range(f):
                mean += g[F[a]]
            mean /= f
            for a in range(f):
                red += (g[F[a]] - mean) ** 2
        if f > 1 and np.sqrt(red) > gtol:
            QFF = np.empty((f, f))
            gF = np.empty(f)
            for a in range(f):
                gF[a] = g[F[a]]
                for b in range(f):
                    QFF[a, b] = Q[F[a], F[b]]
            Z = _sum_zero_basis(f)
            if f - 1 <= _JACOBI_MAX:
                # Loops beat BLAS dispatch at these sizes.
                H = _congruence(QFF, Z)
                w, V = _jacobi_eigh(H)
                c = _tmatvec(V, _tmatvec(Z, gF))
            else:
                H = Z.T @ QFF @ Z
                H = 0.5 * (H + H.T)
                w, V = np.linalg.eigh(H)
                c = V.T @ (Z.T @ gF)
            if w[0] < -_PSD_TOL * qscale * f:
                return _NOT_PSD, it
            thr = 1e-10 * qscale * f
            null_norm = 0.0
            for i in range(f - 1):
                if w[i] <= thr:
                    null_norm = max(null_norm, abs(c[i]))
            s = np.zeros(f - 1)
            if null_norm > gtol:
                # Zero-curvature descent direction: linear decrease up to the boundary.
                for i in range(f - 1):
                    if w[i] <= thr:
                        s -= c[i] * V[:, i]
            else:
                for i in range(f - 1):
                    if w[i] > thr:
                        s -= (c[i] / w[i]) * V[:, i]
            p = Z @ s
            slope = gF @ p
            if np.abs(c).max() > gtol and slope < 0.0:
                stationary = False
        if stationary:
            g = _grad(Q, q, x)
            nu = 0.0
            for a in range(f):
                nu += g[F[a]]
            nu /= f
            best = -1
            best_val = -gtol
            for i in range(d):
                if not free[i] and g[i] - nu < best_val:
                    best_val = g[i] - nu
                    best = i
            if best < 0:
                return _OK, it
            free[best] = True
            last_added = best
            continue

        pQ = np.zeros(d)
        for a in range(f):
            pQ += p[a] * Q[:, F[a]]
        curv = 0.0
        for a in range(f):
            curv += p[a] * pQ[F[a]]
        alpha = -slope / curv if curv > 0.0 else np.inf
        block = -1
        for a in range(f):
            if p[a] < 0.0:
                ratio = x[F[a]] / -p[a]
                if ratio < alpha:
                    alpha = ratio
                    block = F[a]
        if not np.isfinite(alpha):
            return _OK, it
        if alpha == 0.0 and block == last_added:
            # Degenerate: the variable just freed is immediately blocking.
            return _OK, it
        for a in range(f):
            x[F[a]] += alpha * p[a]
        g += alpha * pQ
        if block >= 0:
            x[block] = 0.0
            free[block] = False
        for a in range(f):
            if x[F[a]] <= 0.0:
                x[F[a]] = 0.0
                free[F[a]] = False
        last_added = -1
        if not np.isfinite(g).all():
            return _NOT_FINITE, it
    return _OK, max_iter


@njit(cache=True)
def _solve_column(Q, q, x0, L, qscale, tol, max_iter, use_apg):
    """Solve from the feasible start ``x0``; returns (status, solution no worse than ``x0``)."""
    x = x0.copy()
    if use_apg:
        status, _ = _apg(Q, q, x, L, tol, max_iter)
    else:
        status, _ = _active_set(Q, q, x, tol, max_iter, qscale)
    if status != _OK:
        return status, x0
    for i in range(x.shape[0]):
        x[i] = max(x[i], 0.0)
    x /= x.sum()
    # Guard the no-increase promise against rounding.
    if _qp_value(Q, q, x) <= _qp_value(Q, q, x0):
        return _OK, x
    return _OK, x0


@njit(cache=True)
def _solve_batch(Q, q, X, L, tol, max_iter, use_apg):
    qscale = np.abs(Q).max()
    for c in range(q.shape[1]):
        status, x = _solve_column(Q, np.ascontiguousarray(q[:, c]), np.ascontiguousarray(X[:, c]),
                                  L, qscale, tol, max_iter, use_apg)
        if status != _OK:
            return status
        X[:, c] = x
    return _OK


@njit(cache=True)
def _project_columns(V, out):
    for c in range(V.shape[1]):
        col = np.empty(V.shape[0])
        _project(np.ascontiguousarray(V[:, c]), col)
        out[:, c] = col


def project_to_simplex(v):
    """Euclidean projection of a vector onto the probability simplex.

    Sort-based, ``O(d log d)``.

    Parameters
    ----------
    v : array_like, shape (d,)

    Returns
    -------
    ndarray, shape (d,)
        Nonnegative weights summing to one.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise InvalidArgumentError("project_to_simplex expects a nonempty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError("project_to_simplex got non-finite entries")
    out = np.empty_like(v)
    _project(v, out)
    return out


def project_columns(V):
    """Project every column of ``V`` (shape ``(d, m)``) onto the simplex."""
    V = np.asarray(V, dtype=float)
    out = np.empty_like(V)
    _project_columns(V, out)
    return out


def qp_objective(Q, q, w):
    """Value of ``0.5 w'Qw + q'w``; ``w`` may hold one problem per column."""
    w = np.asarray(w, dtype=float)
    Q = np.asarray(Q, dtype=float)
    return 0.5 * np.sum(w * (Q @ w), axis=0) + np.sum(np.asarray(q, dtype=float) * w, axis=0)


def _check_Q(Q):
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] < 1:
        raise InvalidArgumentError(f"Q must be a nonempty square matrix, got shape {Q.shape}")
    if not np.all(np.isfinite(Q)):
        raise NumericalError("Q has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(Q))))
    if np.max(np.abs(Q - Q.T)) > _SYM_TOL * scale:
        raise InvalidArgumentError("Q is not symmetric")
    return np.ascontiguousarray(0.5 * (Q + Q.T))


def solve_simplex_qp(Q, q, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, w0=None, method="active-set"):
    """Minimize ``0.5 w'Qw + q'w`` over the probability simplex.

    Parameters
    ----------
    Q : array_like, shape (d, d)
        Symmetric positive semidefinite.
    q : array_like, shape (d,)
    tol : float
        Relative optimality tolerance: on the reduced gradient and the
        multipliers for ``"active-set"``, on the Frank-Wolfe gap for ``"apg"``.
    max_iter : int
    w0 : array_like, optional
        Starting point, projected onto the simplex if infeasible. Defaults to
        uniform weights. The result never has a larger objective than the
        (projected) start.
    method : {"active-set", "apg"}

    Returns
    -------
    ndarray, shape (d,)
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 1:
        raise InvalidArgumentError("q must be a vector")
    W0 = None if w0 is None else np.asarray(w0, dtype=float)[:, None]
    return solve_simplex_qp_batch(Q, q[:, None], tol=tol, max_iter=max_iter, W0=W0,
                                  method=method)[:, 0]


def solve_simplex_qp_batch(Q, q, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, W0=None,
                           method="active-set"):
    """Solve ``m`` simplex QPs sharing ``Q``; column ``c`` of ``q`` is problem ``c``.

    Columns are solved independently, so the answer for one column does not
    depend on the others in the batch.

    Returns
    -------
    ndarray, shape (d, m)
    """
    Q = _check_Q(Q)
    q = np.asarray(q, dtype=float)
    d = Q.shape[0]
    if q.ndim != 2 or q.shape[0] != d:
        raise InvalidArgumentError(f"linear terms must have shape ({d}, m), got {q.shape}")
    if not np.all(np.isfinite(q)):
        raise NumericalError("linear term has non-finite entries")
    if method not in ("active-set", "apg"):
        raise InvalidArgumentError(f"unknown method {method!r}")
    if not tol > 0 or max_iter < 1:
        raise InvalidArgumentError("tol must be positive and max_iter at least 1")
    return solve_prevalidated(Q, q, tol, max_iter, W0, method)


def solve_prevalidated(Q, q, tol, max_iter, W0=None, method="active-set"):
    """:func:`solve_simplex_qp_batch` minus the input checks.

    For callers that build ``Q`` symmetric and ``q`` finite themselves, where
    re-checking an ``n x n`` matrix per call would dominate the run time.
    """
    d, m = q.shape
    if d == 1:
        return np.ones((1, m))

    Q = np.ascontiguousarray(Q, dtype=float)
    L = float(np.max(np.sum(np.abs(Q), axis=1)))
    if L == 0.0:
        # Linear objective: the best vertex, lowest index on ties.
        W = np.zeros((d, m))
        W[np.argmin(q, axis=0), np.arange(m)] = 1.0
        return W

    if W0 is None:
        X = np.full((d, m), 1.0 / d)
    else:
        X = np.array(W0, dtype=float)
        if X.shape != (d, m):
            raise InvalidArgumentError(f"start point must have shape {(d, m)}, got {X.shape}")
        if np.any(X < 0) or np.max(np.abs(X.sum(axis=0) - 1.0)) > 1e-9:
            X = project_columns(X)

    X = np.ascontiguousarray(X)
    status = _solve_batch(Q, np.ascontiguousarray(q), X, L, float(tol), int(max_iter),
                          method == "apg")
    if status == _NOT_PSD:
        raise NumericalError("negative curvature found: Q is not positive semidefinite")
    if status == _NOT_FINITE:
        raise NumericalError("simplex QP objective became non-finite")
    return X
