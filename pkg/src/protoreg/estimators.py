"""scikit-learn style wrappers.

Inputs are either 2-D arrays (one row per point) or lists of sample sets
(arrays or :class:`~protoreg.gram.EmpiricalDistribution`) when a
distribution kernel is used. Fitted estimators keep their training inputs
because predictions are expressed through inner products with them.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .archetypes import FitOptions, encode, fit_prototypal
from .exceptions import InvalidArgumentError
from .gram import EmpiricalDistribution, KernelSpec, cross_gram, gram_matrix
from .regression import class_probabilities, fit_multiple, fit_simple, predict_multiple, predict_simple


def check_items(X, kernel):
    """Validate inputs: a finite 2-D array, or a list of sample sets for the energy kernel."""
    spec = KernelSpec.parse(kernel)
    if spec.family == "energy" or _looks_like_sample_sets(X):
        if isinstance(X, np.ndarray) and X.ndim == 2 and X.dtype != object:
            raise InvalidArgumentError("distribution kernels need a list of sample sets, one per point")
        items = [x if isinstance(x, EmpiricalDistribution) else EmpiricalDistribution(x) for x in X]
        if not items:
            raise InvalidArgumentError("need at least one sample set")
        return items
    return check_array(X, ensure_2d=True, dtype=float)


def _looks_like_sample_sets(X):
    if isinstance(X, np.ndarray):
        return X.dtype == object
    return len(X) > 0 and isinstance(X[0], EmpiricalDistribution)


def check_response(y, n):
    y = np.asarray(y)
    if y.shape[0] != n:
        raise InvalidArgumentError(f"X has {n} rows but y has {y.shape[0]}")
    y = check_array(y, ensure_2d=False, dtype=float)
    return y


def _options(est):
    return FitOptions(max_outer_iter=est.max_iter, tol=est.tol, seed=est.random_state,
                      qp_method=est.qp_method)


def _per_block(value, m, name):
    if isinstance(value, (list, tuple)):
        if len(value) != m:
            raise InvalidArgumentError(f"{name} has {len(value)} entries for {m} predictor blocks")
        return list(value)
    return [value] * m


class _PrototypeBase(TransformerMixin, BaseEstimator):
    _lam_fixed = None

    def _lam(self):
        return self._lam_fixed if self._lam_fixed is not None else self.lam

    def fit(self, X, y=None):
        self.kernel_ = KernelSpec.parse(self.kernel)
        self.X_fit_ = check_items(X, self.kernel_)
        self.gram_ = gram_matrix(self.X_fit_, self.kernel_)
        self.model_ = fit_prototypal(self.gram_, self.n_prototypes, self._lam(), _options(self))
        self.coefficients_ = self.model_.A.T
        self.mixing_ = self.model_.B.T
        self.objective_ = self.model_.objective
        if isinstance(self.X_fit_, np.ndarray) and self.kernel_.family == "linear":
            self.prototypes_ = self.mixing_ @ self.X_fit_
        return self

    def transform(self, X):
        """Barycentric coordinates with respect to the prototypes, shape (m, k)."""
        check_is_fitted(self, "model_")
        items = check_items(X, self.kernel_)
        K, diag = cross_gram(items, self.X_fit_, self.kernel_)
        return encode(self.model_, K.T, diag).T

    def inverse_transform(self, W):
        """Points with the given barycentric coordinates (linear kernel only)."""
        check_is_fitted(self, "prototypes_")
        return np.asarray(W, dtype=float) @ self.prototypes_


class PrototypalAnalysis(_PrototypeBase):
    def __init__(self, n_prototypes=3, lam=0.1, kernel="linear", max_iter=500, tol=1e-7,
                 random_state=0, qp_method="active-set"):
        self.n_prototypes = n_prototypes
        self.lam = lam
        self.kernel = kernel
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state
        self.qp_method = qp_method


class ArchetypalAnalysis(_PrototypeBase):
    _lam_fixed = 0.0

    def __init__(self, n_prototypes=3, kernel="linear", max_iter=500, tol=1e-7, random_state=0,
                 qp_method="active-set"):
        self.n_prototypes = n_prototypes
        self.kernel = kernel
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state
        self.qp_method = qp_method


class PrototypalRegressor(RegressorMixin, BaseEstimator):
    """Regression through paired predictor and response prototypes."""

    def __init__(self, n_prototypes=5, lam=0.1, kernel="linear", response_kernel="linear",
                 max_iter=500, tol=1e-7, random_state=0, qp_method="active-set"):
        self.n_prototypes = n_prototypes
        self.lam = lam
        self.kernel = kernel
        self.response_kernel = response_kernel
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state
        self.qp_method = qp_method

    def fit(self, X, y):
        self.kernel_ = KernelSpec.parse(self.kernel)
        self.response_kernel_ = KernelSpec.parse(self.response_kernel)
        self.X_fit_ = check_items(X, self.kernel_)
        self.y_fit_ = check_items(y, self.response_kernel_) if self.response_kernel_.family == "energy" \
            else check_response(y, len(self.X_fit_))
        Gx = gram_matrix(self.X_fit_, self.kernel_)
        Gy = gram_matrix(self.y_fit_, self.response_kernel_)
        self.model_ = fit_simple(Gx, Gy, self.n_prototypes, self.lam, _options(self))
        return self

    def predict_weights(self, X):
        """Weights over training responses, shape (m, n)."""
        check_is_fitted(self, "model_")
        K, diag = cross_gram(check_items(X, self.kernel_), self.X_fit_, self.kernel_)
        return predict_simple(self.model_, K.T, diag).T

    def predict(self, X):
        W = self.predict_weights(X)
        if not isinstance(self.y_fit_, np.ndarray):
            raise InvalidArgumentError("distributional responses: use predict_weights")
        return W @ self.y_fit_


class MultiplePrototypalRegressor(RegressorMixin, BaseEstimator):
    """Regression on several predictor blocks mixed by importance weights ``tau_``.

    ``X`` is either a list of blocks (one array or sample-set list per
    predictor) or a 2-D array cut into blocks by ``blocks``, a list of
    column-index lists. With a single distribution kernel, a flat list of
    sample sets is read as one block.
    """

    def __init__(self, n_prototypes=5, lam=0.1, kernel="linear", blocks=None,
                 response_kernel="linear", max_iter=500, tol=1e-7, random_state=0,
                 qp_method="active-set"):
        self.n_prototypes = n_prototypes
        self.lam = lam
        self.kernel = kernel
        self.blocks = blocks
        self.response_kernel = response_kernel
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state
        self.qp_method = qp_method

    def _split(self, X):
        if self.blocks is not None:
            X = check_array(X, dtype=float)
            return [X[:, list(cols)] for cols in self.blocks]
        if isinstance(X, np.ndarray) or self._single_set_list(X):
            return [X]
        return list(X)

    def _single_set_list(self, X):
        # A flat list of sample sets is one distribution block; a list of lists is several blocks.
        if len(X) == 0 or isinstance(X[0], EmpiricalDistribution):
            return len(X) > 0
        if isinstance(self.kernel, (list, tuple)):
            return False
        return KernelSpec.parse(self.kernel).family == "energy" and isinstance(X[0], np.ndarray)

    def _block_items(self, X):
        parts = self._split(X)
        if len(parts) != len(self.kernels_):
            raise InvalidArgumentError(f"expected {len(self.kernels_)} predictor blocks, got {len(parts)}")
        return [check_items(p, s) for p, s in zip(parts, self.kernels_)]

    def _fit_weights(self, X, Gy):
        parts = self._split(X)
        m = len(parts)
        self.kernels_ = [KernelSpec.parse(s) for s in _per_block(self.kernel, m, "kernel")]
        self.X_fit_ = [check_items(p, s) for p, s in zip(parts, self.kernels_)]
        sizes = {len(b) for b in self.X_fit_}
        if len(sizes) != 1:
            raise InvalidArgumentError(f"predictor blocks disagree on the row count: {sorted(sizes)}")
        Gx = [gram_matrix(b, s) for b, s in zip(self.X_fit_, self.kernels_)]
        self.model_ = fit_multiple(Gx, Gy, _per_block(self.n_prototypes, m, "n_prototypes"),
                                   _per_block(self.lam, m, "lam"), _options(self))
        self.tau_ = self.model_.tau

    def fit(self, X, y):
        self.response_kernel_ = KernelSpec.parse(self.response_kernel)
        if self.response_kernel_.family == "energy":
            self.y_fit_ = check_items(y, self.response_kernel_)
        else:
            self.y_fit_ = check_response(y, len(y))
        self._fit_weights(X, gram_matrix(self.y_fit_, self.response_kernel_))
        return self

    def predict_weights(self, X):
        check_is_fitted(self, "model_")
        items = self._block_items(X)
        g0, g00 = [], []
        for new, train, spec in zip(items, self.X_fit_, self.kernels_):
            K, diag = cross_gram(new, train, spec)
            g0.append(K.T)
            g00.append(diag)
        return predict_multiple(self.model_, g0, g00).T

    def predict(self, X):
        if not isinstance(self.y_fit_, np.ndarray):
            raise InvalidArgumentError("distributional responses: use predict_weights")
        return self.predict_weights(X) @ self.y_fit_


class PrototypalClassifier(ClassifierMixin, MultiplePrototypalRegressor):
    """Multiple prototypal regression on one-hot encoded class labels."""

    def fit(self, X, y):
        y = np.asarray(y)
        if y.ndim != 1:
            raise InvalidArgumentError("y must be a 1-D array of labels")
        self.classes_, codes = np.unique(y, return_inverse=True)
        self.y_fit_ = np.eye(len(self.classes_))[codes]
        self.response_kernel_ = KernelSpec()
        self._fit_weights(X, gram_matrix(self.y_fit_))
        return self

    def predict_proba(self, X):
        return class_probabilities(self.predict_weights(X).T, self.y_fit_)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
