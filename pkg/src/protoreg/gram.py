"""Inner products between vectors, kernelized vectors and sample sets.

The fitting routines only ever see a Gram matrix, so the same code handles
plain Euclidean data, data mapped through a positive semidefinite kernel, and
empirical distributions represented by their kernel mean embeddings.

Supported kernels (``sigma`` multiplies the distance, it is not a width)::

    linear      <x, y>
    gaussian    exp(-sigma * ||x - y||^2)
    laplacian   exp(-sigma * ||x - y||_1)
    bspline     prod_i B(x_i - y_i), B the cardinal B-spline of degree 1 or 3
    energy      ||x|| + ||y|| - ||x - y||
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import InvalidArgumentError

KERNEL_FAMILIES = ("linear", "gaussian", "laplacian", "bspline", "energy")


@dataclass(frozen=True)
class KernelSpec:
    family: str = "linear"
    sigma: float = None
    degree: int = None

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise InvalidArgumentError(
                f"unknown kernel family {self.family!r}; expected one of {KERNEL_FAMILIES}")
        if self.family in ("gaussian", "laplacian"):
            if self.sigma is None:
                object.__setattr__(self, "sigma", 1.0)
            if not (np.isfinite(self.sigma) and self.sigma > 0):
                raise InvalidArgumentError("sigma must be a positive finite number")
            object.__setattr__(self, "sigma", float(self.sigma))
        elif self.sigma is not None:
            raise InvalidArgumentError(f"{self.family} kernel takes no sigma")
        if self.family == "bspline":
            if self.degree is None:
                object.__setattr__(self, "degree", 3)
            if self.degree not in (1, 3):
                raise InvalidArgumentError("bspline degree must be 1 or 3")
        elif self.degree is not None:
            raise InvalidArgumentError(f"{self.family} kernel takes no degree")

    @classmethod
    def parse(cls, text):
        """Build a spec from ``family[:param]``, e.g. ``gaussian:0.5`` or ``bspline:1``."""
        if isinstance(text, KernelSpec):
            return text
        if text is None:
            return cls()
        family, _, param = str(text).strip().partition(":")
        family = family.strip().lower()
        if not param:
            return cls(family)
        try:
            if family == "bspline":
                return cls(family, degree=int(param))
            return cls(family, sigma=float(param))
        except ValueError as exc:
            raise InvalidArgumentError(f"bad kernel parameter in {text!r}") from exc

    def __str__(self):
        if self.sigma is not None:
            return f"{self.family}:{self.sigma!r}"
        if self.degree is not None:
            return f"{self.family}:{self.degree}"
        return self.family

    def to_dict(self):
        out = {"family": self.family}
        if self.sigma is not None:
            out["sigma"] = self.sigma
        if self.degree is not None:
            out["degree"] = self.degree
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(d["family"], sigma=d.get("sigma"), degree=d.get("degree"))


class EmpiricalDistribution:
    """A finite sample set standing in for its empirical measure.

    One-dimensional samples are sorted on construction so the linear-time
    energy kernel can be used; ``sorted_1d`` records that.
    """

    __slots__ = ("samples", "sorted_1d", "_abs_mean")

    def __init__(self, samples):
        x = np.asarray(samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] == 0:
            raise InvalidArgumentError("a distribution needs at least one sample")
        if not np.all(np.isfinite(x)):
            raise InvalidArgumentError("samples must be finite")
        self.sorted_1d = x.shape[1] == 1
        if self.sorted_1d:
            x = np.sort(x, axis=0)
        x.setflags(write=False)
        self.samples = x
        self._abs_mean = None

    @property
    def dim(self):
        return self.samples.shape[1]

    def __len__(self):
        return self.samples.shape[0]

    def __repr__(self):
        return f"EmpiricalDistribution(n={len(self)}, dim={self.dim})"

    def mean_norm(self):
        if self._abs_mean is None:
            self._abs_mean = float(np.mean(np.linalg.norm(self.samples, axis=1)))
        return self._abs_mean


@dataclass
class GramMatrix:
    """Symmetric PSD matrix of pairwise inner products plus where it came from."""

    entries: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.entries = check_gram(self.entries)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    @property
    def shape(self):
        return self.entries.shape


def check_gram(G, psd=True):
    """Validate a Gram matrix and return it as a float array."""
    if isinstance(G, GramMatrix):
        return G.entries
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] == 0:
        raise InvalidArgumentError(f"Gram matrix must be square and nonempty, got {G.shape}")
    if not np.all(np.isfinite(G)):
        raise InvalidArgumentError("Gram matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(G))))
    if np.max(np.abs(G - G.T)) > 1e-10 * scale:
        raise InvalidArgumentError("Gram matrix is not symmetric")
    if psd:
        tr = float(np.trace(G))
        lo = float(np.linalg.eigvalsh(G)[0])
        if lo < -1e-8 * max(abs(tr), 1e-300):
            raise InvalidArgumentError(f"Gram matrix is not PSD (smallest eigenvalue {lo:.3g})")
    return G


def _pairwise(spec, X, Y):
    """Kernel matrix between the rows of ``X`` and ``Y``."""
    fam = spec.family
    if fam == "linear":
        return X @ Y.T
    if fam == "gaussian":
        return np.exp(-spec.sigma * cdist(X, Y, "sqeuclidean"))
    if fam == "laplacian":
        return np.exp(-spec.sigma * cdist(X, Y, "cityblock"))
    if fam == "energy":
        nx = np.linalg.norm(X, axis=1)
        ny = np.linalg.norm(Y, axis=1)
        return nx[:, None] + ny[None, :] - cdist(X, Y, "euclidean")
    # bspline
    out = np.ones((X.shape[0], Y.shape[0]))
    for c in range(X.shape[1]):
        out *= bspline(X[:, c][:, None] - Y[:, c][None, :], spec.degree)
    return out


def bspline(t, degree):
    """Cardinal B-spline of degree 1 or 3 (unit integral, centered at 0)."""
    a = np.abs(np.asarray(t, dtype=float))
    if degree == 1:
        return np.maximum(1.0 - a, 0.0)
    if degree == 3:
        inner = 2.0 / 3.0 - a**2 + 0.5 * a**3
        outer = (2.0 - a) ** 3 / 6.0
        return np.where(a <= 1.0, inner, np.where(a < 2.0, outer, 0.0))
    raise InvalidArgumentError("bspline degree must be 1 or 3")


def kernel_eval(spec, x, y):
    """K(x, y) for two vectors of equal dimension."""
    spec = KernelSpec.parse(spec)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.ndim != 1 or x.shape != y.shape:
        raise InvalidArgumentError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(_pairwise(spec, x[None, :], y[None, :])[0, 0])


def as_distribution(d):
    return d if isinstance(d, EmpiricalDistribution) else EmpiricalDistribution(d)


def energy_inner_naive(a, b):
    """Energy-kernel embedding inner product by the ``O(n_a n_b)`` double sum."""
    a, b = as_distribution(a), as_distribution(b)
    if a.dim != b.dim:
        raise InvalidArgumentError("dimension mismatch between distributions")
    cross = cdist(a.samples, b.samples, "euclidean").mean()
    return a.mean_norm() + b.mean_norm() - cross


def energy_inner_1d_sorted(a, b):
    """Energy-kernel embedding inner product of two sorted 1-D sample sets.

    A single merge pass counts, for every sample, how many samples of the
    other set lie below it; that turns the mean pairwise distance into a
    weighted sum of the samples, so the cost is ``O(n_a + n_b)``.
    """
    xs = _sorted_1d_values(a)
    ys = _sorted_1d_values(b)
    nx, ny = len(xs), len(ys)
    sum_x = 0.0
    sum_y = 0.0
    i = j = 0
    while i < nx and j < ny:
        if xs[i] <= ys[j]:
            sum_x += (j - (ny - j)) * xs[i]
            i += 1
        else:
            sum_y += (i - (nx - i)) * ys[j]
            j += 1
    if i >= nx:
        sum_y += nx * sum(ys[j:])
    else:
        sum_x += ny * sum(xs[i:])
    mean_abs_x = sum(abs(v) for v in xs) / nx
    mean_abs_y = sum(abs(v) for v in ys) / ny
    return mean_abs_x + mean_abs_y - (sum_x + sum_y) / (nx * ny)


def _sorted_1d_values(d):
    if isinstance(d, EmpiricalDistribution):
        if not d.sorted_1d:
            raise InvalidArgumentError("fast energy kernel needs 1-D samples")
        return d.samples[:, 0].tolist()
    v = np.asarray(d, dtype=float)
    if v.ndim == 2 and v.shape[1] == 1:
        v = v[:, 0]
    if v.ndim != 1 or v.size == 0:
        raise InvalidArgumentError("fast energy kernel needs nonempty 1-D samples")
    if np.any(np.diff(v) < 0):
        raise InvalidArgumentError("fast energy kernel needs samples sorted ascending")
    return v.tolist()


def embed_inner(spec, a, b, fast=True):
    """Inner product of the kernel mean embeddings of two sample sets.

    Dispatches to the linear-time merge for the energy kernel on 1-D data
    unless ``fast`` is false.
    """
    spec = KernelSpec.parse(spec)
    a, b = as_distribution(a), as_distribution(b)
    if a.dim != b.dim:
        raise InvalidArgumentError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if spec.family == "energy":
        if fast and a.sorted_1d and b.sorted_1d:
            return energy_inner_1d_sorted(a, b)
        return energy_inner_naive(a, b)
    if spec.family == "linear":
        return float(a.samples.mean(axis=0) @ b.samples.mean(axis=0))
    return float(_pairwise(spec, a.samples, b.samples).mean())


def squared_mmd(spec, a, b, fast=True):
    """Squared RKHS distance between two embedded sample sets, clamped at zero.

    For the energy kernel this is the squared energy distance.
    """
    a, b = as_distribution(a), as_distribution(b)
    if a is b:
        return 0.0
    aa = embed_inner(spec, a, a, fast)
    bb = embed_inner(spec, b, b, fast)
    ab = embed_inner(spec, a, b, fast)
    return max(0.0, aa + bb - 2.0 * ab)


def _is_distribution_list(items):
    if isinstance(items, np.ndarray):
        return False
    kinds = {isinstance(x, EmpiricalDistribution) for x in items}
    if len(kinds) > 1:
        raise InvalidArgumentError("items mix distributions and vectors")
    return kinds == {True}


def _as_vectors(items):
    X = np.asarray(items, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InvalidArgumentError("vector items must form a 2-D array")
    return X


def gram_matrix(items, spec=None, fast=True):
    """Gram matrix of a set of vectors (rows of an array) or distributions.

    Only the upper triangle is evaluated; the lower one is an exact mirror.
    """
    spec = KernelSpec.parse(spec)
    if len(items) == 0:
        raise InvalidArgumentError("need at least one item")
    if _is_distribution_list(items):
        n = len(items)
        G = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                G[i, j] = G[j, i] = embed_inner(spec, items[i], items[j], fast)
        kind = "distribution"
    else:
        X = _as_vectors(items)
        G = _pairwise(spec, X, X)
        G = np.triu(G) + np.triu(G, 1).T
        kind = "vector"
    return GramMatrix(G, {"kernel": spec.to_dict(), "kind": kind, "n": int(G.shape[0])})


def cross_gram(new_items, train_items, spec=None, fast=True):
    """Inner products of new items against training items.

    Returns ``(K, self_inner)`` with ``K[i, l] = <new_i, train_l>`` and
    ``self_inner[i] = <new_i, new_i>``.
    """
    spec = KernelSpec.parse(spec)
    new_dist = _is_distribution_list(new_items)
    if new_dist != _is_distribution_list(train_items):
        raise InvalidArgumentError("new and training items are of different kinds")
    if new_dist:
        K = np.array([[embed_inner(spec, a, b, fast) for b in train_items] for a in new_items])
        diag = np.array([embed_inner(spec, a, a, fast) for a in new_items])
        return K.reshape(len(new_items), len(train_items)), diag
    X, T = _as_vectors(new_items), _as_vectors(train_items)
    if X.shape[1] != T.shape[1]:
        raise InvalidArgumentError(f"dimension mismatch: {X.shape[1]} vs {T.shape[1]}")
    K = _pairwise(spec, X, T)
    diag = np.array([_pairwise(spec, x[None, :], x[None, :])[0, 0] for x in X])
    return K, diag
