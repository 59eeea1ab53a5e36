"""Gradient covariance matrices and the subspaces derived from them.

For a scalar objective ``f`` the covariance is ``C = E[grad f grad f^T]``
under the uniform distribution on ``[-1, 1]^d``. For a vector objective
with component weights ``w`` it is ``H = E[J^T diag(w) J]``, which equals
``sum_i w_i C_i`` when every component is averaged over the same samples.
"""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_designs
from .linalg import OrthonormalBasis, SubspacePair, eigendecompose_spsd, matrix_from_dict, matrix_to_dict, select_gap
from .surrogates import PolynomialSurrogate

SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-10


def default_n_mc(d):
    return 100 * d


@dataclass(frozen=True)
class WeightVector:
    """Non-negative weights, one per component of a vector objective."""

    weights: np.ndarray
    description: str = ""

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, copy=True).ravel()
        if w.size == 0 or not np.all(np.isfinite(w)):
            raise ValueError("weights must be a non-empty finite vector")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if not np.any(w > 0):
            raise ValueError("at least one weight must be positive")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.size

    def to_dict(self):
        return {"weights": self.weights.tolist(), "description": self.description}


@dataclass(frozen=True)
class GradientCovariance:
    """A symmetric PSD ``d x d`` matrix with its provenance."""

    matrix: np.ndarray
    n_samples: int = 0
    source: str = ""
    seed: object = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        C = np.array(self.matrix, dtype=float, copy=True)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValueError(f"covariance must be square, got {C.shape}")
        scale = max(1.0, float(np.max(np.abs(C))))
        if np.max(np.abs(C - C.T)) > SYMMETRY_TOL * scale:
            raise ValueError("covariance is not symmetric")
        lam_min = np.linalg.eigvalsh(C)[0] if C.size else 0.0
        if lam_min < -PSD_TOL * scale:
            raise ValueError(f"covariance is not PSD (min eigenvalue {lam_min:.3e})")
        C.setflags(write=False)
        object.__setattr__(self, "matrix", C)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def to_dict(self):
        out = matrix_to_dict(self.matrix)
        out.update(n_samples=int(self.n_samples), source=self.source, seed=self.seed, metadata=dict(self.metadata))
        return out

    @classmethod
    def from_dict(cls, payload):
        return cls(
            matrix_from_dict(payload),
            int(payload.get("n_samples", 0)),
            payload.get("source", ""),
            payload.get("seed"),
            dict(payload.get("metadata", {})),
        )


def pairwise_sum(a):
    """Sum along axis 0 by recursive halving; round-off grows like ``log2(n)``."""
    a = np.asarray(a, dtype=float)
    while a.shape[0] > 1:
        if a.shape[0] % 2:
            a = np.concatenate([a, np.zeros((1,) + a.shape[1:])], axis=0)
        a = a[0::2] + a[1::2]
    return a[0]


def uniform_samples(d, n, seed):
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=(n, d))


def _symmetrize(C):
    return 0.5 * (C + C.T)


def scalar_covariance(model, n_mc=None, seed=0, source="", samples=None):
    """Gradient covariance of a single-output surrogate.

    Degree-1 models have a constant gradient ``g`` and return ``g g^T``
    exactly without sampling. Otherwise the expectation is a Monte Carlo
    average over ``n_mc`` uniform samples (or the given ``samples``).
    """
    check_is_fitted(model, "coef_")
    if model.n_outputs_ != 1:
        raise ValueError("scalar_covariance needs a single-output model; use vector_covariance")
    d = model.n_features_in_
    if model.degree == 1 and samples is None:
        g = model.linear_coefficients()
        return GradientCovariance(_symmetrize(np.outer(g, g)), 0, source, None)
    if samples is None:
        n_mc = default_n_mc(d) if n_mc is None else int(n_mc)
        if n_mc < 1:
            raise ValueError("n_mc must be at least 1")
        samples = uniform_samples(d, n_mc, seed)
    else:
        samples = check_designs(samples, d)
        seed = None
    G = model.gradient(samples)
    C = pairwise_sum(G[:, :, None] * G[:, None, :]) / G.shape[0]
    return GradientCovariance(_symmetrize(C), G.shape[0], source, seed)


def _jacobian(models, samples):
    if isinstance(models, PolynomialSurrogate):
        J = models.gradient(samples)
        return J[:, None, :] if J.ndim == 2 else J
    return np.stack([m.gradient(samples) for m in models], axis=1)


def _n_components(models):
    return models.n_outputs_ if isinstance(models, PolynomialSurrogate) else len(models)


def _ambient_dim(models):
    if isinstance(models, PolynomialSurrogate):
        return models.n_features_in_
    dims = {m.n_features_in_ for m in models}
    if len(dims) != 1:
        raise ValueError(f"component models disagree on the design dimension: {sorted(dims)}")
    return dims.pop()


def vector_covariance(models, w, n_mc=None, seed=0, source="", samples=None):
    """Weighted gradient covariance ``E[J^T diag(w) J]`` of a vector objective.

    ``models`` is either a sequence of single-output surrogates or one
    multi-output surrogate. All components share one sample set.
    """
    if not isinstance(w, WeightVector):
        w = WeightVector(w)
    N = _n_components(models)
    if len(w) != N:
        raise ValueError(f"{len(w)} weights for {N} components")
    d = _ambient_dim(models)
    if samples is None:
        n_mc = default_n_mc(d) if n_mc is None else int(n_mc)
        if n_mc < 1:
            raise ValueError("n_mc must be at least 1")
        samples = uniform_samples(d, n_mc, seed)
    else:
        samples = check_designs(samples, d)
        seed = None
    active = np.flatnonzero(w.weights > 0)
    per_sample = np.zeros((samples.shape[0], d, d))
    for start in range(0, samples.shape[0], 256):
        chunk = samples[start:start + 256]
        if isinstance(models, PolynomialSurrogate):
            J = _jacobian(models, chunk)[:, active, :]
        else:
            J = _jacobian([models[i] for i in active], chunk)
        per_sample[start:start + 256] = np.matmul(J.transpose(0, 2, 1), J * w.weights[active][None, :, None])
    H = pairwise_sum(per_sample) / samples.shape[0]
    return GradientCovariance(_symmetrize(H), samples.shape[0], source or w.description, seed)


def subspace_from_covariance(C, r_override=None, min_ratio=1.0, restrict_to=None):
    """Split the design space using the spectrum of a gradient covariance.

    With ``restrict_to`` (an orthonormal basis ``V``) the covariance is
    first compressed to ``V^T C V`` so the active directions are sought
    inside ``colspan(V)``; the returned pair then lives in that subspace,
    with bases expressed in full design coordinates.
    """
    M = C.matrix if isinstance(C, GradientCovariance) else np.asarray(C, dtype=float)
    V = None
    if restrict_to is not None:
        V = restrict_to.columns if isinstance(restrict_to, OrthonormalBasis) else np.asarray(restrict_to)
        M = _symmetrize(V.T @ M @ V)
    lam, Q = eigendecompose_spsd(M)
    k = lam.size
    if r_override is not None:
        r = int(r_override)
        if not 1 <= r <= k - 1:
            raise ValueError(f"r_override must lie in [1, {k - 1}], got {r}")
    else:
        r = select_gap(lam, min_ratio)
    basis = Q.columns if V is None else V @ Q.columns
    return SubspacePair(OrthonormalBasis(basis[:, :r]), OrthonormalBasis(basis[:, r:]), lam)


def smooth_weights(n_nodes, indices, radius, cyclic=True):
    """Unit weights on ``indices`` tapering linearly to zero ``radius`` nodes away."""
    idx = np.atleast_1d(np.asarray(indices, dtype=int))
    if idx.size == 0:
        raise ValueError("need at least one weighted node")
    nodes = np.arange(n_nodes)
    dist = np.abs(nodes[:, None] - idx[None, :])
    if cyclic:
        dist = np.minimum(dist, n_nodes - dist)
    dist = dist.min(axis=1).astype(float)
    if radius <= 0:
        return (dist == 0).astype(float)
    return np.clip(1.0 - dist / float(radius), 0.0, 1.0)


class ActiveSubspace(TransformerMixin, BaseEstimator):
    """Active subspace of a scalar or weighted vector objective.

    Fits a polynomial surrogate to ``(X, y)``, estimates its gradient
    covariance and keeps the dominant eigenvectors. ``transform`` returns
    the active coordinates ``W^T x``.

    Parameters
    ----------
    degree : {1, 2}
    n_active : int or None
        Fixed active dimension; by default chosen at the largest eigenvalue gap.
    min_ratio : float
        Smallest acceptable eigenvalue ratio at the chosen gap.
    weights : array-like or None
        Component weights when ``y`` has several columns.
    n_mc : int or None
        Monte Carlo samples, ``100 * d`` by default.
    random_state : int
    """

    def __init__(self, degree=2, n_active=None, min_ratio=1.0, weights=None, n_mc=None, random_state=0):
        self.degree = degree
        self.n_active = n_active
        self.min_ratio = min_ratio
        self.weights = weights
        self.n_mc = n_mc
        self.random_state = random_state

    def fit(self, X, y):
        self.surrogate_ = PolynomialSurrogate(degree=self.degree).fit(X, y)
        if self.surrogate_.n_outputs_ == 1:
            self.covariance_ = scalar_covariance(self.surrogate_, self.n_mc, self.random_state)
        else:
            w = np.ones(self.surrogate_.n_outputs_) if self.weights is None else self.weights
            self.covariance_ = vector_covariance(self.surrogate_, w, self.n_mc, self.random_state)
        self.subspace_ = subspace_from_covariance(self.covariance_, self.n_active, self.min_ratio)
        self.eigenvalues_ = self.subspace_.eigenvalues
        self.components_ = self.subspace_.W.T
        self.n_active_ = self.subspace_.gap_index
        self.n_features_in_ = self.subspace_.W.shape[0]
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_designs(X, self.n_features_in_)
        return X @ self.components_.T

    def inactive_transform(self, X):
        check_is_fitted(self, "components_")
        X = check_designs(X, self.n_features_in_)
        return X @ self.subspace_.V
