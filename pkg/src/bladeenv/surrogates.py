"""Polynomial response surfaces on the hypercube ``[-1, 1]^d``.

The basis is the total-degree set of tensor Legendre polynomials,
normalized to unit variance under the uniform measure, so the constant
term is the mean of the model and the remaining coefficients are
uncorrelated contributions to its variance.
"""

import csv
import itertools
import json
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_designs
from .exceptions import ConstantObjectiveError, RankDeficientError
from .linalg import OrthonormalBasis, matrix_from_dict

SUPPORTED_DEGREES = (1, 2)
COND_WARN = 1e8
_ROW_CHUNK = 512


def legendre_1d(x, degree):
    """Orthonormal Legendre values and derivatives, shape ``x.shape + (degree + 1,)``."""
    x = np.asarray(x, dtype=float)
    P = np.empty(x.shape + (degree + 1,))
    dP = np.empty_like(P)
    P[..., 0], dP[..., 0] = 1.0, 0.0
    if degree >= 1:
        P[..., 1], dP[..., 1] = np.sqrt(3.0) * x, np.sqrt(3.0)
    if degree >= 2:
        P[..., 2] = np.sqrt(5.0) * 0.5 * (3.0 * x**2 - 1.0)
        dP[..., 2] = np.sqrt(5.0) * 3.0 * x
    return P, dP


def total_degree_indices(d, degree):
    """Multi-indices with total degree ``<= degree``, ordered by degree then lexicographically."""
    out = [np.zeros(d, dtype=int)]
    for p in range(1, degree + 1):
        level = []
        for combo in itertools.combinations_with_replacement(range(d), p):
            alpha = np.zeros(d, dtype=int)
            for k in combo:
                alpha[k] += 1
            level.append(alpha)
        out.extend(sorted(level, key=lambda a: tuple(-a)))
    return np.array(out)


def term_label(alpha):
    parts = [f"x{k + 1}" if a == 1 else f"x{k + 1}^{a}" for k, a in enumerate(alpha) if a]
    return "*".join(parts) or "1"


class _Basis:
    def __init__(self, multi_indices):
        self.multi_indices = np.asarray(multi_indices, dtype=int)
        self.degree = int(self.multi_indices.sum(axis=1).max())
        self.support = [np.flatnonzero(a) for a in self.multi_indices]

    def __len__(self):
        return len(self.multi_indices)

    def values(self, X):
        P, _ = legendre_1d(X, self.degree)
        out = np.ones((X.shape[0], len(self)))
        for t, (alpha, supp) in enumerate(zip(self.multi_indices, self.support)):
            for k in supp:
                out[:, t] *= P[:, k, alpha[k]]
        return out

    def derivatives(self, X):
        """Shape ``(n, n_terms, d)``: partial derivative of every basis term."""
        P, dP = legendre_1d(X, self.degree)
        n, d = X.shape
        out = np.zeros((n, len(self), d))
        for t, (alpha, supp) in enumerate(zip(self.multi_indices, self.support)):
            for k in supp:
                g = dP[:, k, alpha[k]].copy()
                for j in supp:
                    if j != k:
                        g *= P[:, j, alpha[j]]
                out[:, t, k] = g
        return out


def r2_score(y_true, y_pred):
    """Coefficient of determination, one value per output column."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    ss_res = np.sum((y_true - y_pred) ** 2, axis=0)
    ss_tot = np.sum((y_true - y_true.mean(axis=0)) ** 2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = 1.0 - ss_res / ss_tot
    r2 = np.where(ss_tot > 0, r2, np.where(ss_res <= 1e-24, 1.0, 0.0))
    return float(r2) if r2.ndim == 0 else r2


class PolynomialSurrogate(RegressorMixin, BaseEstimator):
    """Least-squares polynomial model with exact gradients.

    Parameters
    ----------
    degree : {1, 2}
        Total degree of the Legendre basis.
    cond_warn : float
        Warn when the estimated condition number of the design matrix
        exceeds this value.

    Attributes
    ----------
    coef_ : ndarray of shape (n_terms,) or (n_terms, n_outputs)
    multi_indices_ : ndarray of shape (n_terms, n_features)
    training_r2_ : float or ndarray
    validation_r2_ : float or ndarray or None
        Set by :func:`fit_surrogate`, which holds out validation rows.
    """

    def __init__(self, degree=1, cond_warn=COND_WARN):
        self.degree = degree
        self.cond_warn = cond_warn

    def fit(self, X, y):
        if self.degree not in SUPPORTED_DEGREES:
            raise ValueError(f"degree must be one of {SUPPORTED_DEGREES}, got {self.degree!r}")
        X = check_designs(X)
        y = np.asarray(y, dtype=float)
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if not np.all(np.isfinite(y)):
            raise ValueError("outputs must be finite")
        basis = _Basis(total_degree_indices(X.shape[1], self.degree))
        if X.shape[0] < len(basis):
            raise ValueError(
                f"need at least {len(basis)} training rows for a degree-{self.degree} model "
                f"in d={X.shape[1]}, got {X.shape[0]}"
            )
        Phi = basis.values(X)
        Q, R = np.linalg.qr(Phi)
        diag = np.abs(np.diag(R))
        deficient = np.flatnonzero(diag <= 1e-10 * diag.max())
        if deficient.size:
            raise RankDeficientError([term_label(basis.multi_indices[t]) for t in deficient])
        cond = np.linalg.cond(R)
        if cond > self.cond_warn:
            warnings.warn(f"ill-conditioned design matrix (condition number {cond:.2e})", RuntimeWarning)
        coef = scipy.linalg.solve_triangular(R, Q.T @ y)
        self._basis = basis
        self.coef_ = coef
        self.multi_indices_ = basis.multi_indices
        self.n_features_in_ = X.shape[1]
        self.training_r2_ = r2_score(y, Phi @ coef)
        self.validation_r2_ = None
        return self

    @property
    def n_outputs_(self):
        check_is_fitted(self, "coef_")
        return 1 if self.coef_.ndim == 1 else self.coef_.shape[1]

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_designs(X, self.n_features_in_)
        return self._basis.values(X) @ self.coef_

    def gradient(self, X):
        """Analytic gradient, shape ``(n, d)`` for one output or ``(n, n_outputs, d)``."""
        check_is_fitted(self, "coef_")
        X = check_designs(X, self.n_features_in_)
        coef = self.coef_ if self.coef_.ndim == 2 else self.coef_[:, None]
        chunks = []
        for start in range(0, X.shape[0], _ROW_CHUNK):
            dB = self._basis.derivatives(X[start:start + _ROW_CHUNK])
            chunks.append(np.matmul(dB.transpose(0, 2, 1), coef).transpose(0, 2, 1))
        J = np.concatenate(chunks, axis=0)
        return J[:, 0, :] if self.coef_.ndim == 1 else J

    def linear_coefficients(self):
        """Gradient of the affine part (exact for degree 1)."""
        check_is_fitted(self, "coef_")
        idx = np.flatnonzero(self.multi_indices_.sum(axis=1) == 1)
        order = np.argmax(self.multi_indices_[idx], axis=1)
        coef = self.coef_[idx][np.argsort(order)]
        return np.sqrt(3.0) * coef

    def split_outputs(self):
        """One single-output model per output column, sharing the basis."""
        check_is_fitted(self, "coef_")
        if self.coef_.ndim == 1:
            return [self]
        models = []
        for j in range(self.coef_.shape[1]):
            m = PolynomialSurrogate(self.degree, self.cond_warn)
            m._basis = self._basis
            m.coef_ = self.coef_[:, j].copy()
            m.multi_indices_ = self.multi_indices_
            m.n_features_in_ = self.n_features_in_
            m.training_r2_ = float(np.atleast_1d(self.training_r2_)[j])
            m.validation_r2_ = None if self.validation_r2_ is None else float(np.atleast_1d(self.validation_r2_)[j])
            models.append(m)
        return models

    def to_dict(self):
        check_is_fitted(self, "coef_")

        def _list(v):
            return None if v is None else np.asarray(v, dtype=float).tolist()

        return {
            "degree": int(self.degree),
            "ambient_dim": int(self.n_features_in_),
            "multi_indices": self.multi_indices_.tolist(),
            "coefficients": np.asarray(self.coef_).tolist(),
            "training_r2": _list(self.training_r2_),
            "validation_r2": _list(self.validation_r2_),
        }

    @classmethod
    def from_dict(cls, payload):
        m = cls(degree=int(payload["degree"]))
        m._basis = _Basis(payload["multi_indices"])
        m.multi_indices_ = m._basis.multi_indices
        m.coef_ = np.asarray(payload["coefficients"], dtype=float)
        m.n_features_in_ = int(payload["ambient_dim"])
        tr, va = payload.get("training_r2"), payload.get("validation_r2")
        m.training_r2_ = None if tr is None else (np.asarray(tr) if isinstance(tr, list) else float(tr))
        m.validation_r2_ = None if va is None else (np.asarray(va) if isinstance(va, list) else float(va))
        return m


@dataclass(frozen=True)
class TrainingSet:
    """Designs, outputs and a disjoint training/validation split."""

    inputs: np.ndarray
    outputs: np.ndarray
    train_index: np.ndarray
    validation_index: np.ndarray

    def __post_init__(self):
        X = check_designs(self.inputs)
        y = np.asarray(self.outputs, dtype=float)
        tr = np.asarray(self.train_index, dtype=int)
        va = np.asarray(self.validation_index, dtype=int)
        if y.shape[0] != X.shape[0]:
            raise ValueError("inputs and outputs disagree on the number of rows")
        if np.intersect1d(tr, va).size:
            raise ValueError("training and validation rows overlap")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "outputs", y)
        object.__setattr__(self, "train_index", tr)
        object.__setattr__(self, "validation_index", va)

    @classmethod
    def from_arrays(cls, X, y, n_validation=0, seed=None):
        """Split rows into training and validation; the last rows are held out unless ``seed`` shuffles."""
        n = np.asarray(X).shape[0]
        order = np.arange(n) if seed is None else np.random.default_rng(seed).permutation(n)
        n_train = n - int(n_validation)
        return cls(X, y, np.sort(order[:n_train]), np.sort(order[n_train:]))

    @classmethod
    def from_csv(cls, path, n_features, n_validation=0, seed=None):
        """One row per design: ``n_features`` inputs followed by the outputs. A header row is skipped."""
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
        data = np.array([[float(v) for v in row] for row in rows if row])
        y = data[:, n_features:]
        return cls.from_arrays(data[:, :n_features], y[:, 0] if y.shape[1] == 1 else y, n_validation, seed)

    @classmethod
    def from_json(cls, path, n_features, n_validation=0, seed=None):
        """Same layout as :meth:`from_csv`, stored with the ``{rows, cols, data}`` matrix schema."""
        with open(path) as fh:
            data = matrix_from_dict(json.load(fh))
        y = data[:, n_features:]
        return cls.from_arrays(data[:, :n_features], y[:, 0] if y.shape[1] == 1 else y, n_validation, seed)

    @property
    def X_train(self):
        return self.inputs[self.train_index]

    @property
    def y_train(self):
        return self.outputs[self.train_index]

    @property
    def X_validation(self):
        return self.inputs[self.validation_index]

    @property
    def y_validation(self):
        return self.outputs[self.validation_index]


def fit_surrogate(ts, degree):
    """Fit on the training rows of ``ts`` and score R^2 on its validation rows."""
    model = PolynomialSurrogate(degree=degree).fit(ts.X_train, ts.y_train)
    if ts.validation_index.size:
        model.validation_r2_ = r2_score(ts.y_validation, model.predict(ts.X_validation))
    return model


def active_direction_linear(model):
    """Unit vector along the coefficient vector of an affine model."""
    check_is_fitted(model, "coef_")
    if model.degree != 1:
        raise ValueError("active_direction_linear needs a degree-1 model")
    if model.n_outputs_ != 1:
        raise ValueError("active_direction_linear needs a single-output model")
    g = model.linear_coefficients()
    norm = np.linalg.norm(g)
    if norm <= 1e-14 * max(1.0, abs(float(model.coef_[0]))):
        raise ConstantObjectiveError("linear model has zero gradient")
    return OrthonormalBasis(g / norm)
