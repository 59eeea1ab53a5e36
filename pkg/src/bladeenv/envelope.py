"""Blade envelopes: tolerance bands and Mahalanobis scrap-or-use decisions."""

import csv
import io
import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
from scipy.optimize import brentq
from scipy.special import expit, log_expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import NotTrainedError, SingularCovarianceError
from .linalg import matrix_from_dict, matrix_to_dict
from .oracle import BladeProfile

RIDGE_SCALE = 1e-8
SLOPE_CAP = 1e3
MAX_NEWTON = 500
GRAD_TOL = 1e-8


@dataclass(frozen=True)
class EnvelopeBand:
    """Signed normal-displacement bounds around the nominal profile."""

    nominal: BladeProfile
    lower: np.ndarray
    upper: np.ndarray
    source: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float, copy=True)
        hi = np.array(self.upper, dtype=float, copy=True)
        if lo.shape != (self.nominal.n_nodes,) or hi.shape != lo.shape:
            raise ValueError("band bounds need one entry per nominal node")
        if np.any(lo > 0) or np.any(hi < 0):
            raise ValueError("band must contain the nominal profile (lower <= 0 <= upper)")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def width(self):
        return self.upper - self.lower

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node", "x", "y", "lower", "upper"])
        for k, ((x, y), lo, hi) in enumerate(zip(self.nominal.nodes, self.lower, self.upper)):
            w.writerow([k, repr(float(x)), repr(float(y)), repr(float(lo)), repr(float(hi))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path, nominal):
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh)][1:]
        data = np.array([[float(v) for v in r[3:5]] for r in rows if r])
        return cls(nominal, data[:, 0], data[:, 1])


def build_band(displacements, nominal, quantile=1.0, source=None):
    """Per-node ``(1 - q, q)`` empirical quantiles of the ensemble's normal displacements.

    ``displacements`` holds one row per ensemble member. The zero
    displacement of the nominal profile is always included, so the band
    contains the nominal profile.
    """
    D = np.atleast_2d(np.asarray(displacements, dtype=float))
    if D.size == 0 or D.shape[0] == 0:
        raise ValueError("cannot build a band from an empty ensemble")
    if not 0.5 < quantile <= 1.0:
        raise ValueError(f"quantile must lie in (0.5, 1], got {quantile}")
    if D.shape[1] != nominal.n_nodes:
        raise ValueError(f"displacements have {D.shape[1]} nodes, nominal has {nominal.n_nodes}")
    D = np.vstack([D, np.zeros(D.shape[1])])
    lo = np.quantile(D, 1.0 - quantile, axis=0)
    hi = np.quantile(D, quantile, axis=0)
    return EnvelopeBand(nominal, np.minimum(lo, 0.0), np.maximum(hi, 0.0), dict(source or {}))


@dataclass(frozen=True)
class LogisticFit:
    slope: float
    intercept: float
    separable: bool
    n_iter: int
    converged: bool

    @property
    def boundary(self):
        """Distance at which the accept probability is one half."""
        return -self.intercept / self.slope if self.slope != 0 else np.inf

    def probability(self, distances):
        return expit(self.slope * np.asarray(distances, dtype=float) + self.intercept)


def _loglik(eta, y):
    return float(np.sum(y * log_expit(eta) + (1 - y) * log_expit(-eta)))


def _fit_intercept(d, y, slope):
    """Maximum-likelihood intercept for a fixed slope (root of a monotone score)."""

    def score(b):
        return float(np.sum(y - expit(slope * d + b)))

    lo, hi = -abs(slope) * (np.max(np.abs(d)) + 1.0), abs(slope) * (np.max(np.abs(d)) + 1.0)
    while score(lo) < 0:
        lo *= 2.0
    while score(hi) > 0:
        hi *= 2.0
    return brentq(score, lo, hi, xtol=1e-12 * max(1.0, abs(hi)), rtol=4 * np.finfo(float).eps, maxiter=500)


def train_logistic(distances, labels, slope_cap=SLOPE_CAP, max_iter=MAX_NEWTON, tol=GRAD_TOL):
    """One-dimensional logistic regression of accept labels on distance.

    Newton's method with step halving on the standardized distance; the
    gradient norm of the log-likelihood must fall below ``tol``. When the
    classes are perfectly separated the slope is pinned to ``slope_cap``
    in magnitude and only the intercept is optimized.
    """
    d = np.asarray(distances, dtype=float).ravel()
    y = np.asarray(labels, dtype=float).ravel()
    if d.shape != y.shape:
        raise ValueError("distances and labels differ in length")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 (reject) or 1 (accept)")
    if y.min() == y.max():
        raise ValueError("labels contain a single class; need both accept and reject examples")
    acc, rej = d[y == 1], d[y == 0]
    if acc.max() < rej.min() or acc.min() > rej.max():
        slope = -slope_cap if acc.max() < rej.min() else slope_cap
        return LogisticFit(slope, _fit_intercept(d, y, slope), True, 0, True)

    mu, sd = d.mean(), d.std()
    z = (d - mu) / sd
    X = np.column_stack([np.ones_like(z), z])
    beta = np.zeros(2)
    ll = _loglik(X @ beta, y)
    converged = False
    for it in range(1, max_iter + 1):
        p = expit(X @ beta)
        grad = X.T @ (y - p)
        if np.linalg.norm(grad) <= tol:
            converged = True
            break
        hess = (X * (p * (1 - p))[:, None]).T @ X
        step = np.linalg.solve(hess + 1e-12 * np.eye(2), grad)
        t = 1.0
        while t > 1e-10:
            trial = beta + t * step
            ll_trial = _loglik(X @ trial, y)
            if ll_trial >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        beta, ll = trial, ll_trial
    else:
        p = expit(X @ beta)
        converged = np.linalg.norm(X.T @ (y - p)) <= tol
        it = max_iter
    slope = beta[1] / sd
    intercept = beta[0] - beta[1] * mu / sd
    if abs(slope) > slope_cap:
        slope = float(np.sign(slope) * slope_cap)
        intercept = _fit_intercept(d, y, slope)
    return LogisticFit(float(slope), float(intercept), False, int(it), bool(converged))


@dataclass(frozen=True)
class DecisionModel:
    """Ensemble statistics of surface displacement plus the trained logistic."""

    mean_displacement: np.ndarray
    covariance: np.ndarray
    ridge: float
    logistic: LogisticFit = None
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        mu = np.array(self.mean_displacement, dtype=float, copy=True)
        S = np.array(self.covariance, dtype=float, copy=True)
        if S.shape != (mu.size, mu.size):
            raise ValueError("covariance shape does not match the mean")
        try:
            L = np.linalg.cholesky(S + self.ridge * np.eye(mu.size))
        except np.linalg.LinAlgError as exc:
            raise SingularCovarianceError("regularized displacement covariance is not positive definite") from exc
        for a in (mu, S, L):
            a.setflags(write=False)
        object.__setattr__(self, "mean_displacement", mu)
        object.__setattr__(self, "covariance", S)
        object.__setattr__(self, "_chol", L)

    @property
    def n_nodes(self):
        return self.mean_displacement.size

    @property
    def trained(self):
        return self.logistic is not None

    @property
    def logistic_slope(self):
        return None if self.logistic is None else self.logistic.slope

    @property
    def logistic_intercept(self):
        return None if self.logistic is None else self.logistic.intercept

    @property
    def threshold_distance(self):
        return None if self.logistic is None else self.logistic.boundary

    def distances(self, D):
        """Mahalanobis distances of displacement rows from the ensemble mean."""
        D = np.atleast_2d(np.asarray(D, dtype=float))
        if D.shape[1] != self.n_nodes:
            raise ValueError(f"node count mismatch: {D.shape[1]} vs {self.n_nodes}")
        Y = scipy.linalg.solve_triangular(self._chol, (D - self.mean_displacement).T, lower=True)
        return np.sqrt(np.sum(Y**2, axis=0))

    def with_logistic(self, fit):
        return replace(self, logistic=fit)

    def to_dict(self):
        lg = None
        if self.logistic is not None:
            lg = {
                "slope": self.logistic.slope,
                "intercept": self.logistic.intercept,
                "separable": self.logistic.separable,
                "n_iter": self.logistic.n_iter,
                "converged": self.logistic.converged,
                "threshold_distance": self.logistic.boundary,
            }
        return {
            "mean_displacement": self.mean_displacement.tolist(),
            "covariance": matrix_to_dict(self.covariance),
            "ridge": self.ridge,
            "logistic": lg,
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_dict(cls, payload):
        lg = payload.get("logistic")
        fit = None
        if lg is not None:
            fit = LogisticFit(lg["slope"], lg["intercept"], lg["separable"], lg["n_iter"], lg["converged"])
        return cls(
            np.asarray(payload["mean_displacement"]),
            matrix_from_dict(payload["covariance"]),
            float(payload["ridge"]),
            fit,
            dict(payload.get("provenance", {})),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_decision_model(displacements, ridge_scale=RIDGE_SCALE, provenance=None):
    """Ensemble mean and covariance with a ridge of ``ridge_scale * trace / N``."""
    D = np.atleast_2d(np.asarray(displacements, dtype=float))
    if D.shape[0] < 2:
        raise ValueError("need at least two ensemble members for a covariance")
    S = np.cov(D, rowvar=False)
    N = D.shape[1]
    ridge = ridge_scale * np.trace(S) / N
    if ridge <= 0:
        ridge = ridge_scale
    return DecisionModel(D.mean(axis=0), S, float(ridge), None, dict(provenance or {}))


def _displacement_of(model, profile, nominal):
    if isinstance(profile, BladeProfile):
        if nominal is None:
            raise ValueError("need the nominal profile to measure a BladeProfile")
        if profile.n_nodes != model.n_nodes:
            raise ValueError(f"node count mismatch: {profile.n_nodes} vs {model.n_nodes}")
        return nominal.signed_displacement(profile)
    disp = np.asarray(profile, dtype=float)
    if disp.shape[-1] != model.n_nodes:
        raise ValueError(f"node count mismatch: {disp.shape[-1]} vs {model.n_nodes}")
    return disp


def geometric_mahalanobis(model, profile, nominal=None):
    """Distance of a test profile (or its displacement vector) from the ensemble."""
    return float(model.distances(_displacement_of(model, profile, nominal))[0])


def output_mahalanobis(outputs, y_test, ridge=0.0):
    """``sqrt((y - mu)^T S^-1 (y - mu))`` with ``mu, S`` the mean and covariance of ``outputs``.

    ``y_test`` may hold several rows; the result then has one distance per row.
    """
    Y = np.asarray(outputs, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] < 3:
        raise ValueError("need at least three output vectors")
    mu = Y.mean(axis=0)
    S = np.atleast_2d(np.cov(Y, rowvar=False)) + ridge * np.eye(Y.shape[1])
    try:
        L = np.linalg.cholesky(S)
        if np.min(np.diag(L)) ** 2 <= 1e-14 * np.max(np.diag(S)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError("output covariance is singular; pass a positive ridge") from exc
    T = np.asarray(y_test, dtype=float)
    single = T.ndim <= 1 and (T.ndim == 0 or T.size == Y.shape[1])
    T = np.atleast_2d(T).reshape(-1, Y.shape[1])
    Z = scipy.linalg.solve_triangular(L, (T - mu).T, lower=True)
    d = np.sqrt(np.sum(Z**2, axis=0))
    return float(d[0]) if single else d


def classify(model, profile, nominal=None):
    """Accept probability and decision (``"accept"`` or ``"reject"``) for one profile."""
    if not model.trained:
        raise NotTrainedError("decision model has no trained logistic stage")
    dist = geometric_mahalanobis(model, profile, nominal)
    prob = float(model.logistic.probability(dist))
    return prob, "accept" if prob >= 0.5 else "reject"


class EnvelopeClassifier(ClassifierMixin, BaseEstimator):
    """Scrap-or-use classifier on surface displacement fields.

    The Mahalanobis metric comes from the invariant ensemble (``reference``
    in :meth:`fit`, or the accepted rows of ``X`` when omitted) and a
    one-dimensional logistic maps distance to accept probability.
    Labels are 1 for accept and 0 for reject.
    """

    def __init__(self, ridge_scale=RIDGE_SCALE, slope_cap=SLOPE_CAP):
        self.ridge_scale = ridge_scale
        self.slope_cap = slope_cap

    def fit(self, X, y, reference=None):
        X = check_array(X)
        y = np.asarray(y).astype(int)
        ref = X[y == 1] if reference is None else check_array(reference)
        model = fit_decision_model(ref, self.ridge_scale)
        fit = train_logistic(model.distances(X), y, self.slope_cap)
        if fit.separable:
            warnings.warn("accept and reject distances are perfectly separable; slope capped", RuntimeWarning)
        self.model_ = model.with_logistic(fit)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def mahalanobis(self, X):
        check_is_fitted(self, "model_")
        return self.model_.distances(check_array(X))

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return self.model_.logistic.slope * self.mahalanobis(X) + self.model_.logistic.intercept

    def predict_proba(self, X):
        p = expit(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)
