"""Input checks shared by the estimators and the functional API."""

import numpy as np
from sklearn.utils.validation import check_array

HYPERCUBE_TOL = 1e-12


def check_designs(X, n_features=None, tol=HYPERCUBE_TOL):
    """Validate a batch of design vectors lying in ``[-1, 1]^d``.

    Returns a float64 array of shape ``(n, d)``; a single 1-D vector is
    promoted to one row.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    X = check_array(X, dtype=np.float64)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} design variables, got {X.shape[1]}")
    worst = np.max(np.abs(X)) if X.size else 0.0
    if worst > 1.0 + tol:
        raise ValueError(f"design outside the hypercube [-1, 1]^d (max |x| = {worst:.6g})")
    return X


def check_design(x, n_features=None):
    return check_designs(x, n_features)[0]


def check_square(C, name="matrix"):
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"{name} must be square, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError(f"{name} contains non-finite entries")
    return C
