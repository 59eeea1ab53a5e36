"""Dense linear algebra for subspace work.

Orthonormal bases, symmetric PSD eigendecomposition, numerical rank and
the QR recipe that intersects several inactive subspaces.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import NoActiveDirectionsError, NotSymmetricError, NumericalError, TrivialIntersectionError

ORTHONORMAL_TOL = 1e-10
SYMMETRY_TOL = 1e-10
PSD_CLAMP_TOL = 1e-12
GAP_FLOOR = 1e-14
RANK_TOL = 1e-8


def _readonly(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class OrthonormalBasis:
    """A ``d x k`` matrix with orthonormal columns."""

    columns: np.ndarray
    tol: float = field(default=ORTHONORMAL_TOL, repr=False, compare=False)

    def __post_init__(self):
        Q = np.asarray(self.columns, dtype=float)
        if Q.ndim == 1:
            Q = Q[:, None]
        if Q.ndim != 2:
            raise ValueError("basis columns must form a 2-D array")
        d, k = Q.shape
        if not 1 <= k <= d:
            raise ValueError(f"need 1 <= k <= d, got d={d}, k={k}")
        err = np.max(np.abs(Q.T @ Q - np.eye(k)))
        if err > self.tol:
            raise NumericalError(f"columns are not orthonormal (max |Q^T Q - I| = {err:.3e})")
        object.__setattr__(self, "columns", _readonly(Q))

    @property
    def ambient_dim(self):
        return self.columns.shape[0]

    @property
    def subspace_dim(self):
        return self.columns.shape[1]

    @property
    def projector(self):
        return self.columns @ self.columns.T

    def coordinates(self, X):
        """Coordinates ``Q^T x`` of each row of ``X``."""
        return np.asarray(X, dtype=float) @ self.columns

    @classmethod
    def from_vectors(cls, vectors):
        """Orthonormalize arbitrary (full column rank) vectors by QR."""
        A = np.asarray(vectors, dtype=float)
        if A.ndim == 1:
            A = A[:, None]
        Q, R = np.linalg.qr(A)
        if np.min(np.abs(np.diag(R))) <= RANK_TOL * max(np.max(np.abs(R)), GAP_FLOOR):
            raise NumericalError("vectors are linearly dependent")
        return cls(fix_signs(Q))

    def to_dict(self):
        return matrix_to_dict(self.columns)

    @classmethod
    def from_dict(cls, payload):
        return cls(matrix_from_dict(payload))


@dataclass(frozen=True)
class SubspacePair:
    """Active/inactive split of a design space plus the spectrum it came from.

    Normally ``[W | V]`` is a ``d x d`` orthonormal matrix. A split computed
    inside a subspace of dimension ``k < d`` has ``k`` eigenvalues and
    ``[W | V]`` orthonormal columns spanning only that subspace.
    """

    active: OrthonormalBasis
    inactive: OrthonormalBasis
    eigenvalues: np.ndarray

    def __post_init__(self):
        lam = _readonly(self.eigenvalues)
        object.__setattr__(self, "eigenvalues", lam)
        d = self.active.ambient_dim
        k = self.active.subspace_dim + self.inactive.subspace_dim
        if self.inactive.ambient_dim != d or lam.shape != (k,) or k > d:
            raise ValueError("active, inactive and eigenvalues disagree on dimensions")
        if np.any(np.diff(lam) > 0):
            raise ValueError("eigenvalues must be sorted in descending order")
        full = np.hstack([self.active.columns, self.inactive.columns])
        err = np.max(np.abs(full.T @ full - np.eye(k)))
        if err > 1e-9:
            raise NumericalError(f"[W | V] is not orthonormal (error {err:.3e})")

    @property
    def spans_design_space(self):
        return self.eigenvalues.size == self.active.ambient_dim

    @property
    def gap_index(self):
        return self.active.subspace_dim

    @property
    def W(self):
        return self.active.columns

    @property
    def V(self):
        return self.inactive.columns

    def to_dict(self):
        return {
            "active": self.active.to_dict(),
            "inactive": self.inactive.to_dict(),
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "gap_index": int(self.gap_index),
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            OrthonormalBasis.from_dict(payload["active"]),
            OrthonormalBasis.from_dict(payload["inactive"]),
            np.asarray(payload["eigenvalues"], dtype=float),
        )


def fix_signs(Q):
    """Flip columns so the first non-negligible entry of each is positive."""
    Q = np.array(Q, dtype=float, copy=True)
    for j in range(Q.shape[1]):
        col = Q[:, j]
        scale = np.max(np.abs(col))
        if scale == 0.0:
            continue
        i = np.argmax(np.abs(col) > 1e-12 * scale)
        if col[i] < 0:
            Q[:, j] = -col
    return Q


def eigendecompose_spsd(C, sym_tol=SYMMETRY_TOL):
    """Eigendecomposition of a symmetric positive semi-definite matrix.

    Returns ``(eigenvalues, basis)`` with eigenvalues in descending order and
    eigenvectors as the columns of an :class:`OrthonormalBasis`. Tiny
    negative eigenvalues produced by round-off are clamped to zero.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {C.shape}")
    scale = max(1.0, float(np.max(np.abs(C))))
    asym = float(np.max(np.abs(C - C.T)))
    if asym > sym_tol * scale:
        raise NotSymmetricError(asym)
    lam, Q = np.linalg.eigh(0.5 * (C + C.T))
    lam, Q = lam[::-1], Q[:, ::-1]
    clamp = PSD_CLAMP_TOL * max(1.0, abs(lam[0]))
    if lam[-1] < -clamp:
        raise NumericalError(f"matrix is not positive semi-definite (min eigenvalue {lam[-1]:.3e})")
    lam = np.where(lam < 0.0, 0.0, lam)
    return lam, OrthonormalBasis(fix_signs(Q))


def select_gap(eigenvalues, min_ratio=1.0, floor=GAP_FLOOR):
    """Index ``r`` of the largest ratio ``lambda[r-1] / lambda[r]``.

    Raises :class:`NoActiveDirectionsError` if every eigenvalue is below
    ``floor`` or if the best ratio is smaller than ``min_ratio``.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.ndim != 1 or lam.size < 2:
        raise ValueError("need at least two eigenvalues")
    if np.any(np.diff(lam) > 0):
        raise ValueError("eigenvalues must be sorted in descending order")
    if lam[0] < floor:
        raise NoActiveDirectionsError("all eigenvalues are numerically zero")
    ratios = lam[:-1] / np.maximum(lam[1:], floor)
    r = int(np.argmax(ratios)) + 1
    if ratios[r - 1] < min_ratio:
        raise NoActiveDirectionsError(
            f"largest eigenvalue gap {ratios[r - 1]:.3g} at r={r} is below min_ratio={min_ratio:g}"
        )
    return r


def numerical_rank(A, rank_tol=RANK_TOL):
    """Number of singular values above ``rank_tol`` times the largest one."""
    s = np.linalg.svd(np.atleast_2d(A), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def _as_columns(basis):
    if isinstance(basis, OrthonormalBasis):
        return basis.columns
    A = np.asarray(basis, dtype=float)
    return A[:, None] if A.ndim == 1 else A


def intersect_inactive(active_bases, rank_tol=RANK_TOL):
    """Basis for the intersection of the inactive subspaces of several objectives.

    The active bases are stacked into ``W_both``; a column-pivoted QR
    factorization of ``W_both`` gives ``Q`` whose trailing ``d - rank``
    columns span the orthogonal complement of all active subspaces
    together. The rank is read from the singular values so duplicated or
    nearly parallel active directions are handled.
    """
    blocks = [_as_columns(b) for b in active_bases]
    if not blocks:
        raise ValueError("need at least one active basis")
    dims = {b.shape[0] for b in blocks}
    if len(dims) != 1:
        raise ValueError(f"active bases disagree on the ambient dimension: {sorted(dims)}")
    (d,) = dims
    W_both = np.hstack(blocks)
    if W_both.shape[1] == 0:
        raise ValueError("combined column count must be at least 1")
    rank = numerical_rank(W_both, rank_tol)
    if rank >= d:
        raise TrivialIntersectionError(
            f"active subspaces span all {d} dimensions; the intersection contains only the zero vector"
        )
    Q, _, _ = scipy.linalg.qr(W_both, mode="full", pivoting=True)
    return OrthonormalBasis(fix_signs(Q[:, rank:]))


def orthogonal_complement(basis, rank_tol=RANK_TOL):
    return intersect_inactive([basis], rank_tol)


def subspace_distance(A, B):
    """Spectral norm of the difference of the orthogonal projectors onto two subspaces."""
    QA, QB = _as_columns(A), _as_columns(B)
    return float(np.linalg.norm(QA @ QA.T - QB @ QB.T, 2))


def matrix_to_dict(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return {"rows": int(M.shape[0]), "cols": int(M.shape[1]), "data": [float(v) for v in M.ravel(order="C")]}


def matrix_from_dict(payload):
    rows, cols = int(payload["rows"]), int(payload["cols"])
    data = np.asarray(payload["data"], dtype=float)
    if data.size != rows * cols:
        raise ValueError(f"matrix payload has {data.size} entries, expected {rows}x{cols}")
    return data.reshape(rows, cols)
