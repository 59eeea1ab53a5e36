"""Hit-and-run sampling of designs with prescribed active coordinates.

Designs are written ``x = sum_i W_i u_i + V z`` where the blocks ``W_i``
and the inactive basis ``V`` together form an orthonormal basis of the
design space. The chain moves in ``z`` and stays inside ``[-1, 1]^d``.
"""

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from ._validation import HYPERCUBE_TOL, check_design
from .exceptions import EmptySliceError, NumericalError
from .linalg import OrthonormalBasis, intersect_inactive

DEFAULT_BURN_IN = 1000
DEFAULT_THINNING = 10
EQUALITY_TOL = 1e-9
MIN_CHORD = 1e-12
STUCK_LIMIT = 100


@dataclass(frozen=True)
class ActiveBlock:
    label: str
    basis: OrthonormalBasis
    target: np.ndarray

    def __post_init__(self):
        u = np.array(self.target, dtype=float, copy=True).ravel()
        if u.size != self.basis.subspace_dim:
            raise ValueError(f"block {self.label!r}: target has {u.size} entries, basis has {self.basis.subspace_dim} columns")
        u.setflags(write=False)
        object.__setattr__(self, "target", u)


@dataclass(frozen=True)
class ActiveCoordinateSpec:
    """Ordered active blocks plus the inactive basis completing them."""

    blocks: tuple
    inactive: OrthonormalBasis

    def __post_init__(self):
        blocks = tuple(self.blocks)
        object.__setattr__(self, "blocks", blocks)
        labels = [b.label for b in blocks]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate block labels: {labels}")
        d = self.inactive.ambient_dim
        if any(b.basis.ambient_dim != d for b in blocks):
            raise ValueError("blocks and inactive basis disagree on the design dimension")
        D = self.matrix
        if D.shape[1] != d:
            raise ValueError(f"blocks and inactive basis have {D.shape[1]} columns in total, need {d}")
        err = np.max(np.abs(D.T @ D - np.eye(d)))
        if err > 1e-9:
            raise NumericalError(f"[W_1 ... W_n V] is not orthonormal (error {err:.3e})")

    @classmethod
    def from_blocks(cls, blocks, d=None):
        """Complete the blocks with the orthogonal complement of their span."""
        blocks = [b if isinstance(b, ActiveBlock) else ActiveBlock(*b) for b in blocks]
        if not blocks:
            if d is None:
                raise ValueError("need d when there are no active blocks")
            return cls((), OrthonormalBasis(np.eye(d)))
        V = intersect_inactive([b.basis for b in blocks])
        return cls(tuple(blocks), V)

    @property
    def ambient_dim(self):
        return self.inactive.ambient_dim

    @property
    def matrix(self):
        """The square matrix ``D = [W_1 ... W_n V]``."""
        return np.hstack([b.basis.columns for b in self.blocks] + [self.inactive.columns])

    @property
    def labels(self):
        return [b.label for b in self.blocks]

    def block(self, label):
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    def anchor(self):
        """``sum_i W_i u_i``, the design with all inactive coordinates zero."""
        x = np.zeros(self.ambient_dim)
        for b in self.blocks:
            x += b.basis.columns @ b.target
        return x

    def with_targets(self, targets):
        """Copy with some block targets replaced, ``targets`` mapping label to values."""
        blocks = [ActiveBlock(b.label, b.basis, targets.get(b.label, b.target)) for b in self.blocks]
        return ActiveCoordinateSpec(tuple(blocks), self.inactive)

    def residuals(self, X):
        """Max over blocks of ``|W_i^T x - u_i|`` for each row of ``X``."""
        X = np.atleast_2d(X)
        out = np.zeros(X.shape[0])
        for b in self.blocks:
            out = np.maximum(out, np.max(np.abs(X @ b.basis.columns - b.target), axis=1))
        return out

    def to_dict(self):
        return {
            "blocks": [{"label": b.label, "basis": b.basis.to_dict(), "target": b.target.tolist()} for b in self.blocks],
            "inactive": self.inactive.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload):
        blocks = [ActiveBlock(b["label"], OrthonormalBasis.from_dict(b["basis"]), b["target"]) for b in payload["blocks"]]
        return cls(tuple(blocks), OrthonormalBasis.from_dict(payload["inactive"]))


@dataclass(frozen=True)
class SampleEnsemble:
    """Designs emitted by one hit-and-run chain."""

    designs: np.ndarray
    spec: ActiveCoordinateSpec
    seed: int
    burn_in: int
    thinning: int

    def __post_init__(self):
        X = np.array(self.designs, dtype=float, copy=True)
        if X.ndim != 2 or X.shape[1] != self.spec.ambient_dim:
            raise ValueError("designs must be an (h, d) array matching the spec")
        if X.size:
            worst = np.max(np.abs(X))
            if worst > 1.0 + HYPERCUBE_TOL:
                raise NumericalError(f"sample left the hypercube (max |x| = {worst!r})")
            res = np.max(self.spec.residuals(X))
            if res > EQUALITY_TOL:
                raise NumericalError(f"sample violates active-coordinate targets by {res:.3e}")
        X.setflags(write=False)
        object.__setattr__(self, "designs", X)

    def __len__(self):
        return self.designs.shape[0]

    def mean(self):
        return self.designs.mean(axis=0)

    def covariance(self):
        return np.cov(self.designs, rowvar=False)

    def to_csv(self, path):
        np.savetxt(path, self.designs, delimiter=",", fmt="%.17g")

    def sidecar(self):
        return {
            "n_samples": len(self),
            "seed": self.seed,
            "burn_in": self.burn_in,
            "thinning": self.thinning,
            "spec": self.spec.to_dict(),
        }

    def save(self, csv_path, json_path):
        self.to_csv(csv_path)
        with open(json_path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, csv_path, json_path):
        with open(json_path) as fh:
            meta = json.load(fh)
        spec = ActiveCoordinateSpec.from_dict(meta["spec"])
        X = np.loadtxt(csv_path, delimiter=",", ndmin=2).reshape(-1, spec.ambient_dim)
        return cls(X, spec, meta["seed"], meta["burn_in"], meta["thinning"])


def _interior_point(x0, V):
    """Inactive coordinates of a point deep inside the slice, or an :class:`EmptySliceError`."""
    d, k = V.shape
    if np.max(np.abs(x0)) < 1.0 - 1e-9:
        return np.zeros(k)
    # maximize the margin t subject to -1 + t <= x0 + V z <= 1 - t
    c = np.zeros(k + 1)
    c[-1] = -1.0
    ones = np.ones((d, 1))
    A = np.vstack([np.hstack([V, ones]), np.hstack([-V, ones])])
    b = np.concatenate([1.0 - x0, 1.0 + x0])
    res = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * k + [(None, 1.0)], method="highs")
    if res.status != 0 or -res.fun <= MIN_CHORD:
        i = int(np.argmax(np.abs(x0)))
        raise EmptySliceError(
            f"active-coordinate targets leave no interior design: at zero inactive coordinates "
            f"x[{i}] = {x0[i]:.6g} violates |x| <= 1 and no inactive shift restores feasibility"
        )
    return res.x[:k]


def _chord(x, dx):
    """Feasible interval of ``t`` such that ``-1 <= x + t dx <= 1``."""
    pos, neg = dx > 0, dx < 0
    hi = np.inf
    lo = -np.inf
    if pos.any():
        hi = min(hi, np.min((1.0 - x[pos]) / dx[pos]))
        lo = max(lo, np.max((-1.0 - x[pos]) / dx[pos]))
    if neg.any():
        hi = min(hi, np.min((-1.0 - x[neg]) / dx[neg]))
        lo = max(lo, np.max((1.0 - x[neg]) / dx[neg]))
    return lo, hi


def hit_and_run(spec, h, seed=0, burn_in=DEFAULT_BURN_IN, thinning=DEFAULT_THINNING):
    """Draw ``h`` designs approximately uniformly from the slice described by ``spec``.

    Each step picks a uniform random direction in inactive coordinates,
    intersects the line with the hypercube exactly and jumps to a uniform
    point on that chord. The first ``burn_in`` steps are discarded and
    every ``thinning``-th state after that is kept.
    """
    if h < 0 or burn_in < 0 or thinning < 1:
        raise ValueError("need h >= 0, burn_in >= 0 and thinning >= 1")
    V = spec.inactive.columns
    k = V.shape[1]
    x0 = spec.anchor()
    z = _interior_point(x0, V)
    rng = np.random.default_rng(seed)
    out = np.empty((h, spec.ambient_dim))
    stuck = 0
    kept = 0
    step = 0
    x = x0 + V @ z
    while kept < h:
        direction = rng.standard_normal(k)
        direction /= np.linalg.norm(direction)
        lo, hi = _chord(x, V @ direction)
        if hi - lo < MIN_CHORD:
            stuck += 1
            if stuck == STUCK_LIMIT:
                warnings.warn(f"hit-and-run chain stuck: {STUCK_LIMIT} consecutive degenerate chords", RuntimeWarning)
        else:
            stuck = 0
            z = z + rng.uniform(lo, hi) * direction
            x = x0 + V @ z
        step += 1
        if step > burn_in and (step - burn_in) % thinning == 0:
            out[kept] = x
            kept += 1
    return SampleEnsemble(out, spec, seed, burn_in, thinning)


def set_active_coordinates(x_base, spec):
    """Overwrite the active coordinates of ``x_base`` with the spec's targets.

    Returns ``(x, inside)`` where ``x = sum_i W_i u_i + V V^T x_base`` and
    ``inside`` tells whether ``x`` still lies in the hypercube.
    """
    x_base = check_design(x_base, spec.ambient_dim)
    V = spec.inactive.columns
    x = spec.anchor() + V @ (V.T @ x_base)
    inside = bool(np.max(np.abs(x)) <= 1.0 + HYPERCUBE_TOL)
    return x, inside
