"""Synthetic blade geometry and flow oracle.

A closed, cambered blade-like profile is deformed along its normals by
bump functions weighted by the design variables. The flow model is
analytic and built so that its active subspaces are known exactly:

* loss ``= loss0 + a u + b u^2 + eps (v^T c)^2 / d + kappa |r|^2``
  with ``u = w_loss^T c``;
* mass flow ``= mf0 + s_fm w_fm^T c`` (affine);
* Mach distribution ``= M_nominal + A c`` with ``A`` a sum of smooth
  surface modes localized near the suction peak, the leading edge and
  two broad background regions.

Here ``c`` are the least-squares design coordinates of a surface
displacement field in the primary bump space and ``r`` is the residual
of that fit, which is zero for every design of the primary space. For a
primary design ``x`` one has ``c = x``.
"""

import csv
import io
import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from ._validation import check_design, check_designs
from .exceptions import GeometryError

DEFAULT_N_NODES = 128
DEFAULT_GAMMA = 1.4
DEFAULT_AMPLITUDE = 0.004
MAX_CAMBER = 0.10
CAMBER_POSITION = 0.40
THICKNESS = 0.20


def isentropic_mach(p_ratio, gamma=DEFAULT_GAMMA):
    """Isentropic Mach number from the stagnation-to-static pressure ratio ``p01 / p``."""
    if not gamma > 1.0:
        raise ValueError(f"gamma must exceed 1, got {gamma}")
    p = np.asarray(p_ratio, dtype=float)
    if np.any(p < 1.0) or not np.all(np.isfinite(p)):
        raise ValueError("pressure ratio p01/p must be finite and >= 1")
    # expm1 keeps full precision as p approaches 1
    M = np.sqrt(2.0 / (gamma - 1.0) * np.expm1((gamma - 1.0) / gamma * np.log(p)))
    return float(M) if M.ndim == 0 else M


def stagnation_pressure_ratio(mach, gamma=DEFAULT_GAMMA):
    """Inverse of :func:`isentropic_mach`."""
    M = np.asarray(mach, dtype=float)
    return (1.0 + 0.5 * (gamma - 1.0) * M**2) ** (gamma / (gamma - 1.0))


def _segments_intersect(P, Q, R, S):
    """Proper intersection of segments PQ and RS, vectorized over rows."""

    def orient(a, b, c):
        return (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])

    d1, d2 = orient(P, Q, R), orient(P, Q, S)
    d3, d4 = orient(R, S, P), orient(R, S, Q)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


@dataclass(frozen=True)
class BladeProfile:
    """Closed curve of surface nodes: trailing edge, suction side, leading edge, pressure side."""

    nodes: np.ndarray
    arc_fraction: np.ndarray

    def __post_init__(self):
        P = np.array(self.nodes, dtype=float, copy=True)
        s = np.array(self.arc_fraction, dtype=float, copy=True)
        if P.ndim != 2 or P.shape[1] != 2 or P.shape[0] < 64:
            raise ValueError(f"need an (N, 2) node array with N >= 64, got {P.shape}")
        if s.shape != (P.shape[0],):
            raise ValueError("arc_fraction must have one entry per node")
        P.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "nodes", P)
        object.__setattr__(self, "arc_fraction", s)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def leading_edge(self):
        return int(np.argmin(self.nodes[:, 0]))

    @property
    def suction_side(self):
        """Mask of nodes from the trailing edge to the leading edge (both included)."""
        return np.arange(self.n_nodes) <= self.leading_edge

    def normals(self):
        """Outward unit normals from central-difference tangents (nodes run counter-clockwise)."""
        t = np.roll(self.nodes, -1, axis=0) - np.roll(self.nodes, 1, axis=0)
        n = np.column_stack([t[:, 1], -t[:, 0]])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def intersecting_segments(self):
        """Pairs ``(i, j)`` of non-adjacent segments that cross."""
        N = self.n_nodes
        i, j = np.triu_indices(N, k=2)
        keep = ~((i == 0) & (j == N - 1))
        i, j = i[keep], j[keep]
        P = self.nodes
        hit = _segments_intersect(P[i], P[(i + 1) % N], P[j], P[(j + 1) % N])
        return [(int(a), int(b)) for a, b in zip(i[hit], j[hit])]

    def check(self):
        bad = self.intersecting_segments()
        if bad:
            raise GeometryError(bad)
        return self

    def signed_displacement(self, other):
        """Displacement of ``other``'s nodes along this profile's outward normals."""
        other_nodes = other.nodes if isinstance(other, BladeProfile) else np.asarray(other, dtype=float)
        if other_nodes.shape != self.nodes.shape:
            raise ValueError(f"node count mismatch: {other_nodes.shape[0]} vs {self.n_nodes}")
        return np.sum((other_nodes - self.nodes) * self.normals(), axis=1)

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node", "x", "y", "arc_fraction"])
        for k, ((x, y), s) in enumerate(zip(self.nodes, self.arc_fraction)):
            w.writerow([k, repr(float(x)), repr(float(y)), repr(float(s))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text):
        if "\n" in str(path_or_text):
            rows = list(csv.reader(io.StringIO(path_or_text)))
        else:
            with open(path_or_text, newline="") as fh:
                rows = list(csv.reader(fh))
        data = np.array([[float(v) for v in row[1:4]] for row in rows[1:] if row])
        return cls(data[:, :2], data[:, 2])


def _arc_fraction(P):
    seg = np.linalg.norm(np.diff(np.vstack([P, P[:1]]), axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)[:-1]])
    return s / seg.sum()


def generate_profile(n_nodes=DEFAULT_N_NODES, max_camber=MAX_CAMBER, camber_position=CAMBER_POSITION, thickness=THICKNESS):
    """Closed cambered profile with a sharp trailing edge and cosine node clustering.

    Node ``k`` sits at angle ``theta = 2 pi k / N`` with chordwise position
    ``(1 + cos theta) / 2``; the upper half of the angle range runs along
    the suction side from trailing to leading edge.
    """
    if n_nodes % 2 or n_nodes < 64:
        raise ValueError("n_nodes must be even and at least 64")
    theta = 2.0 * np.pi * np.arange(n_nodes) / n_nodes
    xc = 0.5 * (1.0 + np.cos(theta))
    m, p = max_camber, camber_position
    yc = np.where(xc < p, m / p**2 * (2 * p * xc - xc**2), m / (1 - p) ** 2 * (1 - 2 * p + 2 * p * xc - xc**2))
    yt = 5.0 * thickness * (0.2969 * np.sqrt(xc) - 0.1260 * xc - 0.3516 * xc**2 + 0.2843 * xc**3 - 0.1036 * xc**4)
    yt = np.maximum(yt, 0.0)
    upper = theta <= np.pi
    y = np.where(upper, yc + yt, yc - yt)
    P = np.column_stack([xc, y])
    return BladeProfile(P, _arc_fraction(P))


def nominal_profile(n_nodes=DEFAULT_N_NODES):
    """The nominal profile; the default resolution is read from the packaged data file."""
    if n_nodes == DEFAULT_N_NODES:
        text = resources.files("bladeenv").joinpath("data/nominal_profile.csv").read_text()
        return BladeProfile.from_csv(text)
    return generate_profile(n_nodes)


def _side_coordinate(profile):
    """Chordwise position in [0, 1] and side index (0 suction, 1 pressure) of every node."""
    P = profile.nodes
    x0, x1 = P[:, 0].min(), P[:, 0].max()
    t = (P[:, 0] - x0) / (x1 - x0)
    side = (~profile.suction_side).astype(int)
    return t, side


def _cosine_bumps(t, n):
    h = 1.0 / (n + 1)
    centers = h * np.arange(1, n + 1)
    z = (t[:, None] - centers[None, :]) / h
    return np.where(np.abs(z) < 1.0, np.cos(0.5 * np.pi * z) ** 2, 0.0)


def _hicks_henne_bumps(t, n, width=3.0):
    centers = np.linspace(0.0, 1.0, n + 2)[1:-1]
    tt = np.clip(t, 1e-12, 1.0 - 1e-12)[:, None]
    expo = np.log(0.5) / np.log(centers[None, :])
    out = np.sin(np.pi * tt**expo) ** width
    out[(t <= 0.0) | (t >= 1.0)] = 0.0
    return out


BUMP_FAMILIES = {"cosine": _cosine_bumps, "hicks-henne": _hicks_henne_bumps}


class BumpDeformation:
    """Normal displacement ``amplitude * sum_j x_j bump_j`` with half the bumps on each side.

    ``cosine`` bumps are compactly supported squared-cosine windows that
    form a partition of unity along the chord; ``hicks-henne`` bumps are
    the classic sine-power airfoil bumps and give a structurally
    different design space.
    """

    def __init__(self, profile, d, amplitude=DEFAULT_AMPLITUDE, family="cosine"):
        if d < 2:
            raise ValueError("need at least one bump per side (d >= 2)")
        if family not in BUMP_FAMILIES:
            raise ValueError(f"unknown bump family {family!r}; choose from {sorted(BUMP_FAMILIES)}")
        self.profile = profile
        self.d = int(d)
        self.amplitude = float(amplitude)
        self.family = family
        t, side = _side_coordinate(profile)
        n_suction = (self.d + 1) // 2
        bumps = BUMP_FAMILIES[family]
        B = np.zeros((profile.n_nodes, self.d))
        B[:, :n_suction] = bumps(t, n_suction) * (side == 0)[:, None]
        B[:, n_suction:] = bumps(t, self.d - n_suction) * (side == 1)[:, None]
        B.setflags(write=False)
        self.bumps = B
        self.normals = profile.normals()

    @property
    def matrix(self):
        """``N x d`` map from design variables to signed normal displacement."""
        return self.amplitude * self.bumps

    def displacement(self, X):
        X = check_designs(X, self.d)
        return X @ self.matrix.T

    def deform(self, x, check=True):
        x = check_design(x, self.d)
        disp = self.matrix @ x
        out = BladeProfile(self.profile.nodes + disp[:, None] * self.normals, self.profile.arc_fraction)
        return out.check() if check else out

    def support(self, j):
        """Node indices where bump ``j`` is non-zero."""
        return np.flatnonzero(self.bumps[:, j] != 0.0)


@dataclass(frozen=True)
class FlowSample:
    loss: float
    mass_flow: float
    mach_distribution: np.ndarray

    def __post_init__(self):
        M = np.array(self.mach_distribution, dtype=float, copy=True)
        if np.any(M < 0):
            raise ValueError("Mach numbers must be non-negative")
        M.setflags(write=False)
        object.__setattr__(self, "mach_distribution", M)

    @property
    def outputs(self):
        return np.array([self.loss, self.mass_flow])


def _gaussian(s, center, width):
    z = (s - center) / width
    return np.exp(-0.5 * z**2), z


def _nominal_mach(t, side):
    """Smooth turbine-like isentropic Mach shape on chordwise position ``t``."""
    suction = 0.35 + 0.45 * (1.0 - np.exp(-t / 0.06)) + 0.22 * np.exp(-0.5 * ((t - 0.62) / 0.09) ** 2) + 0.05 * t
    pressure = 0.35 + 0.10 * t + 0.45 * t**6
    return np.where(side == 0, suction, pressure)


class SyntheticFlow:
    """Analytic stand-in for the flow solver with known active structure.

    Parameters
    ----------
    deformation : BumpDeformation
        The primary design space; the flow is linear-algebraically tied
        to its bump matrix.
    seed : int
        Seeds every generator vector.
    gamma : float
        Ratio of specific heats used for the Mach/pressure conversion.
    """

    LOSS0 = 3.0
    LOSS_LINEAR = 1.0
    LOSS_QUADRATIC = 0.25
    LOSS_RESIDUAL = 1e-3
    MASS_FLOW0 = 10.0
    MASS_FLOW_SCALE = 0.1
    MACH_BOUND = 0.25

    def __init__(self, deformation, seed=0, gamma=DEFAULT_GAMMA, off_span_penalty=None):
        self.deformation = deformation
        self.seed = int(seed)
        self.gamma = float(gamma)
        d = deformation.d
        rng = np.random.default_rng(self.seed)
        self.w_loss = _unit(rng.standard_normal(d))
        self.w_mass_flow = _unit(rng.standard_normal(d))
        v = rng.standard_normal(d)
        self.v_residual = _unit(v - (v @ self.w_loss) * self.w_loss)

        profile = deformation.profile
        t, side = _side_coordinate(profile)
        s = profile.arc_fraction
        mach0 = _nominal_mach(t, side)
        self.nominal_pressure_ratio = stagnation_pressure_ratio(mach0, self.gamma)
        self.nominal_mach = isentropic_mach(self.nominal_pressure_ratio, self.gamma)
        suction = side == 0
        self.peak_node = int(np.flatnonzero(suction)[np.argmax(self.nominal_mach[suction])])
        self.le_node = profile.leading_edge
        s_peak, s_le = s[self.peak_node], s[self.le_node]

        g_peak, z_peak = _gaussian(s, s_peak, 0.035)
        g_le, z_le = _gaussian(s, s_le, 0.04)
        modes = [
            ("peak_1", 0.025 * g_peak),
            ("peak_2", 0.020 * z_peak * g_peak / 0.6065),
            ("le_1", 0.020 * g_le),
            ("le_2", 0.015 * z_le * g_le / 0.6065),
            ("le_3", 0.012 * (z_le**2 - 1.0) * g_le),
            ("le_4", 0.009 * (z_le**3 - 3.0 * z_le) * g_le / 1.3801),
            ("background_1", 0.004 * _gaussian(s, 0.75, 0.05)[0]),
            ("background_2", 0.004 * _gaussian(s, 0.90, 0.05)[0]),
        ]
        self.mode_names = [m[0] for m in modes]
        self.mode_shapes = np.column_stack([m[1] for m in modes])
        self.mode_directions = np.column_stack([_unit(rng.standard_normal(d)) for _ in modes])
        self.mach_matrix = self.mode_shapes @ self.mode_directions.T
        worst = np.abs(self.mode_shapes) @ np.sum(np.abs(self.mode_directions), axis=0)
        if np.max(worst) > self.MACH_BOUND or np.min(self.nominal_mach - worst) < 0:
            raise ValueError("Mach modes can drive the distribution negative; reduce their amplitude")

        B = deformation.matrix
        self._gram_inv_bt = np.linalg.solve(B.T @ B, B.T)
        self.off_span_penalty = float(off_span_penalty) if off_span_penalty is not None else self.default_penalty()

    def default_penalty(self):
        """Loss penalty per unit squared off-span displacement.

        Scaled so that an off-span displacement with the RMS size of a
        typical primary deformation costs as much loss as a unit change
        of the loss active coordinate.
        """
        rms = self.deformation.amplitude * np.sqrt(np.mean(self.deformation.bumps**2) * self.deformation.d / 3.0)
        return self.LOSS_LINEAR / (rms**2 * self.deformation.profile.n_nodes)

    def coordinates(self, D):
        """Least-squares primary design coordinates and off-span residual norms of displacement rows."""
        D = np.atleast_2d(np.asarray(D, dtype=float))
        C = D @ self._gram_inv_bt.T
        R = D - C @ self.deformation.matrix.T
        return C, np.sum(R**2, axis=1)

    def _from_coordinates(self, C, r2):
        d = self.deformation.d
        u = C @ self.w_loss
        loss = (
            self.LOSS0
            + self.LOSS_LINEAR * u
            + self.LOSS_QUADRATIC * u**2
            + self.LOSS_RESIDUAL * (C @ self.v_residual) ** 2 / d
            + self.off_span_penalty * r2
        )
        mass_flow = self.MASS_FLOW0 + self.MASS_FLOW_SCALE * (C @ self.w_mass_flow)
        mach = self.nominal_mach[None, :] + C @ self.mach_matrix.T
        return loss, mass_flow, np.maximum(mach, 0.0)

    def evaluate(self, x):
        x = check_design(x, self.deformation.d)
        loss, mf, mach = self._from_coordinates(x[None, :], np.zeros(1))
        return FlowSample(float(loss[0]), float(mf[0]), mach[0])

    def evaluate_batch(self, X):
        """Arrays ``loss (n,)``, ``mass_flow (n,)`` and ``mach (n, N)`` for primary designs."""
        X = check_designs(X, self.deformation.d)
        loss, mf, mach = self._from_coordinates(X, np.zeros(X.shape[0]))
        return {"loss": loss, "mass_flow": mf, "mach": mach}

    def evaluate_displacements(self, D):
        """Outputs for arbitrary normal-displacement fields on the nominal nodes."""
        C, r2 = self.coordinates(D)
        loss, mf, mach = self._from_coordinates(C, r2)
        return {"loss": loss, "mass_flow": mf, "mach": mach}

    def loss_ridge(self, u):
        return self.LOSS_LINEAR * u + self.LOSS_QUADRATIC * u**2

    @property
    def mass_flow_coefficients(self):
        return self.MASS_FLOW_SCALE * self.w_mass_flow

    def generators(self):
        return {
            "seed": self.seed,
            "gamma": self.gamma,
            "w_loss": self.w_loss.tolist(),
            "w_mass_flow": self.w_mass_flow.tolist(),
            "v_residual": self.v_residual.tolist(),
            "loss": {
                "offset": self.LOSS0,
                "linear": self.LOSS_LINEAR,
                "quadratic": self.LOSS_QUADRATIC,
                "residual": self.LOSS_RESIDUAL,
                "off_span_penalty": self.off_span_penalty,
                "form": "offset + linear*u + quadratic*u^2 + residual*(v.c)^2/d + off_span_penalty*|r|^2, u = w_loss.c",
            },
            "mass_flow": {"offset": self.MASS_FLOW0, "coefficients": self.mass_flow_coefficients.tolist()},
            "mach": {
                "nominal": self.nominal_mach.tolist(),
                "nominal_pressure_ratio": self.nominal_pressure_ratio.tolist(),
                "matrix": {"rows": self.mach_matrix.shape[0], "cols": self.mach_matrix.shape[1],
                           "data": self.mach_matrix.ravel().tolist()},
                "modes": self.mode_names,
                "peak_node": self.peak_node,
                "leading_edge_node": self.le_node,
            },
        }


class SyntheticBladeOracle:
    """Nominal profile, primary bump space and synthetic flow bundled together."""

    def __init__(self, d=20, n_nodes=DEFAULT_N_NODES, seed=0, amplitude=DEFAULT_AMPLITUDE, gamma=DEFAULT_GAMMA):
        self.profile = nominal_profile(n_nodes)
        self.deformation = BumpDeformation(self.profile, d, amplitude)
        self.flow = SyntheticFlow(self.deformation, seed=seed, gamma=gamma)

    @property
    def d(self):
        return self.deformation.d

    @property
    def n_nodes(self):
        return self.profile.n_nodes

    def deform(self, x, check=True):
        return self.deformation.deform(x, check)

    def evaluate_flow(self, x):
        return self.flow.evaluate(x)

    def evaluate_batch(self, X):
        return self.flow.evaluate_batch(X)

    def export(self, path=None):
        payload = {
            "d": self.d,
            "n_nodes": self.n_nodes,
            "amplitude": self.deformation.amplitude,
            "bump_family": self.deformation.family,
            "flow": self.flow.generators(),
        }
        if path is not None:
            with open(path, "w") as fh:
                json.dump(payload, fh, indent=1, sort_keys=True)
        return payload


def _unit(v):
    return v / np.linalg.norm(v)
