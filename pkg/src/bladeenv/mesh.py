"""Wavefront OBJ export of a lofted blade envelope.

The nominal profile and the inner/outer envelope curves are each extruded
over the span and capped at both ends, giving closed triangulated
surfaces. Iso-displacement contours are written as closed polylines on
the top cap plane.
"""

import os
import tempfile
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .exceptions import GeometryError
from .oracle import BladeProfile

DEGENERATE_TOL = 1e-15


@dataclass
class MeshObject:
    name: str
    vertices: np.ndarray
    faces: np.ndarray = None
    lines: list = field(default_factory=list)


@dataclass(frozen=True)
class MeshSummary:
    path: str
    vertex_count: int
    face_count: int
    objects: tuple
    warnings: tuple = ()

    def to_dict(self):
        return {
            "vertex_count": self.vertex_count,
            "face_count": self.face_count,
            "objects": list(self.objects),
            "warnings": list(self.warnings),
        }


def _cross2(o, a, b):
    return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (a[..., 1] - o[..., 1]) * (b[..., 0] - o[..., 0])


def signed_area(P):
    x, y = P[:, 0], P[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def triangulate_polygon(P):
    """Ear-clipping triangulation of a simple polygon; triangles are counter-clockwise."""
    P = np.asarray(P, dtype=float)
    idx = list(range(len(P)))
    if signed_area(P) < 0:
        idx.reverse()
    tris = []
    guard = 0
    while len(idx) > 3:
        n = len(idx)
        for k in range(n):
            i, j, l = idx[k - 1], idx[k], idx[(k + 1) % n]
            if _cross2(P[i], P[j], P[l]) <= DEGENERATE_TOL:
                continue
            others = np.array([m for m in idx if m not in (i, j, l)])
            if others.size:
                Q = P[others]
                inside = (
                    (_cross2(P[i], P[j], Q) >= 0) & (_cross2(P[j], P[l], Q) >= 0) & (_cross2(P[l], P[i], Q) >= 0)
                )
                if inside.any():
                    continue
            tris.append((i, j, l))
            del idx[k]
            break
        else:
            guard += 1
            if guard > 2:
                raise GeometryError([("ear clipping found no ear", len(idx))])
            # collinear vertices only: drop the flattest one
            areas = [abs(_cross2(P[idx[k - 1]], P[idx[k]], P[idx[(k + 1) % n]])) for k in range(n)]
            del idx[int(np.argmin(areas))]
    tris.append(tuple(idx))
    return np.array(tris, dtype=int)


def loft(curve, span, scale=1.0, cap=None):
    """Closed surface: ``curve`` extruded from ``z = 0`` to ``z = span`` with both ends capped.

    Returns ``(vertices, faces)`` with outward-facing triangles and
    zero-based indices. ``cap`` reuses a triangulation of another curve
    with the same node order (an offset curve need not be simple).
    """
    C = np.asarray(curve, dtype=float)
    if cap is None and signed_area(C) < 0:
        C = C[::-1]
    n = len(C)
    bottom = np.column_stack([C, np.zeros(n)])
    top = np.column_stack([C, np.full(n, float(span))])
    V = np.vstack([bottom, top]) * scale
    faces = []
    for i in range(n):
        j = (i + 1) % n
        faces.append((i, j, n + j))
        faces.append((i, n + j, n + i))
    if cap is None:
        cap = triangulate_polygon(C)
    faces.extend((c, b, a) for a, b, c in cap)
    faces.extend((n + a, n + b, n + c) for a, b, c in cap)
    return V, np.array(faces, dtype=int)


def edge_counts(faces):
    return Counter(tuple(sorted((int(f[a]), int(f[b])))) for f in faces for a, b in ((0, 1), (1, 2), (2, 0)))


def is_watertight(faces):
    """Every edge is shared by exactly two faces, with opposite orientations."""
    if len(faces) == 0:
        return False
    if any(c != 2 for c in edge_counts(faces).values()):
        return False
    directed = Counter((int(f[a]), int(f[b])) for f in faces for a, b in ((0, 1), (1, 2), (2, 0)))
    return all(c == 1 for c in directed.values())


def euler_characteristic(n_vertices, faces):
    return n_vertices - len(edge_counts(faces)) + len(faces)


def contour_offsets(band, level):
    """Normal offsets of the iso-displacement curve at ``level`` (outer side if positive, inner if negative)."""
    if level >= 0:
        return np.minimum(level, band.upper)
    return np.maximum(level, band.lower)


def build_objects(band, span, contour_levels=(), absolute_levels=False, scale=1.0):
    """Mesh objects for a band; returns ``(objects, warnings)``."""
    nominal = band.nominal
    normals = nominal.normals()
    notes = []
    objects = []
    if signed_area(nominal.nodes) <= 0:
        raise GeometryError([("nominal profile is not counter-clockwise", 0)])
    cap = triangulate_polygon(nominal.nodes)
    V, F = loft(nominal.nodes, span, scale, cap)
    objects.append(MeshObject("nominal", V, F))
    max_disp = float(max(np.max(band.upper), -np.min(band.lower)))
    if max_disp <= DEGENERATE_TOL:
        notes.append("degenerate band (upper == lower everywhere); exported the nominal surface only")
        warnings.warn(notes[-1], RuntimeWarning)
        return objects, notes
    for name, offset in (("inner", band.lower), ("outer", band.upper)):
        curve = nominal.nodes + offset[:, None] * normals
        crossings = BladeProfile(curve, nominal.arc_fraction).intersecting_segments()
        if crossings:
            notes.append(f"{name} envelope curve folds over itself at segment pairs {crossings[:5]}")
            warnings.warn(notes[-1], RuntimeWarning)
        V, F = loft(curve, span, scale, cap)
        objects.append(MeshObject(name, V, F))
    for level in contour_levels:
        value = float(level) if absolute_levels else float(level) * max_disp
        for side, sign in (("outer", 1.0), ("inner", -1.0)):
            curve = nominal.nodes + contour_offsets(band, sign * value)[:, None] * normals
            pts = np.column_stack([curve, np.full(len(curve), float(span))]) * scale
            objects.append(MeshObject(f"contour_{side}_{level:g}", pts, None, [list(range(len(pts))) + [0]]))
    return objects, notes


def write_obj(objects, path, scale=1.0, header=()):
    lines = [f"# units: mm, scale: {scale!r} mm per chord length", *[f"# {h}" for h in header]]
    base = 1
    n_vertices = n_faces = 0
    for obj in objects:
        lines.append(f"o {obj.name}")
        lines.extend(f"v {x!r} {y!r} {z!r}" for x, y, z in obj.vertices.tolist())
        if obj.faces is not None:
            lines.extend(f"f {a + base} {b + base} {c + base}" for a, b, c in obj.faces.tolist())
            n_faces += len(obj.faces)
        for poly in obj.lines:
            lines.append("l " + " ".join(str(k + base) for k in poly))
        base += len(obj.vertices)
        n_vertices += len(obj.vertices)
    text = "\n".join(lines) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return n_vertices, n_faces


def export_mesh(band, path, span=0.3, contour_levels=(0.33, 0.66), absolute_levels=False, scale=1.0):
    """Write the lofted envelope of ``band`` to an OBJ file and return a :class:`MeshSummary`.

    ``contour_levels`` are fractions of the largest band displacement
    unless ``absolute_levels`` is set.
    """
    if not span > 0:
        raise ValueError("span must be positive")
    objects, notes = build_objects(band, span, contour_levels, absolute_levels, scale)
    nv, nf = write_obj(objects, path, scale)
    return MeshSummary(str(path), nv, nf, tuple(o.name for o in objects), tuple(notes))


def read_obj(path):
    """Parse an OBJ written by :func:`write_obj` into ``{name: MeshObject}`` with local indices."""
    objects = {}
    verts = []
    current = None
    offset = 0
    with open(path) as fh:
        for raw in fh:
            parts = raw.split()
            if not parts or parts[0] == "#":
                continue
            if parts[0] == "o":
                if current is not None:
                    _close(objects, current, verts, offset)
                    offset += len(current["v"])
                current = {"name": parts[1], "v": [], "f": [], "l": []}
            elif parts[0] == "v":
                current["v"].append([float(p) for p in parts[1:4]])
            elif parts[0] == "f":
                current["f"].append([int(p) - 1 for p in parts[1:4]])
            elif parts[0] == "l":
                current["l"].append([int(p) - 1 for p in parts[1:]])
    if current is not None:
        _close(objects, current, verts, offset)
    return objects


def _close(objects, cur, verts, offset):
    V = np.array(cur["v"], dtype=float)
    F = np.array(cur["f"], dtype=int) - offset if cur["f"] else None
    L = [[k - offset for k in poly] for poly in cur["l"]]
    objects[cur["name"]] = MeshObject(cur["name"], V, F, L)
