"""Rotation of ordinate sets and interpolation onto rotated ordinates.

The interpolation operator maps values at the vertices of a source
triangulation to values at arbitrary target points on the sphere by
spherical barycentric interpolation. Each row has exactly three nonnegative
entries summing to one, so it preserves positivity and constants.
"""
from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .quadrature import OctahedralQuadrature, spherical_triangle_area, triple_product

#: |det| below this counts as "on the edge" for the membership test
INSIDE_TOL = 1e-14
#: sub-areas below this are clamped to zero before normalization
AREA_FLOOR = 1e-16


class LocateError(RuntimeError):
    """A point was not contained in any triangle of the tiling."""


class ConservationError(RuntimeError):
    """Interpolation removed all mass from a cell that had some."""


def rotation_matrix(axis, angle: float) -> np.ndarray:
    """Matrix rotating by ``angle`` (radians, right-handed) about unit ``axis``."""
    n = np.asarray(axis, dtype=float)
    if n.shape != (3,) or abs(np.linalg.norm(n) - 1.0) > 1e-8:
        raise ValueError(f"rotation axis must be a unit 3-vector, got {axis!r}")
    c, s = np.cos(angle), np.sin(angle)
    nx, ny, nz = n
    k = 1.0 - c
    return np.array([
        [nx * nx * k + c, nx * ny * k - nz * s, nx * nz * k + ny * s],
        [ny * nx * k + nz * s, ny * ny * k + c, ny * nz * k - nx * s],
        [nz * nx * k - ny * s, nz * ny * k + nx * s, nz * nz * k + c],
    ])


def random_axis(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed direction on S^2."""
    z = rng.uniform(-1.0, 1.0)
    phi = rng.uniform(0.0, 2.0 * np.pi)
    r = np.sqrt(max(0.0, 1.0 - z * z))
    v = np.array([r * np.cos(phi), r * np.sin(phi), z])
    return v / np.linalg.norm(v)


def rotate_quadrature(quad, R: np.ndarray):
    """Rotated copy of ``quad``; weights and connectivity are kept."""
    return quad.with_points(quad.points @ np.asarray(R).T)


def _inside(quad: OctahedralQuadrature, tri_idx, p) -> np.ndarray:
    v = quad.points[quad.triangles[tri_idx]]
    a, b, c = v[..., 0, :], v[..., 1, :], v[..., 2, :]
    return ((triple_product(a, b, p) >= -INSIDE_TOL)
            & (triple_product(b, c, p) >= -INSIDE_TOL)
            & (triple_product(c, a, p) >= -INSIDE_TOL))


def point_in_triangle(quad: OctahedralQuadrature, triangle: int, p) -> bool:
    """True if ``p`` lies in the cone spanned by the triangle's vertices."""
    return bool(_inside(quad, triangle, np.asarray(p, dtype=float)))


def locate_triangle(quad: OctahedralQuadrature, p, hint_vertex: int = 0) -> int:
    """Index of a triangle of ``quad`` containing direction ``p``.

    Searches the triangles around ``hint_vertex`` first, then widens ring by
    ring over the vertex adjacency, and scans everything as a last resort.
    """
    p = np.asarray(p, dtype=float)
    tris = quad.triangles
    seen_tri: set[int] = set()
    seen_vert = {hint_vertex}
    queue = deque([hint_vertex])
    # ring expansion is cheap only near the hint; beyond that scan globally
    budget = 64
    while queue and budget:
        v = queue.popleft()
        budget -= 1
        for t in quad.incident_triangles(v):
            t = int(t)
            if t in seen_tri:
                continue
            seen_tri.add(t)
            if _inside(quad, t, p):
                return t
            for u in tris[t]:
                u = int(u)
                if u not in seen_vert:
                    seen_vert.add(u)
                    queue.append(u)
    hits = np.flatnonzero(_inside(quad, np.arange(len(tris)), p[None, :]))
    if len(hits):
        return int(hits[0])
    raise LocateError(f"direction {p} is not inside any triangle; connectivity is corrupt")


def _barycentric(a, b, c, p) -> np.ndarray:
    areas = np.stack([spherical_triangle_area(p, b, c),
                      spherical_triangle_area(a, p, c),
                      spherical_triangle_area(a, b, p)], axis=-1)
    areas = np.where(areas < AREA_FLOOR, 0.0, areas)
    total = areas.sum(axis=-1, keepdims=True)
    return areas / total


def spherical_barycentric_weights(quad: OctahedralQuadrature, triangle: int, p) -> np.ndarray:
    """Weights ``(w0, w1, w2)`` of ``p`` w.r.t. the triangle's vertices.

    ``w_i`` is proportional to the spherical area of the sub-triangle
    opposite vertex ``i``.
    """
    a, b, c = quad.points[quad.triangles[triangle]]
    return _barycentric(a, b, c, np.asarray(p, dtype=float))


@dataclass(frozen=True, eq=False)
class InterpolationOperator:
    """Row-sparse interpolation matrix with three entries per row."""

    columns: np.ndarray   # (n_rows, 3) source vertex indices
    weights: np.ndarray   # (n_rows, 3)
    triangles: np.ndarray  # (n_rows,) located source triangle per row
    n_cols: int

    @property
    def n_rows(self) -> int:
        return len(self.columns)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        n = self.n_rows
        indptr = np.arange(0, 3 * n + 1, 3)
        return sp.csr_matrix((self.weights.ravel(), self.columns.ravel(), indptr),
                             shape=(n, self.n_cols))

    def apply(self, values: np.ndarray) -> np.ndarray:
        return apply_interpolation(self, values)

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", "col", "weight"])
            for r in range(self.n_rows):
                for c, w in zip(self.columns[r], self.weights[r]):
                    writer.writerow([r, int(c), repr(float(w))])


def build_interpolation_operator(source: OctahedralQuadrature, targets: np.ndarray,
                                 hints: np.ndarray | None = None) -> InterpolationOperator:
    """Barycentric interpolation from ``source`` vertices to ``targets``.

    ``hints[q]`` is a source vertex expected to be near target ``q``. When
    omitted and the target count equals the source count, target ``q`` is
    assumed to be the image of source vertex ``q`` under a small rotation.
    """
    targets = np.asarray(targets, dtype=float)
    n_t = len(targets)
    if hints is None:
        hints = np.arange(n_t) if n_t == source.n_points else np.zeros(n_t, dtype=np.int64)

    # vectorized pass over the six triangles around each hint
    cand = source.vertex_triangles[hints]                      # (n_t, 6)
    ok = (cand >= 0) & _inside(source, np.maximum(cand, 0), targets[:, None, :])
    found = ok.any(axis=1)
    tri = np.where(found, cand[np.arange(n_t), ok.argmax(axis=1)], -1)
    for q in np.flatnonzero(~found):
        tri[q] = locate_triangle(source, targets[q], int(hints[q]))

    cols = source.triangles[tri]
    v = source.points[cols]
    w = _barycentric(v[:, 0], v[:, 1], v[:, 2], targets)
    return InterpolationOperator(cols, w, tri, source.n_points)


def apply_interpolation(op: InterpolationOperator, values: np.ndarray) -> np.ndarray:
    """Apply ``op`` along axis 0 of ``values`` (ordinates first)."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != op.n_cols:
        raise ValueError(f"expected {op.n_cols} ordinates, got {values.shape[0]}")
    flat = values.reshape(op.n_cols, -1)
    out = op.matrix @ flat
    return out.reshape((op.n_rows,) + values.shape[1:])


def conservative_rescale(new_values: np.ndarray, old_values: np.ndarray,
                         weights: np.ndarray) -> np.ndarray:
    """Rescale ``new_values`` so that its weighted sum over axis 0 matches
    that of ``old_values`` in every cell (trailing axes)."""
    weights = np.asarray(weights, dtype=float)
    old_mass = np.tensordot(weights, old_values, axes=(0, 0))
    new_mass = np.tensordot(weights, new_values, axes=(0, 0))
    lost = (new_mass == 0) & (old_mass != 0)
    if np.any(lost):
        raise ConservationError(f"interpolation annihilated mass in {int(lost.sum())} cell(s)")
    factor = np.divide(old_mass, new_mass, out=np.ones_like(new_mass, dtype=float),
                       where=new_mass != 0)
    return new_values * factor


def phi_rotate_interpolate_1d(values: np.ndarray, a: float, axis: int = 0) -> np.ndarray:
    """Linear interpolation onto azimuths shifted by ``a`` grid spacings.

    ``a`` in [0, 1] reads the forward neighbour, ``out_i = (1-a) v_i + a v_{i+1}``;
    negative ``a`` reads the backward one, ``out_i = (1-|a|) v_i + |a| v_{i-1}``.
    The azimuthal index along ``axis`` is periodic.
    """
    if not -1.0 <= a <= 1.0:
        raise ValueError(f"shift fraction must lie in [-1, 1], got {a}")
    values = np.asarray(values, dtype=float)
    step = -1 if a >= 0 else 1
    return (1.0 - abs(a)) * values + abs(a) * np.roll(values, step, axis=axis)


def second_difference(values: np.ndarray, axis: int = 0) -> np.ndarray:
    """Periodic ``v_{i+1} - 2 v_i + v_{i-1}``."""
    return np.roll(values, -1, axis=axis) - 2.0 * values + np.roll(values, 1, axis=axis)
