"""Quadrature rules on the unit sphere.

Two families are provided:

* the octahedral triangulation quadrature, whose points are the radial
  projections of an equidistant triangulation of the octahedron faces and
  whose weights are the spherical areas of the median-dual cells, and
* the tensorized product quadrature (equispaced azimuth x Gauss in mu).

Points are stored as ``(n, 3)`` arrays of unit vectors.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

FOUR_PI = 4.0 * math.pi

#: limit of max/min weight ratio of the octahedral quadrature as N -> oo
WEIGHT_RATIO_LIMIT = 9.0 * math.sqrt(3.0) / 2.0


def _normalize(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def triple_product(a, b, c):
    """det[a, b, c] along the last axis."""
    return np.einsum("...i,...i->...", a, np.cross(b, c))


def spherical_triangle_area(a, b, c):
    """Area of the spherical triangle spanned by unit vectors ``a, b, c``.

    Uses the Van Oosterom-Strackee form of the spherical excess, which is
    well conditioned for the small triangles met here. Broadcasts over
    leading axes.
    """
    a, b, c = np.asarray(a), np.asarray(b), np.asarray(c)
    num = np.abs(triple_product(a, b, c))
    den = (1.0 + np.einsum("...i,...i->...", a, b)
           + np.einsum("...i,...i->...", b, c)
           + np.einsum("...i,...i->...", c, a))
    return 2.0 * np.arctan2(num, den)


@dataclass(frozen=True, eq=False)
class OctahedralQuadrature:
    """Triangulation-based quadrature on S^2.

    Attributes
    ----------
    order : int
        Number of points per octahedron edge, N >= 2.
    points : ndarray, shape (n_q, 3)
    weights : ndarray, shape (n_q,)
    triangles : ndarray of int, shape (8 (N-1)^2, 3)
        Vertex indices, counter-clockwise when seen from outside.
    vertex_triangles : ndarray of int, shape (n_q, 6)
        Incident triangles per vertex, padded with -1 (poles have four).
    """

    order: int
    points: np.ndarray
    weights: np.ndarray
    triangles: np.ndarray
    vertex_triangles: np.ndarray

    @property
    def n_points(self) -> int:
        return len(self.points)

    def incident_triangles(self, vertex: int) -> np.ndarray:
        row = self.vertex_triangles[vertex]
        return row[row >= 0]

    def with_points(self, points: np.ndarray) -> "OctahedralQuadrature":
        """Copy sharing weights and connectivity but with new points."""
        return OctahedralQuadrature(self.order, points, self.weights,
                                    self.triangles, self.vertex_triangles)


@dataclass(frozen=True, eq=False)
class ProductQuadrature:
    """Tensorized quadrature: 2N equispaced azimuths times N/2 Gauss nodes.

    Point ``k * phi_count + i`` has azimuth ``phi[i]`` and polar cosine
    ``mu[k]``.
    """

    order: int
    points: np.ndarray
    weights: np.ndarray
    phi: np.ndarray
    mu: np.ndarray

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def phi_count(self) -> int:
        return len(self.phi)

    @property
    def mu_count(self) -> int:
        return len(self.mu)

    @property
    def delta_phi(self) -> float:
        return 2.0 * math.pi / self.phi_count

    def with_points(self, points: np.ndarray) -> "ProductQuadrature":
        return ProductQuadrature(self.order, points, self.weights, self.phi, self.mu)


Quadrature = OctahedralQuadrature | ProductQuadrature


def octahedral_point_count(order: int) -> int:
    return 4 * order * order - 8 * order + 6


def _octant_signs():
    return list(itertools.product((1, -1), repeat=3))


def build_octahedral_quadrature(order: int) -> OctahedralQuadrature:
    """Build the octahedral quadrature with ``order`` points per edge.

    Vertices shared between octants are stored once. The weight of a vertex
    is the spherical area of its median-dual cell: for every incident
    triangle, the quadrilateral spanned by the vertex, the two adjacent
    edge midpoints and the triangle centroid (all projected to S^2).
    """
    if int(order) != order or order < 2:
        raise ValueError(f"octahedral quadrature needs integer order >= 2, got {order!r}")
    order = int(order)
    m = order - 1

    index: dict[tuple[int, int, int], int] = {}
    lattice: list[tuple[int, int, int]] = []
    triangles: list[tuple[int, int, int]] = []
    for signs in _octant_signs():
        local = {}
        for i in range(m + 1):
            for j in range(m + 1 - i):
                key = (signs[0] * i, signs[1] * j, signs[2] * (m - i - j))
                if key not in index:
                    index[key] = len(lattice)
                    lattice.append(key)
                local[i, j] = index[key]
        for i in range(m):
            for j in range(m - i):
                triangles.append((local[i, j], local[i + 1, j], local[i, j + 1]))
                if i + j <= m - 2:
                    triangles.append((local[i + 1, j], local[i + 1, j + 1], local[i, j + 1]))

    points = _normalize(np.array(lattice, dtype=float))
    tri = np.array(triangles, dtype=np.int64)
    # orient counter-clockwise seen from outside
    flip = triple_product(points[tri[:, 0]], points[tri[:, 1]], points[tri[:, 2]]) < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]

    weights = _median_dual_areas(points, tri)
    return OctahedralQuadrature(order, points, weights, tri, _vertex_triangles(len(points), tri))


def _median_dual_areas(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    a, b, c = points[tri[:, 0]], points[tri[:, 1]], points[tri[:, 2]]
    centroid = _normalize(a + b + c)
    mid_ab, mid_bc, mid_ca = _normalize(a + b), _normalize(b + c), _normalize(c + a)
    area = np.zeros(len(points))
    corners = ((a, mid_ab, mid_ca), (b, mid_bc, mid_ab), (c, mid_ca, mid_bc))
    for col, (vertex, m1, m2) in enumerate(corners):
        share = (spherical_triangle_area(vertex, m1, centroid)
                 + spherical_triangle_area(vertex, centroid, m2))
        np.add.at(area, tri[:, col], share)
    return area


def _vertex_triangles(n_points: int, tri: np.ndarray) -> np.ndarray:
    out = np.full((n_points, 6), -1, dtype=np.int64)
    fill = np.zeros(n_points, dtype=np.int64)
    for t, row in enumerate(tri):
        for v in row:
            out[v, fill[v]] = t
            fill[v] += 1
    return out


def build_product_quadrature(order: int) -> ProductQuadrature:
    """Product rule with ``2*order`` azimuths and ``order/2`` Gauss nodes in mu."""
    if int(order) != order or order < 2 or order % 2:
        raise ValueError(f"product quadrature needs an even order >= 2, got {order!r}")
    order = int(order)
    n_phi = 2 * order
    dphi = 2.0 * math.pi / n_phi
    phi = dphi * np.arange(1, n_phi + 1)
    mu, mu_w = np.polynomial.legendre.leggauss(order // 2)

    sin_theta = np.sqrt(1.0 - mu**2)
    pts = np.empty((order // 2, n_phi, 3))
    pts[..., 0] = sin_theta[:, None] * np.cos(phi)[None, :]
    pts[..., 1] = sin_theta[:, None] * np.sin(phi)[None, :]
    pts[..., 2] = mu[:, None]
    weights = np.repeat(mu_w * dphi, n_phi)
    return ProductQuadrature(order, pts.reshape(-1, 3), weights, phi, mu)


def integrate(quad: Quadrature, f: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]) -> float:
    """Sum ``w_q f(x_q, y_q, z_q)``; ``f`` is evaluated on coordinate arrays."""
    x, y, z = quad.points.T
    values = np.broadcast_to(np.asarray(f(x, y, z), dtype=float), x.shape)
    return float(quad.weights @ values)


class QuadratureStats(NamedTuple):
    min_weight: float
    max_weight: float
    ratio: float


def quadrature_stats(quad: Quadrature) -> QuadratureStats:
    lo, hi = float(quad.weights.min()), float(quad.weights.max())
    return QuadratureStats(lo, hi, hi / lo)


# test integrands with known integrals over S^2

def g_test(x, y, z):
    return x**4 * y**2


def h_test(x, y, z):
    return np.cos(x) + np.sin(y) + z**6


G_EXACT = 4.0 * math.pi / 35.0
H_EXACT = 4.0 * math.pi / 7.0 * (1.0 + 7.0 * math.sin(1.0))


class IntegrationRow(NamedTuple):
    order: int
    n_points: int
    g_error: float
    g_ratio: float
    h_error: float
    h_ratio: float


def integration_error_table(orders=(2, 4, 8, 16, 32, 64)) -> list[IntegrationRow]:
    """Errors (computed - exact) for the two test integrands; ratios are
    ``|previous error / error|`` (nan on the first row)."""
    rows = []
    prev_g = prev_h = math.nan
    for n in orders:
        quad = build_octahedral_quadrature(n)
        eg = integrate(quad, g_test) - G_EXACT
        eh = integrate(quad, h_test) - H_EXACT
        rows.append(IntegrationRow(n, quad.n_points, eg, abs(prev_g / eg), eh, abs(prev_h / eh)))
        prev_g, prev_h = eg, eh
    return rows


def write_quadrature_csv(quad: Quadrature, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "x", "y", "z", "weight"])
        for q, (p, w) in enumerate(zip(quad.points, quad.weights)):
            writer.writerow([q, *(repr(float(c)) for c in p), repr(float(w))])
