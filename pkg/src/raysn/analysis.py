"""Post-processing and numerical checks of the angular-diffusion analysis.

Density, cuts and the ray-effect metric operate on cell fields of a
:class:`~raysn.solver.SpatialMesh`. The planar stencil experiment measures
the diffusion produced by shifting a hexagonal lattice back and forth and
interpolating barycentrically, and compares it with the closed forms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .rotation import phi_rotate_interpolate_1d, second_difference
from .solver import SpatialMesh


def density(psi: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Zeroth angular moment per cell."""
    weights = np.asarray(weights, dtype=float)
    if psi.shape[0] != len(weights):
        raise ValueError(f"{psi.shape[0]} ordinates but {len(weights)} weights")
    return np.tensordot(weights, psi, axes=(0, 0))


def total_mass(rho: np.ndarray, mesh: SpatialMesh) -> float:
    return float(rho.sum() * mesh.cell_area)


@dataclass(frozen=True)
class CutSeries:
    """Density sampled along a line of cells.

    ``position`` is the coordinate along the cut (x for horizontal, y for
    vertical, signed distance from the domain centre for diagonal) and
    ``radius`` the signed distance from the domain centre.
    """

    kind: str
    position: np.ndarray
    radius: np.ndarray
    values: np.ndarray
    cells: np.ndarray  # (n, 2) cell indices


def _cell_index(coord: float, lo: float, h: float, n: int, what: str) -> int:
    k = int(math.floor((coord - lo) / h))
    if coord == lo + n * h:
        k = n - 1
    if not 0 <= k < n:
        raise ValueError(f"{what} = {coord} lies outside the domain")
    return k


def extract_cut(rho: np.ndarray, mesh: SpatialMesh, kind: str, at: float | None = None) -> CutSeries:
    """Cut through ``rho`` along ``horizontal`` (y = at), ``vertical`` (x = at)
    or the ``diagonal`` cells (i, i). Cuts use the containing cell row/column."""
    xc, yc = mesh.x_centers, mesh.y_centers
    cx = 0.5 * (mesh.x_min + mesh.x_max)
    cy = 0.5 * (mesh.y_min + mesh.y_max)
    if kind == "horizontal":
        j = _cell_index(cy if at is None else at, mesh.y_min, mesh.dy, mesh.n_y, "y")
        idx = np.stack([np.arange(mesh.n_x), np.full(mesh.n_x, j)], axis=1)
        pos = xc
        radius = xc - cx
    elif kind == "vertical":
        i = _cell_index(cx if at is None else at, mesh.x_min, mesh.dx, mesh.n_x, "x")
        idx = np.stack([np.full(mesh.n_y, i), np.arange(mesh.n_y)], axis=1)
        pos = yc
        radius = yc - cy
    elif kind == "diagonal":
        n = min(mesh.n_x, mesh.n_y)
        k = np.arange(n)
        idx = np.stack([k, k], axis=1)
        dxs, dys = xc[k] - cx, yc[k] - cy
        radius = np.sign(dxs + dys) * np.hypot(dxs, dys)
        pos = radius
    else:
        raise ValueError(f"unknown cut kind {kind!r}")
    return CutSeries(kind, pos, radius, rho[idx[:, 0], idx[:, 1]], idx)


def cut_discrepancy(a: np.ndarray, ra: np.ndarray, b: np.ndarray, rb: np.ndarray) -> float:
    """L2 distance between two sampled curves on their common range.

    ``b`` is linearly interpolated to the abscissae ``ra``.
    """
    lo, hi = max(ra.min(), rb.min()), min(ra.max(), rb.max())
    keep = (ra >= lo) & (ra <= hi)
    r = ra[keep]
    diff = a[keep] - np.interp(r, rb, b)
    dr = np.gradient(r) if len(r) > 1 else np.ones_like(r)
    return float(np.sqrt(np.sum(diff**2 * np.abs(dr))))


def line_source_cut_discrepancy(rho: np.ndarray, mesh: SpatialMesh) -> float:
    """Horizontal vs diagonal cut through the centre, as functions of r."""
    h = extract_cut(rho, mesh, "horizontal")
    d = extract_cut(rho, mesh, "diagonal")
    return cut_discrepancy(h.values, h.radius, d.values, d.radius)


def log_density(rho: np.ndarray, floor: float = 1e-10) -> np.ndarray:
    return np.log10(np.maximum(rho, floor))


def lattice_cut_discrepancy(rho: np.ndarray, mesh: SpatialMesh, at: float = 1.0) -> float:
    """Log-density along x = at versus y = at."""
    v = extract_cut(rho, mesh, "vertical", at)
    h = extract_cut(rho, mesh, "horizontal", at)
    return cut_discrepancy(log_density(v.values), v.position, log_density(h.values), h.position)


def sample_bilinear(rho: np.ndarray, mesh: SpatialMesh, x, y) -> np.ndarray:
    interp = RegularGridInterpolator((mesh.x_centers, mesh.y_centers), rho,
                                     method="linear", bounds_error=True)
    return interp(np.stack([np.asarray(x), np.asarray(y)], axis=-1))


def circle_samples(rho: np.ndarray, mesh: SpatialMesh, radius: float, n_samples: int) -> np.ndarray:
    cx = 0.5 * (mesh.x_min + mesh.x_max)
    cy = 0.5 * (mesh.y_min + mesh.y_max)
    theta = 2.0 * math.pi * np.arange(n_samples) / n_samples
    x, y = cx + radius * np.cos(theta), cy + radius * np.sin(theta)
    xc, yc = mesh.x_centers, mesh.y_centers
    if x.min() < xc[0] or x.max() > xc[-1] or y.min() < yc[0] or y.max() > yc[-1]:
        raise ValueError(f"circle of radius {radius} leaves the sampled domain")
    return sample_bilinear(rho, mesh, x, y)


def ray_metric(rho: np.ndarray, mesh: SpatialMesh, radius: float = 0.75,
               n_samples: int = 720) -> float:
    """Coefficient of variation of ``rho`` on a circle about the domain centre.

    Zero for a rotationally symmetric field; grows with ray artifacts.
    """
    s = circle_samples(rho, mesh, radius, n_samples)
    mean = s.mean()
    if not mean > 0:
        raise ValueError("ray metric undefined: density on the circle has nonpositive mean")
    return float(s.std() / mean)


# -- azimuthal back-and-forth identity ----------------------------------------

def verify_back_forth_2d(n_phi: int, a: float, trials: int = 100, seed: int = 0) -> float:
    """Max deviation of ``Interp(-a) o Interp(a)`` from ``I + a(1-a) D2``
    over random vectors of length ``n_phi``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        v = rng.standard_normal(n_phi)
        there_and_back = phi_rotate_interpolate_1d(phi_rotate_interpolate_1d(v, a), -a)
        closed = v + a * (1.0 - a) * second_difference(v)
        worst = max(worst, float(np.max(np.abs(there_and_back - closed))))
    return worst


# -- planar hexagonal stencil --------------------------------------------------

SQRT3 = math.sqrt(3.0)


def c1(alpha):
    return 2.0 / SQRT3 * np.sin(math.pi / 3.0 - alpha)


def c2(alpha):
    return 2.0 / SQRT3 * np.sin(alpha)


def c_along(beta):
    return (4.0 * np.cos(beta) - np.cos(3.0 * beta)) / (2.0 * SQRT3)


def c_cross(beta):
    return (-4.0 * np.sin(beta) + 2.0 * np.sin(3.0 * beta)) / (2.0 * SQRT3)


def c_perp(beta):
    return np.cos(3.0 * beta) / (2.0 * SQRT3)


class _HexLattice:
    """Triangular lattice with unit spacing: points ``i e1 + j e2``."""

    E1 = np.array([1.0, 0.0])
    E2 = np.array([0.5, SQRT3 / 2.0])

    def __init__(self, offset=(0.0, 0.0)):
        self.offset = np.asarray(offset, dtype=float)
        self._to_lattice = np.linalg.inv(np.column_stack([self.E1, self.E2]))

    def point(self, i, j):
        return self.offset + i * self.E1 + j * self.E2

    def locate(self, p):
        """Vertices (as index pairs) and barycentric weights of the triangle
        containing ``p``; weights are ratios of sub-triangle areas."""
        s, t = self._to_lattice @ (np.asarray(p) - self.offset)
        i, j = math.floor(s), math.floor(t)
        if (s - i) + (t - j) <= 1.0:
            verts = [(i, j), (i + 1, j), (i, j + 1)]
        else:
            verts = [(i + 1, j + 1), (i, j + 1), (i + 1, j)]
        xy = [self.point(*v) for v in verts]
        total = _area2(*xy)
        w = [_area2(p, xy[1], xy[2]) / total,
             _area2(xy[0], p, xy[2]) / total,
             _area2(xy[0], xy[1], p) / total]
        return verts, w


def _area2(a, b, c) -> float:
    return 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def shift_back_and_forth(f: Callable[[np.ndarray], float], alpha: float, eps: float) -> float:
    """Value at the origin after interpolating onto the lattice shifted by
    ``eps * (cos alpha, sin alpha)`` and back onto the original lattice."""
    shift = eps * np.array([math.cos(alpha), math.sin(alpha)])
    original = _HexLattice()
    shifted = _HexLattice(shift)

    def on_shifted(i, j):
        verts, w = original.locate(shifted.point(i, j))
        return sum(wk * f(original.point(*v)) for v, wk in zip(verts, w))

    verts, w = shifted.locate(original.point(0, 0))
    return sum(wk * on_shifted(*v) for v, wk in zip(verts, w))


class PlanarStencilReport(NamedTuple):
    alpha: float
    eps: float
    c1_measured: float
    c2_measured: float
    c1_exact: float
    c2_exact: float
    along_measured: float
    cross_measured: float
    perp_measured: float
    along_exact: float
    cross_exact: float
    perp_exact: float


def planar_stencil_experiment(alpha: float, eps: float = 1e-3) -> PlanarStencilReport:
    """Measure the diffusion coefficients of one shift-interpolate cycle.

    For a quadratic ``f`` the cycle changes ``f(0)`` by
    ``eps * (c1 f_11 + c2 f_22) + O(eps^2)``, with ``f_kk`` the second
    derivative along lattice axis ``k``. Coefficients are read off from
    quadratics whose second derivatives single out each term, both in the
    lattice frame and in the frame of the shift direction.
    """
    e1, e2 = _HexLattice.E1, _HexLattice.E2
    dual = np.linalg.inv(np.column_stack([e1, e2]))  # rows: lattice coordinates

    def response(f):
        return (shift_back_and_forth(f, alpha, eps) - f(np.zeros(2))) / eps

    # lattice coordinates s(x), t(x): f = s^2 has f_11 = 2, f_22 = 0
    c1m = response(lambda x: (dual[0] @ x) ** 2) / 2.0
    c2m = response(lambda x: (dual[1] @ x) ** 2) / 2.0

    omega = np.array([math.cos(alpha), math.sin(alpha)])
    perp = np.array([-math.sin(alpha), math.cos(alpha)])
    along = response(lambda x: (omega @ x) ** 2) / 2.0
    cross = response(lambda x: (omega @ x) * (perp @ x))
    perp_c = response(lambda x: (perp @ x) ** 2) / 2.0

    beta = alpha - math.pi / 6.0
    return PlanarStencilReport(alpha, eps, c1m, c2m, float(c1(alpha)), float(c2(alpha)),
                               along, cross, perp_c,
                               float(c_along(beta)), float(c_cross(beta)), float(c_perp(beta)))


def format_stencil_table(reports) -> str:
    head = f"{'alpha':>8} {'c1':>10} {'c1 exact':>10} {'c2':>10} {'c2 exact':>10} " \
           f"{'c_OO':>10} {'c_OOp':>10} {'c_OpOp':>10}"
    lines = [head]
    for r in reports:
        lines.append(f"{r.alpha:8.4f} {r.c1_measured:10.6f} {r.c1_exact:10.6f} "
                     f"{r.c2_measured:10.6f} {r.c2_exact:10.6f} {r.along_measured:10.6f} "
                     f"{r.cross_measured:10.6f} {r.perp_measured:10.6f}")
    return "\n".join(lines)
