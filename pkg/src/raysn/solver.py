"""Discrete-ordinates transport on a 2D Cartesian mesh.

All 3D ordinates are kept; the solution is constant in z, so only the x and
y fluxes contribute. The angular flux is an array ``psi[q, i, j]`` over
ordinate ``q`` and cell ``(i, j)``, with ``i`` along x.

Time stepping is Heun's method; space is first-order upwind or a
minmod-limited linear reconstruction. Vacuum boundaries: inflow from
outside the domain is zero.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import __version__
from .quadrature import (FOUR_PI, OctahedralQuadrature, ProductQuadrature,
                         build_octahedral_quadrature, build_product_quadrature)
from .rotation import (build_interpolation_operator, conservative_rescale,
                       phi_rotate_interpolate_1d, random_axis, rotation_matrix)

log = logging.getLogger(__name__)

SCHEDULES = ("none", "random_each_step", "forth_and_back", "double_half_step")
ANGLE_SCALINGS = ("n_q", "order", "none")
NAN_CHECK_INTERVAL = 50


class SolverAbort(RuntimeError):
    """Raised when the solution becomes non-finite or its mass negative."""

    def __init__(self, message: str, manifest: dict):
        super().__init__(message)
        self.manifest = manifest


@dataclass(frozen=True)
class SpatialMesh:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    n_x: int
    n_y: int

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min and self.n_x > 0 and self.n_y > 0):
            raise ValueError(f"degenerate mesh {self}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_x

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / self.n_y

    @property
    def x_centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_x) + 0.5) * self.dx

    @property
    def y_centers(self) -> np.ndarray:
        return self.y_min + (np.arange(self.n_y) + 0.5) * self.dy

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_x, self.n_y)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy


@dataclass
class ProblemSpec:
    """Material fields and initial/source data on a mesh.

    ``initial_flux`` is either an ``(n_x, n_y)`` field applied to every
    ordinate (isotropic start) or a full ``(n_q, n_x, n_y)`` array.
    ``source`` is the isotropic emission density rate Q per cell.
    """

    mesh: SpatialMesh
    sigma_a: np.ndarray
    sigma_s: np.ndarray
    source: np.ndarray
    initial_flux: np.ndarray
    t_end: float
    name: str = "custom"

    def __post_init__(self):
        for label in ("sigma_a", "sigma_s", "source"):
            arr = np.asarray(getattr(self, label), dtype=float)
            arr = np.broadcast_to(arr, self.mesh.shape).copy()
            if np.any(arr < 0):
                raise ValueError(f"{label} must be nonnegative")
            setattr(self, label, arr)

    @property
    def sigma_t(self) -> np.ndarray:
        return self.sigma_a + self.sigma_s

    def initial_state(self, n_q: int) -> np.ndarray:
        psi0 = np.asarray(self.initial_flux, dtype=float)
        if psi0.shape == self.mesh.shape:
            return np.repeat(psi0[None, :, :], n_q, axis=0)
        if psi0.shape != (n_q,) + self.mesh.shape:
            raise ValueError(f"initial flux shape {psi0.shape} does not match {n_q} ordinates on {self.mesh.shape}")
        return psi0.copy()


@dataclass
class SolverConfig:
    quadrature: str = "octahedral"      # octahedral | product
    order: int = 6
    spatial_order: int = 2
    cfl: float = 0.5
    delta: float = 0.0
    schedule: str = "random_each_step"
    conserve_mass: bool = False
    seed: int = 0
    angle_scaling: str = "n_q"          # n_q | order | none


    def __post_init__(self):
        if self.quadrature not in ("octahedral", "product"):
            raise ValueError(f"unknown quadrature kind {self.quadrature!r}")
        if self.spatial_order not in (1, 2):
            raise ValueError("spatial order must be 1 or 2")
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError("cfl must lie in (0, 1]")
        if self.delta < 0:
            raise ValueError("rotation strength must be nonnegative")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown rotation schedule {self.schedule!r}")
        if self.angle_scaling not in ANGLE_SCALINGS:
            raise ValueError(f"unknown angle scaling {self.angle_scaling!r}")

    def build_quadrature(self):
        if self.quadrature == "octahedral":
            return build_octahedral_quadrature(self.order)
        return build_product_quadrature(self.order)


@dataclass
class RunResult:
    psi: np.ndarray
    quadrature: OctahedralQuadrature | ProductQuadrature
    problem: ProblemSpec
    config: SolverConfig
    manifest: dict = field(default_factory=dict)
    snapshots: dict = field(default_factory=dict)

    @property
    def density(self) -> np.ndarray:
        return np.tensordot(self.quadrature.weights, self.psi, axes=(0, 0))


# -- spatial operator ---------------------------------------------------------

def minmod(a, b):
    """Zero where signs differ (or either is zero), else the smaller magnitude."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.where(np.abs(a) < np.abs(b), a, b)
    return np.where(a * b > 0, out, 0.0)


def _face_flux(u: np.ndarray, speed_pos: np.ndarray, speed_neg: np.ndarray,
               order: int) -> np.ndarray:
    """Upwind fluxes on the n+1 faces along axis 1 of ``u``.

    ``u`` holds the cells padded by two zero ghost layers along axis 1, so
    that inflow through the domain boundary is zero.
    """
    if order == 1:
        left, right = u[:, 1:-2], u[:, 2:-1]
    else:
        d = np.diff(u, axis=1)
        half_slope = 0.5 * minmod(d[:, :-1], d[:, 1:])  # cells 1 .. n+2
        left = u[:, 1:-2] + half_slope[:, :-1]
        right = u[:, 2:-1] - half_slope[:, 1:]
    return speed_pos * left + speed_neg * right


def compute_fluxes(psi: np.ndarray, directions: np.ndarray, mesh: SpatialMesh,
                   order: int = 2) -> np.ndarray:
    """Transport part of the right-hand side, ``-div(Omega psi)`` per cell."""
    ox = directions[:, 0][:, None, None]
    oy = directions[:, 1][:, None, None]

    ux = np.pad(psi, ((0, 0), (2, 2), (0, 0)))
    fx = _face_flux(ux, np.maximum(ox, 0.0), np.minimum(ox, 0.0), order)
    rhs = (fx[:, :-1] - fx[:, 1:]) * (1.0 / mesh.dx)

    uy = np.pad(psi, ((0, 0), (0, 0), (2, 2))).transpose(0, 2, 1)
    fy = _face_flux(uy, np.maximum(oy, 0.0), np.minimum(oy, 0.0), order)
    rhs += ((fy[:, :-1] - fy[:, 1:]) * (1.0 / mesh.dy)).transpose(0, 2, 1)
    return rhs


def collision_update(psi: np.ndarray, weights: np.ndarray, sigma_s, sigma_a) -> np.ndarray:
    """Isotropic in-scattering minus total removal, per ordinate.

    Works for a single cell (``psi`` of shape ``(n_q,)``) or a field.
    """
    rho = np.tensordot(weights, psi, axes=(0, 0))
    sigma_s = np.asarray(sigma_s, dtype=float)
    sigma_t = sigma_s + np.asarray(sigma_a, dtype=float)
    return (sigma_s * rho / FOUR_PI)[None, ...] - sigma_t * psi


def make_rhs(quad, problem: ProblemSpec, spatial_order: int) -> Callable:
    """Closure evaluating the full right-hand side for the current ordinates."""
    mesh = problem.mesh
    emission = problem.source / FOUR_PI
    has_source = bool(np.any(emission))

    def rhs(psi: np.ndarray, directions: np.ndarray) -> np.ndarray:
        out = compute_fluxes(psi, directions, mesh, spatial_order)
        out += collision_update(psi, quad.weights, problem.sigma_s, problem.sigma_a)
        if has_source:
            out += emission
        return out

    return rhs


def step_heun(psi: np.ndarray, rhs: Callable[[np.ndarray], np.ndarray], dt: float) -> np.ndarray:
    """One step of Heun's method."""
    k1 = rhs(psi)
    stage = psi + dt * k1
    k2 = rhs(stage)
    stage += psi
    stage += dt * k2
    stage *= 0.5
    return stage


def time_step(mesh: SpatialMesh, cfl: float, t_end: float) -> tuple[float, int]:
    """Step size no larger than ``cfl * min(dx, dy)`` dividing ``t_end`` evenly."""
    dt_max = cfl * min(mesh.dx, mesh.dy)
    n_steps = max(1, math.ceil(t_end / dt_max - 1e-12))
    return t_end / n_steps, n_steps


# -- rotation schedules -------------------------------------------------------

class _Rotator:
    """Rotate-and-interpolate on the octahedral quadrature."""

    def __init__(self, quad: OctahedralQuadrature, config: SolverConfig, angle: float):
        self.quad = quad
        self.config = config
        self.angle = angle
        self.rng = np.random.default_rng(config.seed)
        self.axis = None
        self.home = quad.points
        self.max_mass_defect = 0.0
        self.rotations = 0

    def _rotate(self, psi, axis, angle, target_points=None):
        src = self.quad
        if target_points is None:
            target_points = src.points @ rotation_matrix(axis, angle).T
        op = build_interpolation_operator(src, target_points)
        new = op.apply(psi)
        if self.config.conserve_mass:
            new = conservative_rescale(new, psi, src.weights)
            self._audit(psi, new, src.weights)
        self.quad = src.with_points(target_points)
        self.rotations += 1
        return new

    def _audit(self, old, new, w):
        m_old = np.tensordot(w, old, axes=(0, 0))
        m_new = np.tensordot(w, new, axes=(0, 0))
        # below ~1e-200 relative rounding is dominated by subnormal arithmetic
        mask = m_old > 1e-200
        if np.any(mask):
            defect = np.max(np.abs(m_new[mask] - m_old[mask]) / m_old[mask])
            self.max_mass_defect = max(self.max_mass_defect, float(defect))

    def __call__(self, psi: np.ndarray, step: int) -> np.ndarray:
        schedule = self.config.schedule
        if schedule == "random_each_step":
            return self._rotate(psi, random_axis(self.rng), self.angle)
        if schedule == "forth_and_back":
            if step % 2 == 0:
                self.axis = random_axis(self.rng)
                self.home = self.quad.points
                return self._rotate(psi, self.axis, self.angle)
            return self._rotate(psi, self.axis, -self.angle, target_points=self.home)
        if schedule == "double_half_step":
            home = self.quad.points
            psi = self._rotate(psi, random_axis(self.rng), 0.5 * self.angle)
            return self._rotate(psi, None, 0.0, target_points=home)
        return psi


class _AzimuthalRotator:
    """Rotation about the z-axis on the product quadrature (1D interpolation
    in azimuth); the shift per step is ``a`` azimuthal spacings."""

    def __init__(self, quad: ProductQuadrature, config: SolverConfig, a: float):
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"azimuthal shift fraction {a} exceeds one spacing; reduce delta")
        self.quad = quad
        self.config = config
        self.a = a
        self.offset = 0.0
        self.max_mass_defect = 0.0
        self.rotations = 0

    def _shift(self, psi, a):
        q = self.quad
        shape = psi.shape
        new = phi_rotate_interpolate_1d(psi.reshape((q.mu_count, q.phi_count) + shape[1:]), a, axis=1)
        new = new.reshape(shape)
        if self.config.conserve_mass:
            new = conservative_rescale(new, psi, q.weights)
        self.offset += a * q.delta_phi
        R = rotation_matrix((0.0, 0.0, 1.0), a * q.delta_phi)
        self.quad = q.with_points(q.points @ R.T)
        self.rotations += 1
        return new

    def __call__(self, psi: np.ndarray, step: int) -> np.ndarray:
        schedule = self.config.schedule
        if schedule == "random_each_step":
            return self._shift(psi, self.a)
        if schedule == "forth_and_back":
            return self._shift(psi, self.a if step % 2 == 0 else -self.a)
        if schedule == "double_half_step":
            psi = self._shift(psi, 0.5 * self.a)
            return self._shift(psi, -0.5 * self.a)
        return psi


def rotation_angle(config: SolverConfig, quad, dt: float) -> float:
    """Per-step rotation.

    On the octahedral set this is an angle in radians, ``delta*dt/n_q`` by
    default (``angle_scaling="order"`` divides by N instead, ``"none"`` by
    nothing). On the product set it is the shift ``delta*dt`` as a fraction
    of the azimuthal spacing, i.e. an angle of ``delta*dt*dphi``.
    """
    if isinstance(quad, ProductQuadrature):
        return config.delta * dt
    divisor = {"n_q": quad.n_points, "order": quad.order, "none": 1}[config.angle_scaling]
    return config.delta * dt / divisor


# -- drivers ------------------------------------------------------------------

def _mass(psi, quad, mesh) -> float:
    return float(np.tensordot(quad.weights, psi, axes=(0, 0)).sum() * mesh.cell_area)


def _run(config: SolverConfig, problem: ProblemSpec, rotate: bool,
         snapshot_times=(), progress: Callable | None = None) -> RunResult:
    quad = config.build_quadrature()
    mesh = problem.mesh
    dt, n_steps = time_step(mesh, config.cfl, problem.t_end)
    psi = problem.initial_state(quad.n_points)
    rhs_full = make_rhs(quad, problem, config.spatial_order)

    rotator = None
    if rotate and config.delta > 0 and config.schedule != "none":
        amount = rotation_angle(config, quad, dt)
        if isinstance(quad, ProductQuadrature):
            rotator = _AzimuthalRotator(quad, config, amount)
        else:
            rotator = _Rotator(quad, config, amount)

    manifest = {
        "version": __version__,
        "method": "rsn" if rotate else "sn",
        "problem": problem.name,
        **{f"config.{k}": v for k, v in asdict(config).items()},
        "n_q": quad.n_points,
        "n_x": mesh.n_x,
        "n_y": mesh.n_y,
        "dt": dt,
        "t_end": problem.t_end,
        "initial_mass": _mass(psi, quad, mesh),
    }
    pending = sorted(float(t) for t in snapshot_times)
    snapshots = {}
    t_fv = t_rot = 0.0
    current = quad
    for step in range(n_steps):
        dirs = current.points
        tic = time.perf_counter()
        psi = step_heun(psi, lambda u: rhs_full(u, dirs), dt)
        toc = time.perf_counter()
        t_fv += toc - tic
        if rotator is not None:
            psi = rotator(psi, step)
            current = rotator.quad
            t_rot += time.perf_counter() - toc
        t = (step + 1) * dt
        while pending and pending[0] <= t + 1e-12:
            snapshots[pending.pop(0)] = np.tensordot(quad.weights, psi, axes=(0, 0))
        if (step + 1) % NAN_CHECK_INTERVAL == 0 or step == n_steps - 1:
            _guard(psi, quad, mesh, step + 1, manifest)
        if progress is not None:
            progress(step + 1, n_steps)

    manifest.update({
        "steps": n_steps,
        "rotations": rotator.rotations if rotator else 0,
        "time_fv": t_fv,
        "time_rotation": t_rot,
        "rotation_share": t_rot / (t_fv + t_rot) if t_fv + t_rot > 0 else 0.0,
        "final_mass": _mass(psi, quad, mesh),
        "max_rotation_mass_defect": rotator.max_mass_defect if rotator else 0.0,
    })
    return RunResult(psi, current, problem, config, manifest, snapshots)


def _guard(psi, quad, mesh, step, manifest):
    if not np.all(np.isfinite(psi)):
        raise SolverAbort(f"non-finite angular flux at step {step}", {**manifest, "abort_step": step})
    mass = _mass(psi, quad, mesh)
    if mass < 0:
        raise SolverAbort(f"negative total mass {mass} at step {step}", {**manifest, "abort_step": step})


def run_sn(config: SolverConfig, problem: ProblemSpec, snapshot_times=(), progress=None) -> RunResult:
    """Plain discrete ordinates: fixed quadrature, no rotation."""
    return _run(config, problem, rotate=False, snapshot_times=snapshot_times, progress=progress)


def run_rsn(config: SolverConfig, problem: ProblemSpec, snapshot_times=(), progress=None) -> RunResult:
    """Rotated discrete ordinates.

    After each finite-volume step the ordinates are rotated according to
    ``config.schedule`` and the flux is interpolated onto them. With
    ``delta == 0`` this reproduces :func:`run_sn` exactly.
    """
    return _run(config, problem, rotate=True, snapshot_times=snapshot_times, progress=progress)


def format_manifest(manifest: dict) -> str:
    return "".join(f"{k}={v}\n" for k, v in manifest.items())
