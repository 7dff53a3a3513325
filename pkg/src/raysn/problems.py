"""Benchmark problem definitions.

Problems are described by a flat ``key = value`` text format::

    mesh.x_min = 0.0           # scalars, one per line
    material.background = 0.0 1.0          # sigma_a sigma_s
    material.rect = 1 1 2 2 10.0 0.0        # x0 y0 x1 y1 sigma_a sigma_s
    source.rect = 3 3 4 4 1.0               # x0 y0 x1 y1 Q
    initial.kind = gaussian                 # or zero
    initial.sigma = 0.03

``material.rect`` and ``source.rect`` may repeat; later rectangles win.
A cell belongs to a rectangle when its centre lies inside it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .solver import ProblemSpec, SpatialMesh

REPEATABLE = {"material.rect", "source.rect"}


class ConfigError(ValueError):
    pass


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict = {key: [] for key in REPEATABLE}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in REPEATABLE:
            out[key].append(value)
        else:
            out[key] = value
    return out


def read_config(path) -> dict:
    return parse_config(Path(path).read_text())


def packaged_config(name: str) -> dict:
    return parse_config(resources.files("raysn.data").joinpath(f"{name}.cfg").read_text())


def _floats(value: str, count: int, key: str) -> list[float]:
    parts = value.split()
    if len(parts) != count:
        raise ConfigError(f"{key} expects {count} numbers, got {value!r}")
    return [float(p) for p in parts]


def _rect_mask(mesh: SpatialMesh, x0, y0, x1, y1) -> np.ndarray:
    xc, yc = mesh.x_centers, mesh.y_centers
    mx = (xc > min(x0, x1)) & (xc < max(x0, x1))
    my = (yc > min(y0, y1)) & (yc < max(y0, y1))
    return mx[:, None] & my[None, :]


def gaussian_pulse(mesh: SpatialMesh, sigma: float) -> np.ndarray:
    """Isotropic angular flux of a Gaussian pulse of unit density at the origin."""
    if sigma <= 0:
        raise ValueError("pulse width must be positive")
    r2 = mesh.x_centers[:, None] ** 2 + mesh.y_centers[None, :] ** 2
    return np.exp(-r2 / (4.0 * sigma**2)) / (4.0 * math.pi * sigma**2)


def problem_from_config(cfg: dict, **mesh_overrides) -> ProblemSpec:
    """Build a :class:`ProblemSpec`; ``n_x``, ``n_y``, ``t_end`` may be overridden."""
    try:
        n_x = int(mesh_overrides.get("n_x") or cfg["mesh.n_x"])
        n_y = int(mesh_overrides.get("n_y") or cfg["mesh.n_y"])
        mesh = SpatialMesh(float(cfg["mesh.x_min"]), float(cfg["mesh.x_max"]),
                           float(cfg["mesh.y_min"]), float(cfg["mesh.y_max"]), n_x, n_y)
        t_end = float(mesh_overrides.get("t_end") or cfg["problem.t_end"])
    except KeyError as exc:
        raise ConfigError(f"missing key {exc.args[0]}") from None

    sa_bg, ss_bg = _floats(cfg.get("material.background", "0 0"), 2, "material.background")
    sigma_a = np.full(mesh.shape, sa_bg)
    sigma_s = np.full(mesh.shape, ss_bg)
    for row in cfg.get("material.rect", []):
        x0, y0, x1, y1, sa, ss = _floats(row, 6, "material.rect")
        mask = _rect_mask(mesh, x0, y0, x1, y1)
        sigma_a[mask], sigma_s[mask] = sa, ss

    source = np.zeros(mesh.shape)
    for row in cfg.get("source.rect", []):
        x0, y0, x1, y1, q = _floats(row, 5, "source.rect")
        source[_rect_mask(mesh, x0, y0, x1, y1)] = q

    kind = cfg.get("initial.kind", "zero")
    if kind == "zero":
        psi0 = np.zeros(mesh.shape)
    elif kind == "gaussian":
        psi0 = gaussian_pulse(mesh, float(cfg.get("initial.sigma", 0.03)))
    else:
        raise ConfigError(f"unknown initial.kind {kind!r}")

    return ProblemSpec(mesh, sigma_a, sigma_s, source, psi0, t_end,
                       name=cfg.get("problem.name", "custom"))


@dataclass(frozen=True)
class LineSourceParams:
    half_width: float = 1.5
    n_x: int = 200
    n_y: int = 200
    t_end: float = 1.0
    sigma_ic: float = 0.03
    sigma_a: float = 0.0
    sigma_s: float = 1.0

    def __post_init__(self):
        if self.sigma_ic <= 0:
            raise ValueError("sigma_ic must be positive")


@dataclass(frozen=True)
class LatticeParams:
    n_x: int = 280
    n_y: int = 280
    t_end: float = 3.2
    layout: str | None = None   # path to a config file; packaged layout if None


def make_line_source(params: LineSourceParams = LineSourceParams()) -> ProblemSpec:
    h = params.half_width
    mesh = SpatialMesh(-h, h, -h, h, params.n_x, params.n_y)
    return ProblemSpec(mesh, params.sigma_a, params.sigma_s, 0.0,
                       gaussian_pulse(mesh, params.sigma_ic), params.t_end, name="line_source")


def make_lattice(params: LatticeParams = LatticeParams()) -> ProblemSpec:
    cfg = read_config(params.layout) if params.layout else packaged_config("lattice")
    return problem_from_config(cfg, n_x=params.n_x, n_y=params.n_y, t_end=params.t_end)


def make_problem(name_or_path: str, n_x: int | None = None, n_y: int | None = None,
                 t_end: float | None = None) -> ProblemSpec:
    """Problem by name (``line_source``, ``lattice``) or config file path."""
    if name_or_path == "line_source":
        p = LineSourceParams()
        p = replace(p, n_x=n_x or p.n_x, n_y=n_y or p.n_y, t_end=t_end or p.t_end)
        return make_line_source(p)
    if name_or_path == "lattice":
        p = LatticeParams()
        return make_lattice(replace(p, n_x=n_x or p.n_x, n_y=n_y or p.n_y, t_end=t_end or p.t_end))
    return problem_from_config(read_config(name_or_path), n_x=n_x, n_y=n_y, t_end=t_end)
