"""Self-checks of the quadrature, interpolation and stencil properties."""
from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from .analysis import planar_stencil_experiment, verify_back_forth_2d
from .quadrature import (FOUR_PI, WEIGHT_RATIO_LIMIT, build_octahedral_quadrature,
                         integration_error_table, octahedral_point_count, quadrature_stats)
from .rotation import (LocateError, apply_interpolation, build_interpolation_operator,
                       locate_triangle, point_in_triangle, random_axis, rotation_matrix)

# published integration errors: (N, N_q, g error, h error)
REFERENCE_ERRORS = [
    (2, 6, -0.359039, 2.46015),
    (4, 38, -0.012968, 0.073617),
    (8, 198, -0.00234195, 0.0265397),
    (16, 902, -0.000530132, 0.00607712),
    (32, 3846, -0.000125148, 0.00143802),
    (64, 15878, -3.03595e-05, 0.000349035),
]


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def sig_fig_match(value: float, reference: float, digits: int = 4) -> bool:
    """True when ``value`` rounds to ``reference`` at ``digits`` significant figures."""
    if reference == 0:
        return value == 0
    scale = 10 ** (math.floor(math.log10(abs(reference))) - digits + 1)
    return round(value / scale) == round(reference / scale)


def corrupt_connectivity(quad):
    """Copy of ``quad`` whose triangles around vertex 0 are replaced by a
    far-away triangle, leaving a hole in the tiling (test hook)."""
    tris = quad.triangles.copy()
    far = int(np.argmin(quad.points[tris].mean(axis=1) @ quad.points[0]))
    tris[quad.incident_triangles(0)] = tris[far]
    return type(quad)(quad.order, quad.points, quad.weights, tris, quad.vertex_triangles)


def _check_counts():
    counts = {n: build_octahedral_quadrature(n).n_points for n in (2, 4, 8, 16, 32, 64)}
    bad = [(n, c) for n, c in counts.items() if c != octahedral_point_count(n)]
    return not bad, f"mismatches: {bad}" if bad else "N_q = 4N^2-8N+6 for N in 2..64"


def _check_weights():
    q = build_octahedral_quadrature(8)
    total = q.weights.sum()
    ok = abs(total - FOUR_PI) / FOUR_PI < 1e-12 and np.all(q.weights > 0)
    return ok, f"sum-4pi = {total - FOUR_PI:.2e}, min w = {q.weights.min():.3e}"


def _check_reference_errors():
    rows = integration_error_table([r[0] for r in REFERENCE_ERRORS])
    bad = [r.order for r, ref in zip(rows, REFERENCE_ERRORS)
           if not (r.n_points == ref[1] and sig_fig_match(r.g_error, ref[2]) and sig_fig_match(r.h_error, ref[3]))]
    return not bad, f"orders off at 4 s.f.: {bad}" if bad else "g, h errors agree to 4 s.f."


def _check_ratio():
    ratios = [quadrature_stats(build_octahedral_quadrature(n)).ratio for n in (2, 4, 8, 16, 32, 64)]
    ok = all(b > a for a, b in zip(ratios, ratios[1:])) and abs(ratios[-1] / WEIGHT_RATIO_LIMIT - 1) < 0.05
    return ok, f"ratio(64) = {ratios[-1]:.4f}, limit {WEIGHT_RATIO_LIMIT:.4f}"


def _check_operator(quad, seed, cases=200):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        angle = rng.uniform(0.0, 0.3)
        R = rotation_matrix(random_axis(rng), angle)
        op = build_interpolation_operator(quad, quad.points @ R.T)
        worst = max(worst, float(np.abs(op.weights.sum(axis=1) - 1).max()))
        if op.weights.min() < 0:
            return False, "negative interpolation weight"
        if not np.array_equal(np.sort(op.columns, axis=1), np.sort(quad.triangles[op.triangles], axis=1)):
            return False, "row columns are not a source triangle"
        v = rng.uniform(0.0, 1.0, quad.n_points)
        if apply_interpolation(op, v).min() < 0:
            return False, "positivity violated"
    return worst < 1e-12, f"{cases} rotations, max |row sum - 1| = {worst:.1e}"


def _check_identity(quad):
    op = build_interpolation_operator(quad, quad.points)
    err = float(np.abs(op.to_dense() - np.eye(quad.n_points)).max())
    return err < 1e-12, f"max |W - I| = {err:.1e}"


def _check_locate(quad, seed):
    rng = np.random.default_rng(seed)
    R = rotation_matrix(random_axis(rng), 1e-3)
    moved = quad.points @ R.T
    for v, p in enumerate(moved):
        t = locate_triangle(quad, p, v)
        if not point_in_triangle(quad, t, p):
            return False, f"vertex {v}: triangle {t} does not contain the point"
    return True, f"all {quad.n_points} rotated vertices located"


def _check_back_forth():
    dev = max(verify_back_forth_2d(32, a) for a in (0.1, 0.5, 0.9))
    return dev <= 1e-13, f"max deviation {dev:.1e}"


def _check_stencil():
    worst = 0.0
    for alpha in (0.0, math.pi / 12, math.pi / 6, math.pi / 4):
        r = planar_stencil_experiment(alpha, 1e-3)
        for m, e in ((r.c1_measured, r.c1_exact), (r.c2_measured, r.c2_exact)):
            if abs(e) > 1e-12:
                worst = max(worst, abs(m / e - 1))
    return worst < 0.02, f"max relative error in c1, c2: {worst:.2e}"


def run_checks(seed: int = 0, corrupt: bool = False) -> list[CheckResult]:
    quad = build_octahedral_quadrature(8)
    if corrupt:
        quad = corrupt_connectivity(quad)
    checks: list[tuple[str, Callable[[], tuple[bool, str]]]] = [
        ("quadrature.point_count", _check_counts),
        ("quadrature.weights", _check_weights),
        ("quadrature.reference_errors", _check_reference_errors),
        ("quadrature.weight_ratio", _check_ratio),
        ("interpolation.locate_triangle", lambda: _check_locate(quad, seed)),
        ("interpolation.operator", lambda: _check_operator(quad, seed)),
        ("interpolation.identity", lambda: _check_identity(quad)),
        ("interpolation.back_forth_1d", _check_back_forth),
        ("analysis.planar_stencil", _check_stencil),
    ]
    results = []
    for name, fn in checks:
        try:
            ok, detail = fn()
        except LocateError as exc:
            ok, detail = False, f"LocateError: {exc}"
        results.append(CheckResult(name, bool(ok), detail))
    return results


def format_results(results) -> str:
    width = max(len(r.name) for r in results)
    return "\n".join(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}" for r in results)
