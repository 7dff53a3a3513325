import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from raysn.quadrature import build_octahedral_quadrature
from raysn.rotation import (ConservationError, LocateError, apply_interpolation,
                            build_interpolation_operator, conservative_rescale, locate_triangle,
                            phi_rotate_interpolate_1d, point_in_triangle, random_axis,
                            rotate_quadrature, rotation_matrix, second_difference,
                            spherical_barycentric_weights)
from raysn.verify import corrupt_connectivity

QUAD = build_octahedral_quadrature(8)

axes = st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 3).filter(lambda v: np.linalg.norm(v) > 0.1)
angles = st.floats(-math.pi, math.pi, allow_nan=False)


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def test_quarter_turn_about_z():
    R = rotation_matrix((0, 0, 1), math.pi / 2)
    assert np.allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)


@settings(max_examples=300, deadline=None)
@given(axes, angles)
def test_rotation_group_property(axis, angle):
    n = _unit(axis)
    R = rotation_matrix(n, angle)
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-13
    assert abs(np.linalg.det(R) - 1) < 1e-13
    assert np.allclose(R @ n, n, atol=1e-14)


@settings(max_examples=100, deadline=None)
@given(angles, st.floats(0, 2 * math.pi))
def test_z_rotation_shifts_azimuth(delta, phi):
    R = rotation_matrix((0, 0, 1), delta)
    p = np.array([math.cos(phi), math.sin(phi), 0.0])
    assert np.allclose(R @ p, [math.cos(phi + delta), math.sin(phi + delta), 0.0], atol=1e-14)


def test_rejects_non_unit_axis():
    with pytest.raises(ValueError):
        rotation_matrix((1, 1, 0), 0.1)
    with pytest.raises(ValueError):
        rotation_matrix((1, 0), 0.1)


def test_random_axis_seeded_and_uniform():
    a = [random_axis(np.random.default_rng(3)) for _ in range(2)]
    assert np.array_equal(a[0], a[1])
    rng = np.random.default_rng(0)
    v = np.array([random_axis(rng) for _ in range(20000)])
    assert np.allclose(np.linalg.norm(v, axis=1), 1.0)
    # uniform on the sphere: each coordinate has mean 0 and second moment 1/3
    assert np.abs(v.mean(axis=0)).max() < 0.02
    assert np.allclose((v ** 2).mean(axis=0), 1 / 3, atol=0.01)


def test_rotate_quadrature_keeps_weights():
    R = rotation_matrix(_unit([1, 2, 3]), 0.4)
    q = rotate_quadrature(QUAD, R)
    assert q.weights is QUAD.weights
    assert np.allclose(q.points, QUAD.points @ R.T)


@settings(max_examples=300, deadline=None)
@given(axes, st.integers(0, QUAD.n_points - 1))
def test_locate_any_direction(p, hint):
    p = _unit(p)
    t = locate_triangle(QUAD, p, hint)
    assert point_in_triangle(QUAD, t, p)


def test_locate_vertices():
    for v, p in enumerate(QUAD.points):
        t = locate_triangle(QUAD, p, (v + 50) % QUAD.n_points)
        assert v in QUAD.triangles[t]


def test_locate_fails_on_corrupt_connectivity():
    bad = corrupt_connectivity(QUAD)
    with pytest.raises(LocateError):
        locate_triangle(bad, QUAD.points[0])


def test_barycentric_weights_at_vertices_and_centroid():
    t = 17
    a, b, c = QUAD.points[QUAD.triangles[t]]
    for k, p in enumerate((a, b, c)):
        w = spherical_barycentric_weights(QUAD, t, p)
        assert np.allclose(w, np.eye(3)[k], atol=1e-12)
    # a point on an edge puts no weight on the opposite vertex
    w = spherical_barycentric_weights(QUAD, t, _unit(a + b))
    assert w[2] == 0.0 and w.sum() == pytest.approx(1.0)


@settings(max_examples=200, deadline=None)
@given(axes, st.floats(0, 0.5), st.integers(0, 2 ** 32 - 1))
def test_operator_invariants(axis, angle, seed):
    R = rotation_matrix(_unit(axis), angle)
    op = build_interpolation_operator(QUAD, QUAD.points @ R.T)
    assert op.n_rows == op.n_cols == QUAD.n_points
    assert op.columns.shape == (QUAD.n_points, 3)
    assert np.all(op.weights >= 0)
    assert np.abs(op.weights.sum(axis=1) - 1).max() < 1e-12
    assert np.array_equal(op.columns, QUAD.triangles[op.triangles])
    v = np.random.default_rng(seed).uniform(0, 1, QUAD.n_points)
    assert apply_interpolation(op, v).min() >= 0


def test_identity_for_zero_rotation():
    op = build_interpolation_operator(QUAD, QUAD.points)
    assert np.array_equal(op.to_dense(), np.eye(QUAD.n_points))


def test_operator_approaches_identity_linearly():
    axis = _unit([0.3, -0.2, 0.9])
    devs = []
    for angle in (1e-2, 1e-3):
        op = build_interpolation_operator(QUAD, QUAD.points @ rotation_matrix(axis, angle).T)
        devs.append(np.abs(op.to_dense() - np.eye(QUAD.n_points)).max())
    assert 5 < devs[0] / devs[1] < 20


def test_operator_reproduces_smooth_field_to_second_order():
    f = lambda p: np.exp(p[:, 0] - 0.5 * p[:, 2])  # noqa: E731
    targets = np.random.default_rng(0).standard_normal((1000, 3))
    targets /= np.linalg.norm(targets, axis=1)[:, None]
    errs = []
    for n in (8, 16, 32):
        q = build_octahedral_quadrature(n)
        op = build_interpolation_operator(q, targets, hints=np.argmax(targets @ q.points.T, axis=1))
        errs.append(np.abs(op.apply(f(q.points)) - f(targets)).max())
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_operator_applies_along_first_axis():
    R = rotation_matrix(_unit([0, 1, 1]), 0.1)
    op = build_interpolation_operator(QUAD, QUAD.points @ R.T)
    field = np.random.default_rng(1).uniform(size=(QUAD.n_points, 4, 5))
    out = apply_interpolation(op, field)
    assert out.shape == field.shape
    assert np.allclose(out[:, 2, 3], op.to_dense() @ field[:, 2, 3])
    with pytest.raises(ValueError):
        apply_interpolation(op, field[:-1])


def test_operator_csv(tmp_path):
    op = build_interpolation_operator(QUAD, QUAD.points @ rotation_matrix((0, 0, 1), 0.2).T)
    op.write_csv(tmp_path / "w.csv")
    with open(tmp_path / "w.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 * QUAD.n_points
    dense = np.zeros((QUAD.n_points, QUAD.n_points))
    for r in rows:
        dense[int(r["row"]), int(r["col"])] += float(r["weight"])
    assert np.array_equal(dense, op.to_dense())


def test_conservative_rescale_per_cell():
    rng = np.random.default_rng(2)
    old = rng.uniform(size=(QUAD.n_points, 3, 3))
    op = build_interpolation_operator(QUAD, QUAD.points @ rotation_matrix(_unit([1, 0, 1]), 0.3).T)
    new = conservative_rescale(op.apply(old), old, QUAD.weights)
    m_old = np.tensordot(QUAD.weights, old, axes=(0, 0))
    m_new = np.tensordot(QUAD.weights, new, axes=(0, 0))
    assert np.abs(m_new / m_old - 1).max() < 1e-14


def test_conservative_rescale_detects_lost_mass():
    old = np.ones((3, 2))
    with pytest.raises(ConservationError):
        conservative_rescale(np.zeros((3, 2)), old, np.ones(3))


@pytest.mark.parametrize("a", [0.0, 0.3, 1.0, -0.4])
def test_phi_interp_preserves_constants(a):
    assert np.allclose(phi_rotate_interpolate_1d(np.full(12, 2.5), a), 2.5)


def test_phi_interp_endpoints():
    v = np.arange(6.0)
    assert np.array_equal(phi_rotate_interpolate_1d(v, 0.0), v)
    assert np.array_equal(phi_rotate_interpolate_1d(v, 1.0), np.roll(v, -1))
    assert np.array_equal(phi_rotate_interpolate_1d(v, -1.0), np.roll(v, 1))
    assert np.allclose(phi_rotate_interpolate_1d(v, 0.25)[:5], v[:5] + 0.25)
    with pytest.raises(ValueError):
        phi_rotate_interpolate_1d(v, 1.5)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.integers(3, 64), st.integers(0, 2 ** 32 - 1))
def test_back_and_forth_identity(a, n, seed):
    v = np.random.default_rng(seed).standard_normal(n)
    back = phi_rotate_interpolate_1d(phi_rotate_interpolate_1d(v, a), -a)
    assert np.abs(back - (v + a * (1 - a) * second_difference(v))).max() <= 1e-13


def test_phi_interp_axis_argument():
    v = np.random.default_rng(0).standard_normal((3, 8))
    out = phi_rotate_interpolate_1d(v, 0.4, axis=1)
    assert np.allclose(out[1], phi_rotate_interpolate_1d(v[1], 0.4))
