import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull

from erg_crane.constraints import (
    PITCH, YAW, DegenerateHullError, ObstacleBox, attach_certificates, default_safety_margin,
    embed_obstacle, joint_grid, joint_limit_constraints, obstacle_to_joint_space,
    tangent_embedding, zero_swing_position,
)
from erg_crane.crane_model import CraneParams, forward_kinematics
from erg_crane.linearize import linearize
from erg_crane.synthesis import REFERENCE_GAIN, certificate_margins


@pytest.fixture(scope="module")
def acl():
    mod = linearize([math.pi / 3, 0], CraneParams())
    return mod.A - mod.B @ REFERENCE_GAIN


def outside_hull(hull_pts, pts, tol=1e-12):
    h = ConvexHull(hull_pts)
    return np.any(pts @ h.equations[:, :2].T + h.equations[:, 2] > tol, axis=1)


def inside_hull(hull_pts, pts, tol=1e-12):
    h = ConvexHull(hull_pts)
    return np.all(pts @ h.equations[:, :2].T + h.equations[:, 2] <= tol, axis=1)


# ------------------------------------------------------------------ linear constraints

def test_six_single_axis_constraints():
    lin = joint_limit_constraints()
    assert len(lin) == 6
    for c in lin:
        assert np.count_nonzero(c.beta_x) == 1


def test_rest_state_satisfies_all():
    x = np.zeros(8)
    x[2] = math.pi / 3
    assert all(c.satisfied(x) for c in joint_limit_constraints())


def test_swing_bound_active_on_boundary():
    x = np.zeros(8)
    x[2], x[0] = math.pi / 3, math.pi / 36
    upper = {c.label: c for c in joint_limit_constraints()}["swing1_max"]
    assert upper.margin(x) == 0.0


def test_pitch_bounds_values():
    lin = {c.label: c for c in joint_limit_constraints()}
    x = np.zeros(8)
    x[2] = 8 * math.pi / 9
    assert lin["pitch_max"].margin(x) == 0.0
    x[2] = math.pi / 18
    assert lin["pitch_min"].margin(x) == 0.0


# ------------------------------------------------------------------ boxes

def test_box_validation():
    with pytest.raises(ValueError):
        ObstacleBox([0, 0, 0], [0.1, 0.0, 0.1])
    with pytest.raises(ValueError):
        ObstacleBox([0, 0, 0], [0.1, 0.1, 0.1], safety_margin=-0.1)


def test_default_safety_margin(params):
    assert default_safety_margin(params) == pytest.approx(math.sin(math.pi / 36))
    assert default_safety_margin(params, 0.05) == pytest.approx(math.sin(math.pi / 36) + 0.05)


def test_zero_swing_position_matches_kinematics(params, rng):
    for _ in range(20):
        t3, t4 = rng.uniform(0.2, 2.7), rng.uniform(-3, 3)
        assert np.allclose(zero_swing_position(t3, t4, params),
                           forward_kinematics([0, 0, t3, t4], params), atol=1e-14)


def test_joint_image_hand_inversion(params):
    box = ObstacleBox([math.sqrt(2), math.sqrt(2), -1.0], [0.05, 0.05, 0.05])
    pts = obstacle_to_joint_space(box, params, grid_n=200)
    assert pts.shape[0] > 0
    dist = np.hypot(pts[:, 0] - math.pi / 2, pts[:, 1] - math.pi / 4)
    T3, T4 = joint_grid(200)
    cell = np.hypot(T3[1, 0] - T3[0, 0], T4[0, 1] - T4[0, 0])
    assert dist.min() <= cell


def test_unreachable_box_is_empty(params):
    box = ObstacleBox([0.0, 0.0, params.L - params.l + 0.5], [1.0, 1.0, 0.3], safety_margin=0.1)
    assert obstacle_to_joint_space(box, params).shape == (0, 2)
    assert embed_obstacle(box, params) is None


def test_grid_n_minimum(params):
    with pytest.raises(ValueError):
        obstacle_to_joint_space(ObstacleBox([1, 0, -1], [0.1, 0.1, 0.1]), params, grid_n=4)


def test_grid_refinement_keeps_hull_vertices(params):
    box = ObstacleBox([1.36, -1.36, -1.7], [0.14, 0.14, 0.9], safety_margin=0.14)
    coarse = obstacle_to_joint_space(box, params, grid_n=100)
    fine = obstacle_to_joint_space(box, params, grid_n=200)
    T3, T4 = joint_grid(100)
    cell = np.hypot(T3[1, 0] - T3[0, 0], T4[0, 1] - T4[0, 0])
    verts = coarse[ConvexHull(coarse).vertices]
    for v in verts:
        assert np.hypot(*(fine - v).T).min() <= cell


def test_margin_monotonicity(params):
    small = ObstacleBox([1.25, 0.62, -1.6], [0.85, 0.15, 1.1], safety_margin=0.05)
    large = ObstacleBox([1.25, 0.62, -1.6], [0.85, 0.15, 1.1], safety_margin=0.2)
    a = {tuple(p) for p in obstacle_to_joint_space(small, params, 120)}
    b = {tuple(p) for p in obstacle_to_joint_space(large, params, 120)}
    assert a <= b and len(b) > len(a)


# ------------------------------------------------------------------ tangent embedding

SQUARE = np.array([[1.0, 1.0], [2.0, 1.0], [2.0, 2.0], [1.0, 2.0]])


def test_square_four_axis_halfplanes():
    oc = tangent_embedding(SQUARE, n_t=4)
    assert len(oc.halfplanes) == 4
    normals = {tuple(np.round(n, 12)) for n in oc.normals}
    assert normals == {(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)}
    for beta, _ in oc.halfplanes:
        assert np.count_nonzero(beta) == 1 and np.flatnonzero(beta)[0] in (PITCH, YAW)


def test_square_membership():
    oc = tangent_embedding(SQUARE, n_t=4)
    sat = oc.margins([0.0, 0.0]) > 0
    normals = np.round(oc.normals, 12)
    assert {tuple(n) for n in normals[sat]} == {(-1.0, 0.0), (0.0, -1.0)}
    assert oc.satisfied_count([1.5, 1.5]) == 0
    sat = oc.margins([3.0, 1.5]) > 0
    assert [tuple(n) for n in normals[sat]] == [(1.0, 0.0)]


def test_random_polygon_coverage(rng):
    ang = np.sort(rng.uniform(0, 2 * np.pi, 9))
    poly = np.column_stack([1.5 + 0.6 * np.cos(ang), 0.2 + 0.9 * np.sin(ang)])
    oc = tangent_embedding(poly, n_t=12)
    g3, g4 = np.meshgrid(np.linspace(0, 3, 200), np.linspace(-1.5, 1.5, 200), indexing="ij")
    pts = np.column_stack([g3.ravel(), g4.ravel()])
    count = oc.satisfied_count(pts)
    out = outside_hull(poly, pts)
    assert np.all(count[out] >= 1)
    assert np.all(count[inside_hull(poly, pts)] == 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=3, max_size=30),
       st.integers(3, 16))
def test_embedding_union_property(points, n_t):
    pts = np.array(points)
    try:
        ConvexHull(pts)
    except Exception:
        return
    oc = tangent_embedding(pts, n_t=n_t)
    assert np.all(oc.satisfied_count(pts) == 0)
    far = np.array([[20.0, 0.0], [-20.0, 0.0], [0.0, 20.0], [0.0, -20.0]])
    assert np.all(oc.satisfied_count(far) >= 1)
    for beta, _ in oc.halfplanes:
        assert np.linalg.norm(beta) == pytest.approx(1.0)


def test_collinear_points():
    line = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    with pytest.raises(DegenerateHullError):
        tangent_embedding(line, strict=True)
    oc = tangent_embedding(line, n_t=8)
    assert np.all(oc.satisfied_count(line) == 0)
    assert oc.satisfied_count([0.0, 2.0]) >= 1


def test_embedding_rejects_bad_input():
    with pytest.raises(ValueError):
        tangent_embedding(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        tangent_embedding(SQUARE, n_t=2)


def test_bundled_obstacle_coverage(system):
    """On the embedding grid: box points satisfy no half-plane; everything
    outside the joint-space hull satisfies at least one."""
    grid_n = system.config.constraints.grid_n
    T3, T4 = joint_grid(grid_n)
    pts = np.column_stack([T3.ravel(), T4.ravel()])
    for box, oc in zip(system.boxes, system.obstacles):
        count = oc.satisfied_count(pts)
        in_box = box.contains(zero_swing_position(pts[:, 0], pts[:, 1], system.params))
        assert np.all(count[in_box] == 0), box.label
        pad = 0.5 * np.hypot(T3[1, 0] - T3[0, 0], T4[0, 1] - T4[0, 0])
        assert np.all(count[outside_hull(oc.hull, pts, tol=pad + 1e-9)] >= 1), box.label


# ------------------------------------------------------------------ certificates

def test_attach_certificates(acl):
    oc = attach_certificates(tangent_embedding(SQUARE + 1.0, n_t=4, label="a"), acl)
    assert len(oc.certificates) == 4
    for (beta, _), cert in zip(oc.halfplanes, oc.certificates):
        lyap, floor = certificate_margins(acl, beta, cert.P)
        assert lyap < 0 and floor > 0 and cert.valid


def test_certificates_label_independent_and_idempotent(acl):
    a = attach_certificates(tangent_embedding(SQUARE, n_t=4, label="a"), acl)
    b = attach_certificates(tangent_embedding(SQUARE, n_t=4, label="b"), acl)
    for ca, cb in zip(a.certificates, b.certificates):
        assert np.array_equal(ca.P, cb.P)
    again = attach_certificates(a, acl)
    assert all(c.valid for c in again.certificates)
