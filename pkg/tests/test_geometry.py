import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from itdr.geometry import (
    GRIPPER_MASK,
    IDENTITY,
    DegenerateMeanError,
    ErrorVector,
    Pose2,
    RigidTransform2,
    angular_distance,
    apply,
    circular_mean,
    compose,
    frame_change,
    inverse,
    mean_error,
    pose_error,
    pose_mean,
    relative_pose,
    wrap_angle,
)

PI = math.pi

angles = st.floats(-PI, PI, allow_nan=False)
coords = st.floats(-5, 5, allow_nan=False)
transforms = st.builds(RigidTransform2, angles, coords, coords)
poses = st.builds(Pose2, coords, coords, angles)


def close_t(a, b, tol=1e-9):
    return (
        angular_distance(a.rotation, b.rotation) <= tol and abs(a.dx - b.dx) <= tol and abs(a.dy - b.dy) <= tol
    )


def close_p(a, b, tol=1e-9):
    return abs(a.x - b.x) <= tol and abs(a.y - b.y) <= tol and angular_distance(a.theta, b.theta) <= tol


# --- wrap_angle ---------------------------------------------------------------------


def test_wrap_angle_examples():
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(3 * PI) == pytest.approx(PI)
    assert wrap_angle(-PI) == PI


def test_wrap_angle_rejects_non_finite():
    for bad in (math.inf, -math.inf, math.nan):
        with pytest.raises(ValueError):
            wrap_angle(bad)


@given(st.floats(-1e4, 1e4, allow_nan=False))
def test_wrap_angle_range_and_congruence(theta):
    w = wrap_angle(theta)
    assert -PI < w <= PI
    k = (theta - w) / (2 * PI)
    assert abs(k - round(k)) < 1e-9


def test_pose_and_transform_wrap_on_construction():
    assert Pose2(0, 0, -PI).theta == PI
    assert RigidTransform2(3 * PI, 0, 0).rotation == pytest.approx(PI)


def test_pose_mask_needs_one_component():
    with pytest.raises(ValueError):
        Pose2(0, 0, 0, (0, 0, 0))


# --- compose / inverse / apply ------------------------------------------------------


def test_compose_examples():
    t = RigidTransform2(0.3, 1.0, -2.0)
    assert compose(t, IDENTITY) == t
    r = compose(RigidTransform2(PI / 2, 0, 0), RigidTransform2(PI / 2, 0, 0))
    assert r.rotation == pytest.approx(PI) and r.dx == 0 and r.dy == 0
    c = compose(RigidTransform2.translation(1, 0), RigidTransform2(PI / 2, 0, 0))
    assert c.apply_point(1, 0) == pytest.approx((1, 1))


def test_inverse_examples():
    inv = inverse(RigidTransform2.translation(1, 2))
    assert (inv.rotation, inv.dx, inv.dy) == (0, -1, -2)
    assert inverse(IDENTITY).is_identity()


def test_inverse_round_trip_on_random_poses():
    t = RigidTransform2(PI / 2, 1, 0)
    rng = np.random.default_rng(3)
    worst = 0.0
    for x, y, th in rng.uniform(-3, 3, size=(10_000, 3)):
        p = Pose2(x, y, th)
        q = apply(inverse(t), apply(t, p))
        worst = max(worst, abs(q.x - p.x), abs(q.y - p.y), angular_distance(q.theta, p.theta))
    assert worst < 1e-9


def test_apply_examples():
    p = Pose2(0.3, -0.2, 1.0, GRIPPER_MASK)
    assert apply(IDENTITY, p) == p
    q = apply(RigidTransform2(PI, 0, 0), Pose2(1, 0, 0))
    assert q.x == pytest.approx(-1) and q.y == pytest.approx(0, abs=1e-15) and q.theta == PI
    assert apply(RigidTransform2(0.5, 1, 1), p).mask == GRIPPER_MASK


@given(transforms, transforms, transforms)
def test_compose_associative(a, b, c):
    assert close_t(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-12 * 50)


@given(transforms)
def test_inverse_is_two_sided(t):
    assert close_t(compose(t, inverse(t)), IDENTITY)
    assert close_t(compose(inverse(t), t), IDENTITY)


@given(transforms, transforms, poses)
def test_apply_is_group_action(a, b, p):
    assert close_p(apply(compose(a, b), p), apply(a, apply(b, p)))


@given(transforms, poses)
def test_apply_round_trip(t, p):
    assert close_p(apply(inverse(t), apply(t, p)), p)


# --- frames ---------------------------------------------------------------------------


@given(poses, poses, transforms)
def test_frame_change_matches_world_recomputation(frame, target, t):
    before = relative_pose(frame, target)
    moved_frame = apply(t, frame)
    after = relative_pose(moved_frame, target)
    assert close_p(apply(frame_change(t, frame), before), after)


def test_frame_change_pure_translation_of_unrotated_frame():
    # moving the reference +0.76 m in x shifts the label by -0.76 m
    fc = frame_change(RigidTransform2.translation(0.76, 0), Pose2(-0.38, -0.38, 0))
    label = apply(fc, Pose2(0.5, 0.2, 0.3))
    assert label.x == pytest.approx(0.5 - 0.76) and label.y == pytest.approx(0.2)
    assert label.theta == pytest.approx(0.3)


# --- circular mean --------------------------------------------------------------------


def test_circular_mean_examples():
    assert circular_mean([0.1, -0.1]) == pytest.approx(0.0, abs=1e-15)
    assert circular_mean([PI - 0.1, -(PI - 0.1)]) == pytest.approx(PI)
    assert circular_mean([0, PI / 2, PI / 4]) == pytest.approx(PI / 4)


def test_circular_mean_errors():
    with pytest.raises(ValueError):
        circular_mean([])
    with pytest.raises(DegenerateMeanError) as info:
        circular_mean([0.0, PI])
    assert info.value.angles == [0.0, PI]
    with pytest.raises(DegenerateMeanError):
        circular_mean([0, 2 * PI / 3, -2 * PI / 3])


@given(st.lists(angles, min_size=1, max_size=9), angles)
def test_circular_mean_rotation_equivariant(thetas, delta):
    s = np.mean(np.sin(thetas))
    c = np.mean(np.cos(thetas))
    assume(math.hypot(s, c) > 1e-3)
    shifted = circular_mean([t + delta for t in thetas])
    assert angular_distance(shifted, wrap_angle(circular_mean(thetas) + delta)) < 1e-9


def _grid_argmin(thetas, chord: bool, n=1_000_000):
    grid = np.linspace(-PI, PI, n, endpoint=False)
    cost = np.zeros(n)
    for t in thetas:
        if chord:
            cost += 2.0 - 2.0 * np.cos(grid - t)
        else:
            d = np.abs((grid - t + PI) % (2 * PI) - PI)
            cost += d * d
    return grid[np.argmin(cost)]


def test_circular_mean_minimizes_squared_chord_on_seven_angles():
    thetas = [2.9, 3.05, -3.1, 3.12, -2.95, 2.99, 3.0]
    assert angular_distance(circular_mean(thetas), _grid_argmin(thetas, chord=True)) <= 2 * PI / 1e6


def test_circular_mean_is_arc_midpoint_for_two_angles():
    rng = np.random.default_rng(11)
    for a, b in rng.uniform(-PI, PI, size=(20, 2)):
        if angular_distance(a, b) > PI - 1e-3:
            continue
        assert angular_distance(circular_mean([a, b]), _grid_argmin([a, b], chord=False)) <= 2 * PI / 1e6


def test_circular_mean_differs_from_arc_least_squares():
    # the resultant direction is not the minimizer of squared arc length
    thetas = [0.0, 0.0, 1.0]
    assert angular_distance(circular_mean(thetas), _grid_argmin(thetas, chord=False)) > 1e-2


# --- pose mean / error ----------------------------------------------------------------


def test_pose_mean_examples():
    p = Pose2(0.1, 0.2, 0.3)
    assert pose_mean([p]) is p
    assert pose_mean([Pose2(1, 0, 0), Pose2(3, 0, 0)]) == Pose2(2, 0, 0)
    m = pose_mean([Pose2(0, 0, PI - 0.1), Pose2(0, 0, -(PI - 0.1))])
    assert m.theta == pytest.approx(PI)


def test_pose_mean_identical_inputs_exact():
    p = Pose2(0.123456789, -0.987654321, 2.5)
    assert pose_mean([p] * 7) == p


def test_pose_mean_mask_mismatch():
    with pytest.raises(ValueError):
        pose_mean([Pose2(0, 0, 0), Pose2(0, 0, 0, GRIPPER_MASK)])


def test_pose_error_examples():
    p = Pose2(0.2, 0.1, 1.0)
    assert pose_error(p, p) == ErrorVector(0, 0, 0)
    e = pose_error(Pose2(0, 0, PI - 0.05), Pose2(0, 0, -(PI - 0.05)))
    assert e.etheta == pytest.approx(0.1)
    assert pose_error(Pose2(1, 2, 0), Pose2(0, 0, 0)) == ErrorVector(1, 2, 0)


def test_pose_error_masked_component_absent():
    e = pose_error(Pose2(1, 2, 0, GRIPPER_MASK), Pose2(0, 0, 0, GRIPPER_MASK))
    assert e.ey is None and e.ex == 1
    with pytest.raises(ValueError):
        pose_error(Pose2(0, 0, 0), Pose2(0, 0, 0, GRIPPER_MASK))


@given(angles, angles)
def test_pose_error_theta_symmetric(a, b):
    ab = pose_error(Pose2(0, 0, a), Pose2(0, 0, b)).etheta
    ba = pose_error(Pose2(0, 0, b), Pose2(0, 0, a)).etheta
    assert ab == pytest.approx(ba, abs=1e-12)


def test_error_vector_invariants():
    with pytest.raises(ValueError):
        ErrorVector(-1, 0, 0)
    with pytest.raises(ValueError):
        ErrorVector(0, 0, 4.0)
    m = mean_error([ErrorVector(1, None, 0.5), ErrorVector(3, None, 0.1)])
    assert m.ex == 2 and m.ey is None and m.etheta == pytest.approx(0.3)
