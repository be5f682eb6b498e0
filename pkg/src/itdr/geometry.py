"""Planar rigid-body algebra and pose averaging.

Angles are radians on the half-open interval (-pi, pi]; -pi maps to pi.
All types are frozen dataclasses and every function here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# (x, y, theta) evaluation flags
FULL_MASK = (True, True, True)
GRIPPER_MASK = (True, False, True)

_RESULTANT_FLOOR = 1e-9


class DegenerateMeanError(ValueError):
    """Orientation estimates are contradictory (resultant vector ~ 0)."""

    def __init__(self, message: str, angles: Optional[Sequence[float]] = None):
        super().__init__(message)
        self.angles = list(angles) if angles is not None else []


def wrap_angle(theta: float) -> float:
    """Map ``theta`` onto (-pi, pi]."""
    theta = float(theta)
    if not math.isfinite(theta):
        raise ValueError(f"cannot wrap non-finite angle {theta!r}")
    w = math.fmod(theta + math.pi, TWO_PI)
    if w <= 0.0:
        w += TWO_PI
    w -= math.pi
    # fmod rounding can land a hair outside the interval
    if w <= -math.pi:
        w = math.pi
    return w


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    """Vectorised :func:`wrap_angle`."""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("cannot wrap non-finite angles")
    w = np.mod(theta + np.pi, TWO_PI)
    w = np.where(w <= 0.0, w + TWO_PI, w) - np.pi
    return np.where(w <= -np.pi, np.pi, w)


def angular_distance(a: float, b: float) -> float:
    """Unsigned distance between two angles, in [0, pi]."""
    return abs(wrap_angle(a - b))


def mask_to_str(mask: Sequence[bool]) -> str:
    return "".join("1" if m else "0" for m in mask)


def mask_from_str(text: str) -> tuple[bool, bool, bool]:
    if len(text) != 3 or set(text) - {"0", "1"}:
        raise ValueError(f"mask must be three characters over {{0,1}}, got {text!r}")
    return tuple(c == "1" for c in text)  # type: ignore[return-value]


@dataclass(frozen=True)
class Pose2:
    """Planar pose of an object; ``mask`` flags the evaluated (x, y, theta)."""

    x: float
    y: float
    theta: float
    mask: tuple[bool, bool, bool] = field(default=FULL_MASK)

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(self.theta))
        mask = tuple(bool(m) for m in self.mask)
        if len(mask) != 3 or not any(mask):
            raise ValueError(f"pose mask needs three flags with at least one set, got {self.mask!r}")
        object.__setattr__(self, "mask", mask)

    def with_mask(self, mask: Sequence[bool]) -> "Pose2":
        return Pose2(self.x, self.y, self.theta, tuple(mask))

    def as_transform(self) -> "RigidTransform2":
        """The frame whose origin/heading is this pose."""
        return RigidTransform2(self.theta, self.x, self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


@dataclass(frozen=True)
class RigidTransform2:
    """Element of SE(2): rotate by ``rotation`` about the origin, then translate."""

    rotation: float = 0.0
    dx: float = 0.0
    dy: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "rotation", wrap_angle(self.rotation))
        object.__setattr__(self, "dx", float(self.dx))
        object.__setattr__(self, "dy", float(self.dy))

    @classmethod
    def identity(cls) -> "RigidTransform2":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def translation(cls, dx: float, dy: float) -> "RigidTransform2":
        return cls(0.0, dx, dy)

    @classmethod
    def rotation_about(cls, angle: float, cx: float = 0.0, cy: float = 0.0) -> "RigidTransform2":
        """Rotation by ``angle`` about the point (cx, cy)."""
        c, s = math.cos(angle), math.sin(angle)
        return cls(angle, cx - (c * cx - s * cy), cy - (s * cx + c * cy))

    @property
    def translation_xy(self) -> tuple[float, float]:
        return (self.dx, self.dy)

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return np.array([[c, -s, self.dx], [s, c, self.dy], [0.0, 0.0, 1.0]])

    def apply_point(self, px: float, py: float) -> tuple[float, float]:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return (c * px - s * py + self.dx, s * px + c * py + self.dy)

    def apply_points(self, pts: np.ndarray) -> np.ndarray:
        """Transform an (N, 2) array of points."""
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        pts = np.asarray(pts, dtype=float)
        out = np.empty_like(pts)
        out[..., 0] = c * pts[..., 0] - s * pts[..., 1] + self.dx
        out[..., 1] = s * pts[..., 0] + c * pts[..., 1] + self.dy
        return out

    def is_identity(self, tol: float = 0.0) -> bool:
        return abs(self.rotation) <= tol and abs(self.dx) <= tol and abs(self.dy) <= tol


IDENTITY = RigidTransform2.identity()


def compose(a: RigidTransform2, b: RigidTransform2) -> RigidTransform2:
    """``a`` after ``b``: apply ``b`` first, then ``a``."""
    c, s = math.cos(a.rotation), math.sin(a.rotation)
    return RigidTransform2(
        a.rotation + b.rotation,
        c * b.dx - s * b.dy + a.dx,
        s * b.dx + c * b.dy + a.dy,
    )


def inverse(t: RigidTransform2) -> RigidTransform2:
    c, s = math.cos(t.rotation), math.sin(t.rotation)
    return RigidTransform2(-t.rotation, -(c * t.dx + s * t.dy), -(-s * t.dx + c * t.dy))


def apply(t: RigidTransform2, p: Pose2) -> Pose2:
    """Act on a pose: position rotated then translated, heading incremented."""
    x, y = t.apply_point(p.x, p.y)
    return Pose2(x, y, p.theta + t.rotation, p.mask)


def transform_from_pose(p: Pose2) -> RigidTransform2:
    return RigidTransform2(p.theta, p.x, p.y)


def pose_from_transform(t: RigidTransform2, mask: Sequence[bool] = FULL_MASK) -> Pose2:
    return Pose2(t.dx, t.dy, t.rotation, tuple(mask))


def relative_pose(frame: Pose2, target: Pose2, mask: Optional[Sequence[bool]] = None) -> Pose2:
    """Pose of ``target`` expressed in the frame attached to ``frame`` (both in world)."""
    rel = compose(inverse(transform_from_pose(frame)), transform_from_pose(target))
    return pose_from_transform(rel, target.mask if mask is None else mask)


def frame_change(t: RigidTransform2, frame: Pose2) -> RigidTransform2:
    """Label-space map induced by moving a reference frame rigidly in the world.

    If the reference object sitting at world pose ``frame`` is moved by the
    world transform ``t``, any label ``L`` expressed relative to it becomes
    ``apply(frame_change(t, frame), L)``.
    """
    r = transform_from_pose(frame)
    return compose(inverse(r), compose(inverse(t), r))


def circular_mean(angles: Iterable[float]) -> float:
    """Direction of the resultant of unit vectors at ``angles``.

    Raises :class:`DegenerateMeanError` when the resultant length is at most
    1e-9, i.e. the orientations cancel and no mean direction exists.
    """
    arr = np.asarray(list(angles), dtype=float)
    if arr.size == 0:
        raise ValueError("circular_mean of an empty set")
    s = float(np.mean(np.sin(arr)))
    c = float(np.mean(np.cos(arr)))
    if math.hypot(s, c) <= _RESULTANT_FLOOR:
        raise DegenerateMeanError("orientation estimates contradictory: zero resultant", arr.tolist())
    return wrap_angle(math.atan2(s, c))


def pose_mean(poses: Sequence[Pose2]) -> Pose2:
    """Uniform sample average: arithmetic in position, circular in heading."""
    if len(poses) == 0:
        raise ValueError("pose_mean of an empty set")
    mask = poses[0].mask
    for p in poses[1:]:
        if p.mask != mask:
            raise ValueError(f"pose masks differ: {mask} vs {p.mask}")
    if len(poses) == 1:
        return poses[0]
    first = poses[0]
    if all(p == first for p in poses[1:]):
        return first
    xs = math.fsum(p.x for p in poses) / len(poses)
    ys = math.fsum(p.y for p in poses) / len(poses)
    theta = circular_mean([p.theta for p in poses])
    return Pose2(xs, ys, theta, mask)


@dataclass(frozen=True)
class ErrorVector:
    """Per-component absolute error; ``None`` marks an unevaluated component."""

    ex: Optional[float]
    ey: Optional[float]
    etheta: Optional[float]

    def __post_init__(self):
        for name in ("ex", "ey", "etheta"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be >= 0, got {v}")
        if self.etheta is not None and self.etheta > math.pi + 1e-12:
            raise ValueError(f"etheta must be <= pi, got {self.etheta}")

    def as_tuple(self) -> tuple[Optional[float], Optional[float], Optional[float]]:
        return (self.ex, self.ey, self.etheta)


def pose_error(truth: Pose2, est: Pose2) -> ErrorVector:
    if truth.mask != est.mask:
        raise ValueError(f"pose masks differ: {truth.mask} vs {est.mask}")
    mx, my, mt = truth.mask
    return ErrorVector(
        abs(truth.x - est.x) if mx else None,
        abs(truth.y - est.y) if my else None,
        angular_distance(truth.theta, est.theta) if mt else None,
    )


def mean_error(errors: Sequence[ErrorVector]) -> ErrorVector:
    """Component-wise mean over a non-empty list of error vectors."""
    if not errors:
        raise ValueError("mean_error of an empty set")
    out = []
    for i in range(3):
        vals = [e.as_tuple()[i] for e in errors]
        if vals[0] is None:
            out.append(None)
        else:
            out.append(math.fsum(vals) / len(vals))
    return ErrorVector(*out)
