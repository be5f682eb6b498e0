"""Value types describing a tabletop scene."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..geometry import FULL_MASK, Pose2, RigidTransform2, apply, relative_pose, wrap_angle

ENTITIES = ("target", "reference", "camera_orbit")
SCENARIOS = ("reference", "gripper", "camera")

CYLINDER_SEGMENTS = 16

# peg head: a wider block at the +x end so the heading is observable
PEG_HEAD_LENGTH_FRAC = 0.25
PEG_HEAD_WIDTH_FRAC = 1.75


class SceneError(ValueError):
    """Base class for invalid scene construction or manipulation."""


class OutOfRegionError(SceneError):
    pass


class DegenerateCameraError(SceneError):
    pass


@dataclass(frozen=True)
class Shape:
    """A primitive resting on the table.

    ``kind`` is one of ``peg`` (length, width, height), ``box`` (sx, sy, sz)
    or ``cylinder`` (radius, height).
    """

    kind: str
    dims: tuple[float, ...]

    def __post_init__(self):
        expected = {"peg": 3, "box": 3, "cylinder": 2}
        if self.kind not in expected:
            raise SceneError(f"unknown shape kind {self.kind!r}")
        if len(self.dims) != expected[self.kind] or any(d <= 0 for d in self.dims):
            raise SceneError(f"bad dims {self.dims!r} for {self.kind}")
        object.__setattr__(self, "dims", tuple(float(d) for d in self.dims))

    def scaled(self, factor: float) -> "Shape":
        return Shape(self.kind, tuple(d * factor for d in self.dims))

    def boxes(self) -> list[tuple[float, float, float, float, float]]:
        """Axis-aligned (in object frame) boxes as (cx, cy, sx, sy, sz)."""
        if self.kind == "box":
            sx, sy, sz = self.dims
            return [(0.0, 0.0, sx, sy, sz)]
        if self.kind == "peg":
            length, width, height = self.dims
            head_len = PEG_HEAD_LENGTH_FRAC * length
            return [
                (0.0, 0.0, length, width, height),
                (length / 2 - head_len / 2, 0.0, head_len, PEG_HEAD_WIDTH_FRAC * width, height),
            ]
        return []

    def footprint(self) -> np.ndarray:
        """Outline points of the footprint in the object frame, shape (N, 2); read-only."""
        return _footprint(self)

    @property
    def radius(self) -> float:
        """Bounding-circle radius about the object origin."""
        return _radius(self)


@functools.lru_cache(maxsize=256)
def _footprint(shape: Shape) -> np.ndarray:
    if shape.kind == "cylinder":
        r = shape.dims[0]
        a = np.linspace(0.0, 2 * math.pi, CYLINDER_SEGMENTS, endpoint=False)
        pts = np.stack([r * np.cos(a), r * np.sin(a)], axis=1)
    else:
        pts = np.array(
            [
                (cx + ux * sx, cy + uy * sy)
                for cx, cy, sx, sy, _ in shape.boxes()
                for ux in (-0.5, 0.5)
                for uy in (-0.5, 0.5)
            ]
        )
    pts.flags.writeable = False
    return pts


@functools.lru_cache(maxsize=256)
def _radius(shape: Shape) -> float:
    return float(np.max(np.hypot(*_footprint(shape).T)))


@dataclass(frozen=True)
class SceneObject:
    shape: Shape
    pose: Pose2

    def footprint_world(self) -> np.ndarray:
        return self.pose.as_transform().apply_points(self.shape.footprint())

    def moved(self, t: RigidTransform2) -> "SceneObject":
        return SceneObject(self.shape, apply(t, self.pose))


@dataclass(frozen=True)
class CameraPose:
    eye: tuple[float, float, float]
    look_at: tuple[float, float, float] = (0.0, 0.0, 0.0)
    up: tuple[float, float, float] = (0.0, 0.0, 1.0)
    vertical_fov: float = math.radians(50.0)

    def __post_init__(self):
        for name in ("eye", "look_at", "up"):
            v = tuple(float(c) for c in getattr(self, name))
            if len(v) != 3 or not all(math.isfinite(c) for c in v):
                raise SceneError(f"camera {name} must be a finite 3-vector, got {v!r}")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "vertical_fov", float(self.vertical_fov))

    def validate(self) -> None:
        self.basis()

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Right, up and forward unit vectors of the view."""
        if not 0.0 < self.vertical_fov < math.pi:
            raise DegenerateCameraError(f"vertical fov {self.vertical_fov} outside (0, pi)")
        fwd = np.subtract(self.look_at, self.eye)
        n = np.linalg.norm(fwd)
        if n < 1e-12:
            raise DegenerateCameraError("camera eye coincides with look_at")
        fwd = fwd / n
        right = np.cross(fwd, self.up)
        rn = np.linalg.norm(right)
        if rn < 1e-9:
            raise DegenerateCameraError("camera up vector parallel to view direction")
        right = right / rn
        return right, np.cross(right, fwd), fwd


@dataclass(frozen=True)
class Scene:
    """Geometric ground truth of one tabletop arrangement (world frame, meters)."""

    scenario: str
    target: SceneObject
    reference: SceneObject
    distractors: tuple[SceneObject, ...] = ()
    table: tuple[float, float] = (1.0, 1.0)
    camera: CameraPose = field(default_factory=lambda: CameraPose((0.0, -0.9, 1.1)))
    mask: tuple[bool, bool, bool] = FULL_MASK

    @property
    def label(self) -> Pose2:
        """Target pose in the reference object's frame."""
        return relative_pose(self.reference.pose, self.target.pose, self.mask)

    @property
    def diameter(self) -> float:
        return math.hypot(*self.table)

    def objects(self) -> list[SceneObject]:
        return [self.target, self.reference, *self.distractors]

    def inside_table(self, obj: SceneObject, tol: float = 1e-12) -> bool:
        fp = obj.footprint_world()
        hw, hd = self.table[0] / 2, self.table[1] / 2
        ax, ay = np.abs(fp).max(axis=0)
        return bool(ax <= hw + tol and ay <= hd + tol)


@dataclass(frozen=True)
class ScenarioSpec:
    """Static description of one experimental setup and its capture presets.

    ``candidates`` maps a name to a (world transform, entity) pair applied to
    a freshly sampled scene; ``conditions`` names ordered subsets of
    candidates, the first of which is the untouched scene.
    """

    tag: str
    mask: tuple[bool, bool, bool]
    camera: CameraPose
    target_shape: Shape
    reference_shape: Shape
    reference_home: Pose2
    target_region: tuple[float, float, float, float]
    candidates: dict[str, tuple[RigidTransform2, str]]
    conditions: dict[str, tuple[str, ...]]
    distractor_range: tuple[int, int] = (0, 3)
    table: tuple[float, float] = (1.0, 1.0)
    gripper_base_region: Optional[tuple[float, float, float, float]] = None

    def __post_init__(self):
        if self.tag not in SCENARIOS:
            raise SceneError(f"unknown scenario tag {self.tag!r}")
        for name, members in self.conditions.items():
            for m in members:
                if m not in self.candidates:
                    raise SceneError(f"condition {name!r} uses unknown candidate {m!r}")
        for t, entity in self.candidates.values():
            if entity not in ENTITIES:
                raise SceneError(f"unknown entity {entity!r}")


def view_relative_heading(scene: Scene) -> float:
    """Target heading measured from the camera's horizontal line of sight.

    Zero when the target's +x axis points straight away from the nominal
    camera, pi when it points straight at it.
    """
    tx, ty = scene.target.pose.x, scene.target.pose.y
    sight = math.atan2(ty - scene.camera.eye[1], tx - scene.camera.eye[0])
    return wrap_angle(scene.target.pose.theta - sight)
