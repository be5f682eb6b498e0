"""Preset scenarios: moving reference object, moving gripper, moving camera.

Concrete coordinates here (corners, gripper stations, viewpoints) are
choices of this package; they are recorded so every run is reproducible.
"""

from __future__ import annotations

import math

from ..geometry import FULL_MASK, GRIPPER_MASK, Pose2, RigidTransform2
from .types import CameraPose, SceneError, ScenarioSpec, Shape

TABLE = (1.0, 1.0)
PEG = Shape("peg", (0.12, 0.04, 0.04))
REFERENCE_CYLINDER = Shape("cylinder", (0.04, 0.08))
GRIPPER_BODY = Shape("box", (0.05, 0.09, 0.06))
CAMERA_PEG_SCALE = 0.7**3

CORNER = 0.38
CORNERS = {
    "c0": (-CORNER, -CORNER),
    "c1": (CORNER, -CORNER),
    "c2": (CORNER, CORNER),
    "c3": (-CORNER, CORNER),
}

GRIPPER_STATIONS_DEG = {"g0": 0.0, "g72": 72.0, "g144": 144.0, "g216": -144.0, "g288": -72.0}
CAMERA_VIEWS_DEG = {"v0": 0.0, "v120": 120.0, "v240": -120.0}


def _reference_spec() -> ScenarioSpec:
    hx, hy = CORNERS["c0"]
    candidates = {
        name: (RigidTransform2.translation(x - hx, y - hy), "reference") for name, (x, y) in CORNERS.items()
    }
    return ScenarioSpec(
        tag="reference",
        mask=FULL_MASK,
        camera=CameraPose((0.0, -1.0, 1.25), (0.0, 0.0, 0.0), vertical_fov=math.radians(46.0)),
        target_shape=PEG,
        reference_shape=REFERENCE_CYLINDER,
        reference_home=Pose2(hx, hy, 0.0),
        target_region=(-0.25, 0.25, -0.25, 0.25),
        candidates=candidates,
        conditions={
            "one image": ("c0",),
            "diagonal": ("c0", "c2"),
            "parallel": ("c0", "c1"),
            "four corners": ("c0", "c1", "c2", "c3"),
        },
        table=TABLE,
    )


def _gripper_spec() -> ScenarioSpec:
    candidates = {
        name: (RigidTransform2.rotation_about(math.radians(deg)), "target")
        for name, deg in GRIPPER_STATIONS_DEG.items()
    }
    return ScenarioSpec(
        tag="gripper",
        mask=GRIPPER_MASK,
        camera=CameraPose((0.6, 0.0, 0.5), (0.0, 0.0, 0.0), vertical_fov=math.radians(50.0)),
        target_shape=PEG,
        reference_shape=GRIPPER_BODY,
        reference_home=Pose2(0.0, 0.0, 0.0),
        # label region in the gripper frame: offset along the jaw axis
        target_region=(0.07, 0.11, 0.0, 0.0),
        candidates=candidates,
        conditions={
            "one image": ("g0",),
            "two images": ("g0", "g144"),
            "five images": ("g0", "g72", "g144", "g216", "g288"),
        },
        table=TABLE,
        gripper_base_region=(-0.1, 0.1, -0.1, 0.1),
    )


def _camera_spec() -> ScenarioSpec:
    candidates = {
        name: (RigidTransform2.rotation_about(math.radians(deg)), "camera_orbit")
        for name, deg in CAMERA_VIEWS_DEG.items()
    }
    return ScenarioSpec(
        tag="camera",
        mask=FULL_MASK,
        # low camera on the +x side: a peg at heading pi points straight away from it
        camera=CameraPose((0.55, 0.0, 0.2), (0.0, 0.0, 0.0), vertical_fov=math.radians(45.0)),
        target_shape=PEG.scaled(CAMERA_PEG_SCALE),
        reference_shape=REFERENCE_CYLINDER,
        reference_home=Pose2(-0.25, 0.0, 0.0),
        target_region=(-0.12, 0.12, -0.12, 0.12),
        candidates=candidates,
        conditions={
            "one image": ("v0",),
            "three images": ("v0", "v120", "v240"),
        },
        table=TABLE,
    )


_BUILDERS = {"reference": _reference_spec, "gripper": _gripper_spec, "camera": _camera_spec}


def scenario_spec(tag: str) -> ScenarioSpec:
    """Preset :class:`ScenarioSpec` for ``tag`` (reference, gripper or camera)."""
    try:
        return _BUILDERS[tag]()
    except KeyError:
        raise SceneError(f"unknown scenario {tag!r}; expected one of {sorted(_BUILDERS)}") from None


def home_candidate(spec: ScenarioSpec) -> str:
    """Name of the candidate whose transform is the identity."""
    for name, (t, _) in spec.candidates.items():
        if t.is_identity(1e-15):
            return name
    raise SceneError(f"scenario {spec.tag!r} has no identity candidate")

