"""Scene sampling and rigid manipulation of scene entities."""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Union

import numpy as np

from ..geometry import Pose2, RigidTransform2, compose, transform_from_pose
from ..seeding import rng_for
from .randomization import MAX_DISTRACTORS
from .render import TARGET_ID, render_ids
from .scenarios import scenario_spec
from .types import (
    ENTITIES,
    SCENARIOS,
    CameraPose,
    OutOfRegionError,
    Scene,
    SceneError,
    SceneObject,
    ScenarioSpec,
    Shape,
)

VISIBILITY_FLOOR = 0.30
VISIBILITY_SIZE = (64, 64)
_MAX_DISTRACTOR_TRIES = 50
_MAX_LAYOUT_TRIES = 20
_CLEARANCE = 0.01

_SCENE_STREAM = 0x5343454E
_TRAINING_STREAM = 0x5452414E


def _spec(scenario: Union[str, ScenarioSpec]) -> ScenarioSpec:
    return scenario if isinstance(scenario, ScenarioSpec) else scenario_spec(scenario)


def _uniform_heading(rng: np.random.Generator) -> float:
    return float(rng.uniform(-math.pi, math.pi))


def _place_core(spec: ScenarioSpec, rng: np.random.Generator) -> tuple[SceneObject, SceneObject]:
    """Target and reference before distractors are added."""
    x0, x1, y0, y1 = spec.target_region
    if spec.tag == "gripper":
        gx0, gx1, gy0, gy1 = spec.gripper_base_region
        grip = Pose2(rng.uniform(gx0, gx1), rng.uniform(gy0, gy1), _uniform_heading(rng))
        offset = Pose2(rng.uniform(x0, x1), rng.uniform(y0, y1), _uniform_heading(rng))
        world = compose(transform_from_pose(grip), transform_from_pose(offset))
        target = Pose2(world.dx, world.dy, world.rotation)
        return SceneObject(spec.target_shape, target), SceneObject(spec.reference_shape, grip)
    target = Pose2(rng.uniform(x0, x1), rng.uniform(y0, y1), _uniform_heading(rng))
    return SceneObject(spec.target_shape, target), SceneObject(spec.reference_shape, spec.reference_home)


def _reserved_circles(spec: ScenarioSpec, scene: Scene) -> list[tuple[float, float, float]]:
    """Bounding circles of target/reference under every capture preset."""
    circles = []
    for t, entity in spec.candidates.values():
        moved = _move(scene, t, entity, check=False)
        for obj in (moved.target, moved.reference):
            circles.append((obj.pose.x, obj.pose.y, obj.shape.radius))
    return circles


def _random_distractor_shape(rng: np.random.Generator) -> Shape:
    if rng.uniform() < 0.5:
        return Shape("box", (rng.uniform(0.03, 0.08), rng.uniform(0.03, 0.08), rng.uniform(0.02, 0.08)))
    return Shape("cylinder", (rng.uniform(0.02, 0.04), rng.uniform(0.02, 0.08)))


def _sample_distractors(spec, scene, rng, count) -> tuple[SceneObject, ...] | None:
    reserved = _reserved_circles(spec, scene)
    placed: list[SceneObject] = []
    hw, hd = scene.table[0] / 2, scene.table[1] / 2
    for _ in range(count):
        for _ in range(_MAX_DISTRACTOR_TRIES):
            shape = _random_distractor_shape(rng)
            r = shape.radius
            pose = Pose2(rng.uniform(-hw + r, hw - r), rng.uniform(-hd + r, hd - r), _uniform_heading(rng))
            circles = reserved + [(d.pose.x, d.pose.y, d.shape.radius) for d in placed]
            if all(math.hypot(pose.x - cx, pose.y - cy) > r + cr + _CLEARANCE for cx, cy, cr in circles):
                placed.append(SceneObject(shape, pose))
                break
        else:
            return None
    return tuple(placed)


def target_visibility(scene: Scene, size=VISIBILITY_SIZE) -> float:
    """Fraction of the target silhouette left visible by the other objects (nominal camera)."""
    alone = np.count_nonzero(render_ids(scene, None, size, only=[TARGET_ID], include_table=False) == TARGET_ID)
    if alone == 0:
        return 0.0
    full = np.count_nonzero(render_ids(scene, None, size, include_table=False) == TARGET_ID)
    return full / alone


def _placement(spec: ScenarioSpec, rng: np.random.Generator) -> Scene:
    target, reference = _place_core(spec, rng)
    base = Scene(
        scenario=spec.tag,
        target=target,
        reference=reference,
        table=spec.table,
        camera=spec.camera,
        mask=spec.mask,
    )
    if not (base.inside_table(target) and base.inside_table(reference)):
        raise SceneError(f"scenario {spec.tag!r} placement region leaves the table")
    return base


def _scene_rng(spec: ScenarioSpec, seed: int) -> np.random.Generator:
    return rng_for(seed, _SCENE_STREAM, SCENARIOS.index(spec.tag))


def sample_placement(scenario: Union[str, ScenarioSpec], seed: int) -> Scene:
    """Target and reference of :func:`sample_scene` for the same seed, without distractors."""
    spec = _spec(scenario)
    return _placement(spec, _scene_rng(spec, seed))


def sample_scene(scenario: Union[str, ScenarioSpec], seed: int) -> Scene:
    """Draw a scene for ``scenario``; a pure function of ``(scenario, seed)``.

    The target pose is uniform over the scenario's placement region (for the
    gripper scenario: uniform gripper pose, uniform in-gripper offset and
    heading). Distractors are rejected until the target keeps at least
    30% of its silhouette under every capture preset's nominal view.
    """
    spec = _spec(scenario)
    rng = _scene_rng(spec, seed)
    base = _placement(spec, rng)
    lo, hi = spec.distractor_range
    count = int(rng.integers(lo, min(hi, MAX_DISTRACTORS) + 1))
    for _ in range(_MAX_LAYOUT_TRIES):
        if count == 0:
            return base
        distractors = _sample_distractors(spec, base, rng, count)
        if distractors is None:
            count -= 1
            continue
        scene = replace(base, distractors=distractors)
        views = [_move(scene, t, e, check=False) for t, e in spec.candidates.values()]
        if all(target_visibility(v) >= VISIBILITY_FLOOR for v in views):
            return scene
    return base


def sample_training_scene(scenario: Union[str, ScenarioSpec], seed: int) -> Scene:
    """A sampled scene moved by one capture preset drawn uniformly.

    Training on this distribution covers every configuration the fusion
    step will later capture.
    """
    spec = _spec(scenario)
    scene = sample_scene(spec, seed)
    names = list(spec.candidates)
    name = names[int(rng_for(seed, _TRAINING_STREAM).integers(len(names)))]
    t, entity = spec.candidates[name]
    return apply_scene_transform(scene, t, entity)


def _overlap(a: SceneObject, b: SceneObject) -> bool:
    return math.hypot(a.pose.x - b.pose.x, a.pose.y - b.pose.y) < a.shape.radius + b.shape.radius


def _orbit_camera(cam: CameraPose, t: RigidTransform2) -> CameraPose:
    ex, ey = t.apply_point(cam.eye[0], cam.eye[1])
    lx, ly = t.apply_point(cam.look_at[0], cam.look_at[1])
    return CameraPose((ex, ey, cam.eye[2]), (lx, ly, cam.look_at[2]), cam.up, cam.vertical_fov)


def _table_center_in_view(cam: CameraPose) -> bool:
    right, up, fwd = cam.basis()
    rel = -np.asarray(cam.eye)
    z = rel @ fwd
    if z <= 0:
        return False
    half = math.tan(cam.vertical_fov / 2)
    return abs(rel @ right) / z <= half and abs(rel @ up) / z <= half


def _move(scene: Scene, t: RigidTransform2, entity: str, check: bool) -> Scene:
    if entity == "reference":
        new = replace(scene, reference=scene.reference.moved(t))
        if check:
            if not new.inside_table(new.reference):
                raise OutOfRegionError(f"reference leaves the table under {t}")
            if _overlap(new.reference, new.target):
                raise OutOfRegionError(f"reference collides with target under {t}")
        return new
    if entity == "target":
        # grasped assembly: target moves rigidly together with its reference
        new = replace(scene, target=scene.target.moved(t), reference=scene.reference.moved(t))
        if check and not (new.inside_table(new.target) and new.inside_table(new.reference)):
            raise OutOfRegionError(f"grasped object leaves the table under {t}")
        return new
    if entity == "camera_orbit":
        new = replace(scene, camera=_orbit_camera(scene.camera, t))
        if check and not _table_center_in_view(new.camera):
            raise OutOfRegionError(f"camera orbit {t} loses sight of the table")
        return new
    raise SceneError(f"unknown entity {entity!r}; expected one of {ENTITIES}")


def apply_scene_transform(scene: Scene, t: RigidTransform2, entity: str) -> Scene:
    """Move one entity of ``scene`` by the world-frame transform ``t``.

    ``reference`` moves only the reference object, so the label changes by
    the induced frame change. ``target`` moves the grasped target together
    with its reference (gripper), and ``camera_orbit`` moves the camera;
    both leave the label unchanged.
    """
    return _move(scene, t, entity, check=True)
