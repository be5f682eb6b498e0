"""Multi-capture pose fusion.

Capture a scene under k known rigid transforms (plus the untouched scene),
run the estimator on every capture, map each prediction back through the
inverse of the label change its transform caused, and average.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

from .geometry import (
    IDENTITY,
    DegenerateMeanError,
    Pose2,
    RigidTransform2,
    apply,
    frame_change,
    inverse,
    mask_from_str,
    mask_to_str,
    pose_error,
    pose_mean,
)
from .estimator.evaluate import Capture, as_estimator
from .scenesim.randomization import RandomizationConfig, RandomizationParams, sample_randomization
from .scenesim.render import DEFAULT_SIZE, Image, render
from .scenesim.sampling import apply_scene_transform
from .scenesim.types import ENTITIES, Scene, SceneError, ScenarioSpec
from .seeding import derive_seed

POLICIES = ("fixed", "resampled")

_PARAMS_STREAM = 0x50415241
_DRAW_STREAM = 0x44524157


class FusionError(DegenerateMeanError):
    """The inverse-mapped headings cancel; ``predictions`` holds every P_i."""

    def __init__(self, message: str, predictions: Sequence[Pose2], records: Sequence["CaptureRecord"] = ()):
        super().__init__(message, [p.theta for p in predictions])
        self.predictions = tuple(predictions)
        self.records = tuple(records)


@dataclass(frozen=True)
class TransformSet:
    """Ordered (transform, entity) pairs; element 0 is the identity."""

    transforms: tuple[tuple[RigidTransform2, str], ...]

    def __post_init__(self):
        items = tuple((t, str(e)) for t, e in self.transforms)
        if not items:
            raise SceneError("a transform set needs at least the identity element")
        if not items[0][0].is_identity(1e-12):
            raise SceneError(f"element 0 of a transform set must be the identity, got {items[0][0]}")
        for _, e in items:
            if e not in ENTITIES:
                raise SceneError(f"unknown entity {e!r}; expected one of {ENTITIES}")
        object.__setattr__(self, "transforms", items)

    @property
    def k(self) -> int:
        return len(self.transforms) - 1

    def __len__(self) -> int:
        return len(self.transforms)

    def __iter__(self):
        return iter(self.transforms)

    @classmethod
    def of(cls, *moves: tuple[RigidTransform2, str]) -> "TransformSet":
        """Identity followed by ``moves``."""
        entity = moves[0][1] if moves else "reference"
        return cls(((IDENTITY, entity), *moves))

    @classmethod
    def from_condition(cls, spec: ScenarioSpec, condition: str) -> "TransformSet":
        try:
            names = spec.conditions[condition]
        except KeyError:
            raise SceneError(f"scenario {spec.tag!r} has no condition {condition!r}") from None
        return cls(tuple(spec.candidates[n] for n in names))

    def validate(self, scene: Scene) -> None:
        """Raise if any member cannot be applied to ``scene``."""
        for t, e in self.transforms:
            apply_scene_transform(scene, t, e)


def capture(
    scene: Scene,
    t: RigidTransform2,
    entity: str,
    params: RandomizationParams,
    size: tuple[int, int] = DEFAULT_SIZE,
) -> tuple[Image, Scene]:
    """Render ``scene`` after moving ``entity`` by ``t``; also returns the moved scene.

    This is the boundary a physical setup would replace: move something,
    take a picture, report where things ended up.
    """
    moved = apply_scene_transform(scene, t, entity)
    return render(moved, params, size), moved


def label_map(t: RigidTransform2, entity: str, scene: Scene) -> RigidTransform2:
    """Transform the label undergoes when ``entity`` of ``scene`` moves by ``t``."""
    if entity == "reference":
        return frame_change(t, scene.reference.pose)
    if entity in ("target", "camera_orbit"):
        return IDENTITY
    raise SceneError(f"unknown entity {entity!r}; expected one of {ENTITIES}")


@dataclass(frozen=True)
class CaptureRecord:
    index: int
    transform: RigidTransform2
    entity: str
    image_digest: Optional[str]
    raw: Pose2
    mapped: Pose2


@dataclass(frozen=True)
class FusionTrace:
    captures: tuple[CaptureRecord, ...]
    fused: Pose2
    truth: Optional[Pose2] = None

    @property
    def error(self):
        if self.truth is None:
            raise ValueError("trace carries no ground truth")
        return pose_error(self.truth, self.fused)

    def to_dict(self) -> dict:
        return {
            "captures": [
                {
                    "index": r.index,
                    "transform": _transform_dict(r.transform),
                    "entity": r.entity,
                    "image_digest": r.image_digest,
                    "raw": _pose_dict(r.raw),
                    "mapped": _pose_dict(r.mapped),
                }
                for r in self.captures
            ],
            "fused": _pose_dict(self.fused),
            "truth": None if self.truth is None else _pose_dict(self.truth),
        }

    def to_json(self) -> str:
        # repr-based float formatting round-trips exactly
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "FusionTrace":
        caps = tuple(
            CaptureRecord(
                int(c["index"]),
                RigidTransform2(c["transform"]["rotation"], c["transform"]["dx"], c["transform"]["dy"]),
                c["entity"],
                c["image_digest"],
                _pose_from(c["raw"]),
                _pose_from(c["mapped"]),
            )
            for c in d["captures"]
        )
        truth = d.get("truth")
        return cls(caps, _pose_from(d["fused"]), None if truth is None else _pose_from(truth))

    @classmethod
    def from_json(cls, text: str) -> "FusionTrace":
        return cls.from_dict(json.loads(text))


def _pose_dict(p: Pose2) -> dict:
    return {"x": p.x, "y": p.y, "theta": p.theta, "mask": mask_to_str(p.mask)}


def _pose_from(d: dict) -> Pose2:
    return Pose2(d["x"], d["y"], d["theta"], mask_from_str(d["mask"]))


def _transform_dict(t: RigidTransform2) -> dict:
    return {"rotation": t.rotation, "dx": t.dx, "dy": t.dy}


def capture_params(
    seed: int, index: int, policy: str, randomization: Optional[RandomizationConfig] = None
) -> RandomizationParams:
    """Appearance for capture ``index``: shared under ``fixed``, fresh per capture under ``resampled``."""
    if policy not in POLICIES:
        raise ValueError(f"unknown params policy {policy!r}; expected one of {POLICIES}")
    slot = 0 if policy == "fixed" else index
    return sample_randomization(derive_seed(seed, _PARAMS_STREAM, slot), randomization)


def fuse(records: Sequence[CaptureRecord], truth: Optional[Pose2] = None) -> FusionTrace:
    records = tuple(sorted(records, key=lambda r: r.index))
    mapped = [r.mapped for r in records]
    try:
        fused = pose_mean(mapped)
    except DegenerateMeanError as exc:
        raise FusionError(str(exc), mapped, records) from exc
    return FusionTrace(records, fused, truth)


def itdr_estimate(
    estimator,
    scene: Scene,
    ts: TransformSet,
    params_policy: str = "resampled",
    seed: int = 0,
    randomization: Optional[RandomizationConfig] = None,
    image_size: tuple[int, int] = DEFAULT_SIZE,
) -> FusionTrace:
    """Fused pose estimate of ``scene`` from one capture per member of ``ts``.

    Capture ``i`` is predicted independently and mapped back through the
    inverse of its label map; the fused pose is the :func:`pose_mean` of
    the mapped predictions. Deterministic given ``seed``.
    """
    est = as_estimator(estimator)
    # move everything first so an illegal member fails before any prediction
    moves = [apply_scene_transform(scene, t, e) for t, e in ts]
    records = []
    for i, ((t, entity), moved) in enumerate(zip(ts, moves)):
        image = None
        if est.needs_image:
            image = render(moved, capture_params(seed, i, params_policy, randomization), image_size)
        raw = est.predict(Capture(image, moved, moved.label, derive_seed(seed, _DRAW_STREAM, i)))
        raw = raw.with_mask(scene.mask)
        mapped = apply(inverse(label_map(t, entity, scene)), raw)
        digest = image.digest() if image is not None else None
        records.append(CaptureRecord(i, t, entity, digest, raw, mapped))
    return fuse(records, scene.label)
