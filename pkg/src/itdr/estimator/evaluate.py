"""Common estimator interface and dataset evaluation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence, runtime_checkable

import numpy as np

from ..geometry import ErrorVector, Pose2, mean_error, pose_error
from ..scenesim.render import Image
from ..scenesim.types import Scene, view_relative_heading
from .model import Model, outputs_to_pose, predict_batch
from .oracle import NoiseOracle, oracle_predict


@dataclass(frozen=True)
class Capture:
    """What an estimator gets to see for one prediction.

    Image-based estimators read ``image``; the noise oracle reads the
    ground truth carried by ``scene`` (or ``truth`` when no scene exists).
    """

    image: Optional[Image] = None
    scene: Optional[Scene] = None
    truth: Optional[Pose2] = None
    draw_index: int = 0

    def label(self) -> Pose2:
        if self.scene is not None:
            return self.scene.label
        if self.truth is None:
            raise ValueError("capture carries neither a scene nor a ground-truth pose")
        return self.truth


@runtime_checkable
class Estimator(Protocol):
    needs_image: bool

    def predict(self, capture: Capture) -> Pose2: ...


@dataclass(frozen=True)
class ModelEstimator:
    model: Model
    needs_image: bool = field(default=True, init=False)

    def predict(self, capture: Capture) -> Pose2:
        if capture.image is None:
            raise ValueError("model estimator needs an image")
        out = predict_batch(self.model, capture.image.pixels[None])[0]
        return outputs_to_pose(out, self.model.config.mask)

    def predict_images(self, images: np.ndarray) -> list[Pose2]:
        return [outputs_to_pose(o, self.model.config.mask) for o in predict_batch(self.model, images)]


@dataclass(frozen=True)
class OracleEstimator:
    oracle: NoiseOracle
    needs_image: bool = field(default=False, init=False)

    def predict(self, capture: Capture) -> Pose2:
        truth = capture.label()
        view = view_relative_heading(capture.scene) if capture.scene is not None else None
        return oracle_predict(self.oracle, truth, capture.draw_index, view)


class PerfectEstimator:
    """Returns the ground-truth label exactly."""

    needs_image = False

    def predict(self, capture: Capture) -> Pose2:
        return capture.label()


def as_estimator(obj) -> Estimator:
    if isinstance(obj, Model):
        return ModelEstimator(obj)
    if isinstance(obj, NoiseOracle):
        return OracleEstimator(obj)
    if isinstance(obj, Estimator):
        return obj
    raise TypeError(f"not an estimator: {type(obj).__name__}")


@dataclass(frozen=True)
class ItemRecord:
    index: int
    truth: Pose2
    prediction: Pose2
    error: ErrorVector


@dataclass(frozen=True)
class ErrorReport:
    mean: ErrorVector
    items: tuple[ItemRecord, ...]

    @property
    def n(self) -> int:
        return len(self.items)

    def write_csv(self, path) -> None:
        def f(v):
            return "" if v is None else f"{v:.9g}"

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "x_m", "y_m", "theta_rad", "pred_x_m", "pred_y_m", "pred_theta_rad", "ex_m", "ey_m", "etheta_rad"])
            for r in self.items:
                t, p = r.truth, r.prediction
                w.writerow([r.index, f(t.x), f(t.y), f(t.theta), f(p.x), f(p.y), f(p.theta), *map(f, r.error.as_tuple())])
            w.writerow(["mean", "", "", "", "", "", "", *map(f, self.mean.as_tuple())])


def evaluate(estimator, data, images: Optional[np.ndarray] = None) -> ErrorReport:
    """Mean per-component error of ``estimator`` over a dataset.

    ``data`` is a :class:`~itdr.scenesim.Dataset` or any sequence of
    (image-or-None, truth pose) pairs.
    """
    est = as_estimator(estimator)
    if hasattr(data, "manifest"):
        poses = data.poses()
        indices = [r.index for r in data.manifest]
        if est.needs_image and images is None:
            images = data.image_array()
    else:
        pairs: Sequence = list(data)
        poses = [p for _, p in pairs]
        indices = list(range(len(pairs)))
        if est.needs_image and images is None:
            images = np.stack([im.pixels for im, _ in pairs])
    if not poses:
        raise ValueError("cannot evaluate on an empty dataset")

    if isinstance(est, ModelEstimator):
        preds = [p.with_mask(t.mask) for p, t in zip(est.predict_images(images), poses)]
    else:
        preds = []
        for k, (idx, truth) in enumerate(zip(indices, poses)):
            img = Image(images[k]) if images is not None else None
            preds.append(est.predict(Capture(image=img, truth=truth, draw_index=idx)).with_mask(truth.mask))
    items = tuple(ItemRecord(i, t, p, pose_error(t, p)) for i, t, p in zip(indices, poses, preds))
    return ErrorReport(mean_error([r.error for r in items]), items)
