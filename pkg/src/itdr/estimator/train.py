"""Minibatch SGD with momentum."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np

from ..geometry import Pose2
from ..seeding import rng_for
from .loss import batch_loss
from .model import Model, backward_batch, forward_batch, preprocess

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, learning_rate: float, value: float):
        super().__init__(f"non-finite training loss {value} at epoch {epoch} (learning rate {learning_rate})")
        self.epoch = epoch
        self.learning_rate = learning_rate


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    init_scale: float = 1.0
    lr_decay: float = 1.0  # multiplicative, applied after every epoch
    dtype: str = "float32"

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class TrainLog:
    """Per-epoch mean training loss; epoch 0 is the loss before any update."""

    epochs: list[int] = field(default_factory=list)
    mean_loss: list[float] = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list, compare=False)

    def append(self, epoch: int, loss: float, ms: float) -> None:
        self.epochs.append(epoch)
        self.mean_loss.append(loss)
        self.wall_ms.append(ms)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "mean_loss", "wall_ms"])
            for e, l, ms in zip(self.epochs, self.mean_loss, self.wall_ms):
                w.writerow([e, f"{l:.9g}", f"{ms:.1f}"])


@dataclass
class TrainingData:
    """In-memory training set: uint8 images (N, H, W, 3) and targets (N, 3)."""

    images: np.ndarray
    targets: np.ndarray
    mask: tuple[bool, bool, bool]

    def __len__(self) -> int:
        return len(self.images)

    @classmethod
    def from_pairs(cls, images: Sequence, poses: Sequence[Pose2]) -> "TrainingData":
        if not poses:
            raise ValueError("empty training data")
        masks = {p.mask for p in poses}
        if len(masks) != 1:
            raise ValueError(f"training poses have mixed masks {sorted(masks)}")
        arr = np.stack([im.pixels if hasattr(im, "pixels") else np.asarray(im) for im in images])
        targets = np.array([[p.x, p.y, p.theta] for p in poses])
        return cls(arr, targets, poses[0].mask)

    @classmethod
    def from_dataset(cls, dataset) -> "TrainingData":
        poses = dataset.poses()
        if not poses:
            raise ValueError("empty dataset")
        masks = {p.mask for p in poses}
        if len(masks) != 1:
            raise ValueError(f"dataset poses have mixed masks {sorted(masks)}")
        targets = np.array([[p.x, p.y, p.theta] for p in poses])
        return cls(dataset.image_array(), targets, poses[0].mask)


def loss_gradient_arrays(model: Model, x: np.ndarray, targets: np.ndarray, mask, params=None):
    out, state = forward_batch(model, x, params, keep_cache=True)
    value, dout = batch_loss(out, targets.astype(x.dtype), mask)
    return value, backward_batch(model, dout, state)


def loss_gradient(model: Model, batch: Sequence[tuple]) -> np.ndarray:
    """Gradient of the mean batch loss w.r.t. every parameter (float64)."""
    if not batch:
        raise ValueError("empty batch")
    data = TrainingData.from_pairs([b[0] for b in batch], [b[1] for b in batch])
    _, grad = loss_gradient_arrays(model, preprocess(data.images), data.targets, data.mask)
    return grad


def dataset_loss(model: Model, data: TrainingData, params=None, dtype=np.float64, chunk: int = 256) -> float:
    total = 0.0
    for i in range(0, len(data), chunk):
        x = preprocess(data.images[i : i + chunk], dtype)
        out = forward_batch(model, x, params)
        value, _ = batch_loss(out, data.targets[i : i + chunk].astype(dtype), data.mask)
        total += value * len(x)
    return total / len(data)


def train(model: Model, data: Union[TrainingData, object], cfg: TrainConfig) -> tuple[Model, TrainLog]:
    """Fit ``model`` to ``data``; deterministic given the model and ``cfg.seed``."""
    if not isinstance(data, TrainingData):
        data = TrainingData.from_dataset(data)
    if len(data) == 0:
        raise ValueError("empty training data")
    if tuple(data.mask) != tuple(model.config.mask):
        model = Model(replace(model.config, mask=tuple(data.mask)), model.params, model.init_seed)
    dtype = np.dtype(cfg.dtype)
    params = model.params.copy()
    velocity = np.zeros_like(params)
    rng = rng_for(cfg.seed, 0x5348)
    lr = cfg.learning_rate
    tlog = TrainLog()
    tlog.append(0, dataset_loss(model, data, params, dtype), 0.0)
    n = len(data)
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = np.sort(order[start : start + cfg.batch_size])
            x = preprocess(data.images[idx], dtype)
            value, grad = loss_gradient_arrays(model, x, data.targets[idx], data.mask, params)
            if not math.isfinite(value) or not np.all(np.isfinite(grad)):
                raise TrainingDivergedError(epoch, lr, value)
            total += value * len(idx)
            velocity = cfg.momentum * velocity - lr * grad
            params = params + velocity
        mean = total / n
        if not math.isfinite(mean):
            raise TrainingDivergedError(epoch, lr, mean)
        tlog.append(epoch, mean, (time.perf_counter() - t0) * 1000.0)
        log.info("epoch %d  loss %.5f  lr %.3g", epoch, mean, lr)
        lr *= cfg.lr_decay
    return model.with_params(params), tlog
