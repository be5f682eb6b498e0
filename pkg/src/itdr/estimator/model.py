"""Small convolutional pose regressor with hand-written backpropagation.

Layout is NHWC throughout. Each conv block is ``conv 3x3 (same) -> max-pool
2x2 -> relu``; the head is ``fc -> relu -> fc`` with three outputs
(x, y, raw heading). All parameters live in one flat float64 vector; the
per-layer views are described by :attr:`Model.layout`.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..geometry import FULL_MASK, Pose2, mask_from_str, mask_to_str
from ..seeding import rng_for

CHECKPOINT_MAGIC = b"ITDR"
CHECKPOINT_VERSION = 1


class ModelShapeError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    height: int = 64
    width: int = 64
    in_channels: int = 3
    channels: tuple[int, ...] = (8, 8, 8)
    hidden: int = 128
    outputs: int = 3
    mask: tuple[bool, bool, bool] = FULL_MASK

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        object.__setattr__(self, "mask", tuple(bool(m) for m in self.mask))
        div = 2 ** len(self.channels)
        if self.height % div or self.width % div:
            raise ModelShapeError(f"input {self.height}x{self.width} not divisible by {div}")

    @property
    def flat_features(self) -> int:
        div = 2 ** len(self.channels)
        return (self.height // div) * (self.width // div) * self.channels[-1]

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        shapes = []
        c_in = self.in_channels
        for i, c in enumerate(self.channels):
            shapes.append((f"conv{i}.w", (c_in * 9, c)))
            shapes.append((f"conv{i}.b", (c,)))
            c_in = c
        shapes.append(("fc0.w", (self.flat_features, self.hidden)))
        shapes.append(("fc0.b", (self.hidden,)))
        shapes.append(("fc1.w", (self.hidden, self.outputs)))
        shapes.append(("fc1.b", (self.outputs,)))
        return shapes

    @property
    def parameter_count(self) -> int:
        return sum(math.prod(s) for _, s in self.layout())

    def fan_in(self, name: str) -> int:
        for n, shape in self.layout():
            if n == name.replace(".b", ".w"):
                return shape[0]
        raise KeyError(name)


@dataclass(frozen=True, eq=False)
class Model:
    config: ModelConfig
    params: np.ndarray
    init_seed: int = 0
    _offsets: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        p = np.array(self.params, dtype=np.float64)
        if p.shape != (self.config.parameter_count,):
            raise ModelShapeError(f"expected {self.config.parameter_count} parameters, got {p.shape}")
        p.setflags(write=False)
        object.__setattr__(self, "params", p)
        offsets, pos = {}, 0
        for name, shape in self.config.layout():
            n = math.prod(shape)
            offsets[name] = (pos, shape)
            pos += n
        object.__setattr__(self, "_offsets", offsets)

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0, scale: float = 1.0) -> "Model":
        """Weights uniform in [-s, s] with s = scale / sqrt(fan_in); zero biases."""
        rng = rng_for(seed, 0x4D4F44)
        parts = []
        for name, shape in config.layout():
            if name.endswith(".w"):
                s = scale / math.sqrt(shape[0])
                parts.append(rng.uniform(-s, s, size=shape).ravel())
            else:
                parts.append(np.zeros(math.prod(shape)))
        return cls(config, np.concatenate(parts), init_seed=seed)

    def with_params(self, params: np.ndarray) -> "Model":
        return Model(self.config, params, self.init_seed)

    @property
    def layout(self) -> dict:
        return dict(self._offsets)

    def unpack(self, params: Optional[np.ndarray] = None, dtype=np.float64) -> dict[str, np.ndarray]:
        p = self.params if params is None else params
        out = {}
        for name, (off, shape) in self._offsets.items():
            out[name] = p[off : off + math.prod(shape)].reshape(shape).astype(dtype, copy=False)
        return out

    def __eq__(self, other):
        if not isinstance(other, Model):
            return NotImplemented
        return self.config == other.config and np.array_equal(self.params, other.params)


# --- layers -------------------------------------------------------------------------


def _im2col(x: np.ndarray) -> np.ndarray:
    n, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (N, H, W, C, 3, 3)
    return win.reshape(n * h * w, c * 9)


def conv_forward(x, w, b):
    n, h, wd, _ = x.shape
    cols = _im2col(x)
    out = cols @ w + b
    return out.reshape(n, h, wd, -1), cols


def conv_backward(dout, cols, w, x_shape):
    n, h, wd, c = x_shape
    d2 = dout.reshape(-1, dout.shape[-1])
    dw = cols.T @ d2
    db = d2.sum(axis=0)
    dcols = (d2 @ w.T).reshape(n, h, wd, c, 3, 3)
    dxp = np.zeros((n, h + 2, wd + 2, c), dtype=dout.dtype)
    for kh in range(3):
        for kw in range(3):
            dxp[:, kh : kh + h, kw : kw + wd, :] += dcols[..., kh, kw]
    return dxp[:, 1:-1, 1:-1, :], dw, db


def pool_forward(x):
    n, h, w, c = x.shape
    win = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, h // 2, w // 2, c, 4)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, arg


def pool_backward(dout, arg, x_shape):
    n, h, w, c = x_shape
    dwin = np.zeros(dout.shape + (4,), dtype=dout.dtype)
    np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
    return dwin.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, h, w, c)


def preprocess(images: np.ndarray, dtype=np.float64) -> np.ndarray:
    """uint8 (N, H, W, 3) -> centered floats in [-0.5, 0.5]."""
    return np.asarray(images, dtype=dtype) / 255.0 - 0.5


def forward_batch(model: Model, x: np.ndarray, params: Optional[np.ndarray] = None, keep_cache: bool = False):
    """Raw network outputs (N, 3) for preprocessed input ``x`` (N, H, W, C)."""
    cfg = model.config
    if x.ndim != 4 or x.shape[1:] != (cfg.height, cfg.width, cfg.in_channels):
        raise ModelShapeError(
            f"input shape {x.shape[1:]} does not match model {(cfg.height, cfg.width, cfg.in_channels)}"
        )
    p = model.unpack(params, dtype=x.dtype)
    cache = []
    h = x
    for i in range(len(cfg.channels)):
        conv, cols = conv_forward(h, p[f"conv{i}.w"], p[f"conv{i}.b"])
        pooled, arg = pool_forward(conv)
        act = np.maximum(pooled, 0)
        if keep_cache:
            cache.append((h.shape, cols, conv.shape, arg, pooled))
        h = act
    flat = h.reshape(h.shape[0], -1)
    z0 = flat @ p["fc0.w"] + p["fc0.b"]
    a0 = np.maximum(z0, 0)
    out = a0 @ p["fc1.w"] + p["fc1.b"]
    if keep_cache:
        return out, (cache, h.shape, flat, z0, a0, p)
    return out


def backward_batch(model: Model, dout: np.ndarray, state) -> np.ndarray:
    """Flat parameter gradient given dL/d(outputs) and the forward cache."""
    cache, h_shape, flat, z0, a0, p = state
    grads = {}
    grads["fc1.w"] = a0.T @ dout
    grads["fc1.b"] = dout.sum(axis=0)
    da0 = dout @ p["fc1.w"].T
    dz0 = da0 * (z0 > 0)
    grads["fc0.w"] = flat.T @ dz0
    grads["fc0.b"] = dz0.sum(axis=0)
    dh = (dz0 @ p["fc0.w"].T).reshape(h_shape)
    for i in reversed(range(len(cache))):
        x_shape, cols, conv_shape, arg, pooled = cache[i]
        dpooled = dh * (pooled > 0)
        dconv = pool_backward(dpooled, arg, conv_shape)
        dh, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = conv_backward(dconv, cols, p[f"conv{i}.w"], x_shape)
    flat_grad = np.empty(model.config.parameter_count, dtype=np.float64)
    for name, (off, shape) in model.layout.items():
        flat_grad[off : off + math.prod(shape)] = grads[name].ravel()
    return flat_grad


def outputs_to_pose(out: Sequence[float], mask=FULL_MASK) -> Pose2:
    return Pose2(float(out[0]), float(out[1]), float(out[2]), mask)


def forward(model: Model, image) -> Pose2:
    """Pose predicted for one :class:`~itdr.scenesim.Image` (heading wrapped)."""
    px = image.pixels if hasattr(image, "pixels") else np.asarray(image)
    out = forward_batch(model, preprocess(px[None]))
    return outputs_to_pose(out[0], model.config.mask)


def predict_batch(model: Model, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Raw outputs for uint8 images (N, H, W, 3), computed in chunks."""
    outs = [
        forward_batch(model, preprocess(images[i : i + batch_size]))
        for i in range(0, len(images), batch_size)
    ]
    return np.concatenate(outs) if outs else np.zeros((0, model.config.outputs))


# --- checkpoint -----------------------------------------------------------------------


def save_checkpoint(model: Model, path) -> None:
    """Binary checkpoint: magic, version, architecture block, float64 LE params."""
    cfg = model.config
    head = CHECKPOINT_MAGIC + struct.pack("<I", CHECKPOINT_VERSION)
    arch = struct.pack("<IIII", cfg.height, cfg.width, cfg.in_channels, len(cfg.channels))
    arch += struct.pack(f"<{len(cfg.channels)}I", *cfg.channels)
    arch += struct.pack("<II", cfg.hidden, cfg.outputs)
    arch += mask_to_str(cfg.mask).encode("ascii")
    arch += struct.pack("<qQ", model.init_seed, cfg.parameter_count)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(arch)
        fh.write(model.params.astype("<f8").tobytes())


def load_checkpoint(path) -> Model:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {data[:4]!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos = 8
    h, w, c_in, n_conv = struct.unpack_from("<IIII", data, pos)
    pos += 16
    channels = struct.unpack_from(f"<{n_conv}I", data, pos)
    pos += 4 * n_conv
    hidden, outputs = struct.unpack_from("<II", data, pos)
    pos += 8
    mask = mask_from_str(data[pos : pos + 3].decode("ascii"))
    pos += 3
    init_seed, count = struct.unpack_from("<qQ", data, pos)
    pos += 16
    cfg = ModelConfig(h, w, c_in, tuple(channels), hidden, outputs, mask)
    if count != cfg.parameter_count or len(data) - pos != 8 * count:
        raise CheckpointError(f"{path}: parameter block size mismatch")
    params = np.frombuffer(data, dtype="<f8", count=count, offset=pos).astype(np.float64)
    return Model(cfg, params, init_seed)


def activation_pattern(model: Model, x: np.ndarray, params: Optional[np.ndarray] = None) -> list[np.ndarray]:
    """ReLU signs and pooling argmaxes; the network is smooth while these stay fixed."""
    _, (cache, _, _, z0, _, _) = forward_batch(model, x, params, keep_cache=True)
    pattern = []
    for _, _, _, arg, pooled in cache:
        pattern += [arg, pooled > 0]
    pattern.append(z0 > 0)
    return pattern
