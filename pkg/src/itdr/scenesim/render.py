"""Software rasterizer: pinhole projection, z-buffer, flat shading.

Primitives are turned into triangles in world space, clipped against the
near plane, projected, and scan-converted one bounding box at a time.
Depth is resolved on interpolated 1/z, which is linear in screen space.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..seeding import rng_for
from .randomization import MAX_DISTRACTORS, SLOTS, RandomizationParams
from .types import CYLINDER_SEGMENTS, CameraPose, DegenerateCameraError, Scene, SceneObject

DEFAULT_SIZE = (64, 64)
NEAR = 1e-3

# object ids in the id buffer
TABLE_ID = 0
TARGET_ID = 1
REFERENCE_ID = 2
BACKGROUND_ID = -1


@dataclass(frozen=True, eq=False)
class Image:
    """RGB raster, 8 bits per channel, stored row-major as (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] == 0 or px.shape[1] == 0:
            raise ValueError(f"image pixels must have shape (H, W, 3), got {px.shape}")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def digest(self) -> str:
        h = hashlib.sha256(f"{self.width}x{self.height}:".encode())
        h.update(self.tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __hash__(self):
        return hash(self.digest())


# --- mesh construction -----------------------------------------------------------


def _box_triangles(cx, cy, sx, sy, sz, pose):
    """Top and four side faces of a box in world coordinates (bottom is never visible)."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    x0, x1 = cx - sx / 2, cx + sx / 2
    y0, y1 = cy - sy / 2, cy + sy / 2
    local = np.array(
        [[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
    )
    wx = c * local[:, 0] - s * local[:, 1] + pose.x
    wy = s * local[:, 0] + c * local[:, 1] + pose.y
    lo = np.stack([wx, wy, np.zeros(4)], axis=1)
    hi = np.stack([wx, wy, np.full(4, sz)], axis=1)
    tris, normals = [], []
    tris += [[hi[0], hi[1], hi[2]], [hi[0], hi[2], hi[3]]]
    normals += [(0.0, 0.0, 1.0)] * 2
    side_normals = [(0.0, -1.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)]
    for i in range(4):
        j = (i + 1) % 4
        nx, ny = side_normals[i]
        n = (c * nx - s * ny, s * nx + c * ny, 0.0)
        tris += [[lo[i], lo[j], hi[j]], [lo[i], hi[j], hi[i]]]
        normals += [n, n]
    return tris, normals


def _cylinder_triangles(radius, height, pose):
    n = CYLINDER_SEGMENTS
    a = pose.theta + np.arange(n) * (2 * math.pi / n)
    ring = np.stack([pose.x + radius * np.cos(a), pose.y + radius * np.sin(a)], axis=1)
    lo = np.concatenate([ring, np.zeros((n, 1))], axis=1)
    hi = np.concatenate([ring, np.full((n, 1), height)], axis=1)
    top_center = np.array([pose.x, pose.y, height])
    tris, normals = [], []
    for i in range(n):
        j = (i + 1) % n
        mid = pose.theta + (i + 0.5) * (2 * math.pi / n)
        nrm = (math.cos(mid), math.sin(mid), 0.0)
        tris += [[lo[i], lo[j], hi[j]], [lo[i], hi[j], hi[i]]]
        normals += [nrm, nrm]
        tris.append([top_center, hi[i], hi[j]])
        normals.append((0.0, 0.0, 1.0))
    return tris, normals


def object_triangles(obj: SceneObject):
    shape = obj.shape
    if shape.kind == "cylinder":
        return _cylinder_triangles(shape.dims[0], shape.dims[1], obj.pose)
    tris, normals = [], []
    for cx, cy, sx, sy, sz in shape.boxes():
        t, n = _box_triangles(cx, cy, sx, sy, sz, obj.pose)
        tris += t
        normals += n
    return tris, normals


def scene_mesh(scene: Scene, include_table: bool = True, only: Optional[Sequence[int]] = None):
    """Triangles (T, 3, 3), normals (T, 3), color slot index (T,), object id (T,)."""
    tris, normals, slots, ids = [], [], [], []

    def add(t, n, slot, oid):
        tris.extend(t)
        normals.extend(n)
        slots.extend([slot] * len(t))
        ids.extend([oid] * len(t))

    if include_table and (only is None or TABLE_ID in only):
        hw, hd = scene.table[0] / 2, scene.table[1] / 2
        q = np.array([[-hw, -hd, 0.0], [hw, -hd, 0.0], [hw, hd, 0.0], [-hw, hd, 0.0]])
        add([[q[0], q[1], q[2]], [q[0], q[2], q[3]]], [(0.0, 0.0, 1.0)] * 2, SLOTS.index("table"), TABLE_ID)
    entries = [(scene.target, "target", TARGET_ID), (scene.reference, "reference", REFERENCE_ID)]
    if len(scene.distractors) > MAX_DISTRACTORS:
        raise ValueError(f"at most {MAX_DISTRACTORS} distractors are supported")
    for i, d in enumerate(scene.distractors):
        entries.append((d, f"distractor{i}", REFERENCE_ID + 1 + i))
    for obj, slot, oid in entries:
        if only is not None and oid not in only:
            continue
        t, n = object_triangles(obj)
        add(t, n, SLOTS.index(slot), oid)
    return (
        np.asarray(tris, dtype=float).reshape(-1, 3, 3),
        np.asarray(normals, dtype=float).reshape(-1, 3),
        np.asarray(slots, dtype=int),
        np.asarray(ids, dtype=int),
    )


# --- projection and scan conversion ----------------------------------------------


def effective_camera(scene: Scene, params: Optional[RandomizationParams]) -> CameraPose:
    cam = scene.camera
    if params is None:
        return cam
    off = np.asarray(params.eye_offset) * scene.diameter
    return CameraPose(
        tuple(np.add(cam.eye, off)),
        cam.look_at,
        cam.up,
        cam.vertical_fov * params.fov_scale,
    )


def _clip_near(cam_tri: np.ndarray) -> list[np.ndarray]:
    """Clip one camera-space triangle against z = NEAR; returns 0-2 triangles."""
    poly = [cam_tri[i] for i in range(3)]
    out = []
    for i in range(3):
        a, b = poly[i], poly[(i + 1) % 3]
        a_in, b_in = a[2] >= NEAR, b[2] >= NEAR
        if a_in:
            out.append(a)
        if a_in != b_in:
            t = (NEAR - a[2]) / (b[2] - a[2])
            out.append(a + t * (b - a))
    if len(out) < 3:
        return []
    return [np.array([out[0], out[k], out[k + 1]]) for k in range(1, len(out) - 1)]


def project(scene_cam: CameraPose, tris: np.ndarray, size: tuple[int, int]):
    """Screen-space vertices, inverse depths and source-triangle index after clipping."""
    width, height = size
    right, up, fwd = scene_cam.basis()
    rel = tris - np.asarray(scene_cam.eye)
    cam = np.stack([rel @ right, rel @ up, rel @ fwd], axis=-1)  # (T, 3, 3)
    focal = (height / 2) / math.tan(scene_cam.vertical_fov / 2)

    inside = np.all(cam[:, :, 2] >= NEAR, axis=1)
    crossing = ~inside & np.any(cam[:, :, 2] >= NEAR, axis=1)
    kept = [cam[inside]]
    src = [np.nonzero(inside)[0]]
    for t in np.nonzero(crossing)[0]:
        pieces = _clip_near(cam[t])
        if pieces:
            kept.append(np.stack(pieces))
            src.append(np.full(len(pieces), t))
    cam = np.concatenate(kept) if kept else np.zeros((0, 3, 3))
    src = np.concatenate(src).astype(int)
    z = cam[:, :, 2]
    sx = width / 2 + focal * cam[:, :, 0] / z
    sy = height / 2 - focal * cam[:, :, 1] / z
    return np.stack([sx, sy], axis=-1), 1.0 / z, src


def rasterize(screen: np.ndarray, inv_z: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Index of the nearest triangle covering each pixel center, -1 where none.

    All candidate (triangle, pixel) pairs inside each triangle's bounding
    box are tested at once. Each pixel keeps its largest 1/z, the earliest
    triangle winning exact ties.
    """
    width, height = size
    index = np.full((height, width), -1, dtype=int)
    if len(screen) == 0:
        return index
    xs_all, ys_all = screen[:, :, 0], screen[:, :, 1]
    i0s = np.maximum(np.ceil(xs_all.min(axis=1) - 0.5), 0).astype(int)
    i1s = np.minimum(np.floor(xs_all.max(axis=1) - 0.5), width - 1).astype(int)
    j0s = np.maximum(np.ceil(ys_all.min(axis=1) - 0.5), 0).astype(int)
    j1s = np.minimum(np.floor(ys_all.max(axis=1) - 0.5), height - 1).astype(int)
    x0, y0 = xs_all[:, 0], ys_all[:, 0]
    x1, y1 = xs_all[:, 1], ys_all[:, 1]
    x2, y2 = xs_all[:, 2], ys_all[:, 2]
    area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    tris = np.nonzero((i1s >= i0s) & (j1s >= j0s) & (np.abs(area) >= 1e-12))[0]
    if len(tris) == 0:
        return index

    bw = i1s[tris] - i0s[tris] + 1
    counts = bw * (j1s[tris] - j0s[tris] + 1)
    t = np.repeat(tris, counts)
    local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    w_rep = np.repeat(bw, counts)
    pi = i0s[t] + local % w_rep
    pj = j0s[t] + local // w_rep
    px = pi + 0.5
    py = pj + 0.5

    a = area[t]
    w0 = ((x1[t] - px) * (y2[t] - py) - (x2[t] - px) * (y1[t] - py)) / a
    w1 = ((x2[t] - px) * (y0[t] - py) - (x0[t] - px) * (y2[t] - py)) / a
    w2 = 1.0 - w0 - w1
    iz = w0 * inv_z[t, 0] + w1 * inv_z[t, 1] + w2 * inv_z[t, 2]
    hit = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
    pix = (pj * width + pi)[hit]
    t, iz = t[hit], iz[hit]
    # sort by pixel, then depth descending, then triangle ascending
    order = np.lexsort((t, -iz, pix))
    pix, t = pix[order], t[order]
    first = np.ones(len(pix), dtype=bool)
    first[1:] = pix[1:] != pix[:-1]
    index.ravel()[pix[first]] = t[first]
    return index


def render_ids(
    scene: Scene,
    params: Optional[RandomizationParams] = None,
    size: tuple[int, int] = DEFAULT_SIZE,
    only: Optional[Sequence[int]] = None,
    include_table: bool = True,
) -> np.ndarray:
    """Object id per pixel (0 table, 1 target, 2 reference, 3+ distractors, -1 none)."""
    cam = effective_camera(scene, params)
    tris, _, _, ids = scene_mesh(scene, include_table=include_table, only=only)
    screen, inv_z, src = project(cam, tris, size)
    index = rasterize(screen, inv_z, size)
    out = np.full(index.shape, BACKGROUND_ID, dtype=int)
    covered = index >= 0
    out[covered] = ids[src[index[covered]]]
    return out


def silhouette_area(scene: Scene, size: tuple[int, int] = DEFAULT_SIZE, params=None) -> int:
    """Visible target pixels in the full scene."""
    return int(np.count_nonzero(render_ids(scene, params, size) == TARGET_ID))


def render(
    scene: Scene,
    params: RandomizationParams,
    size: tuple[int, int] = DEFAULT_SIZE,
) -> Image:
    """Flat-shaded RGB image of ``scene`` under the appearance ``params``.

    Each face gets ``base_color * (ambient + intensity * max(0, n . l))``,
    modulated per pixel by ``1 + amplitude * noise`` with noise uniform in
    [-1, 1] drawn from the params' noise seed.
    """
    width, height = size
    if width <= 0 or height <= 0:
        raise ValueError(f"image size must be positive, got {size}")
    scene.camera.validate()
    cam = effective_camera(scene, params)
    cam.validate()
    tris, normals, slots, _ = scene_mesh(scene)
    screen, inv_z, src = project(cam, tris, size)
    index = rasterize(screen, inv_z, size)

    colors = np.asarray(params.colors, dtype=float)  # (S, 3)
    amps = np.asarray(params.noise_amplitudes, dtype=float)
    light = np.asarray(params.light_direction, dtype=float)
    shade = params.ambient + params.light_intensity * np.maximum(normals @ light, 0.0)

    noise_rng = rng_for(params.noise_seed)
    noise = noise_rng.uniform(-1.0, 1.0, size=(len(SLOTS), height, width))

    bg = SLOTS.index("background")
    pix_slot = np.full((height, width), bg, dtype=int)
    pix_shade = np.ones((height, width))
    covered = index >= 0
    tri = src[index[covered]]
    pix_slot[covered] = slots[tri]
    pix_shade[covered] = shade[tri]
    rows, cols = np.indices((height, width))
    mod = 1.0 + amps[pix_slot] * noise[pix_slot, rows, cols]
    rgb = colors[pix_slot] * (pix_shade * mod)[..., None]
    return Image(np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8))
