"""On-disk datasets: PPM images plus a CSV manifest."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from ..geometry import Pose2, mask_from_str, mask_to_str
from ..seeding import derive_seed
from .randomization import RandomizationConfig, sample_randomization
from .render import DEFAULT_SIZE, Image, render
from .sampling import sample_scene, sample_training_scene
from .scenarios import scenario_spec

MANIFEST_NAME = "manifest.csv"
CONFIG_NAME = "config.json"
IMAGE_DIR = "images"
MANIFEST_HEADER = ["index", "image_path", "scenario", "x_m", "y_m", "theta_rad", "mask", "seed"]


class DatasetError(Exception):
    pass


class DatasetIOError(DatasetError):
    def __init__(self, path, cause):
        super().__init__(f"{path}: {cause}")
        self.path = str(path)


class DatasetExistsError(DatasetError):
    pass


def fmt_float(v: float) -> str:
    return f"{v:.9g}"


# --- PPM ---------------------------------------------------------------------------


def write_ppm(path, image: Image) -> None:
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(image.tobytes())
    except OSError as exc:
        raise DatasetIOError(path, exc) from exc


def _ppm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos + 1  # single whitespace byte after maxval


def read_ppm(path) -> Image:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DatasetIOError(path, exc) from exc
    try:
        (magic, w, h, maxval), offset = _ppm_tokens(data, 4)
        if magic != b"P6":
            raise ValueError(f"not a binary PPM (magic {magic!r})")
        w, h, maxval = int(w), int(h), int(maxval)
        if maxval != 255:
            raise ValueError(f"unsupported maxval {maxval}")
        body = data[offset : offset + 3 * w * h]
        if len(body) != 3 * w * h:
            raise ValueError("truncated pixel data")
    except (ValueError, IndexError) as exc:
        raise DatasetIOError(path, exc) from exc
    return Image(np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3))


# --- config & manifest ---------------------------------------------------------------


@dataclass(frozen=True)
class DatasetConfig:
    scenario: str = "reference"
    count: int = 1
    master_seed: int = 0
    image_size: tuple[int, int] = DEFAULT_SIZE
    randomization: RandomizationConfig = field(default_factory=RandomizationConfig)
    overwrite: bool = False
    # draw each item under a random capture preset (covers every fused view)
    capture_presets: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        d = dict(d)
        known = {"scenario", "count", "master_seed", "image_size", "randomization", "overwrite", "capture_presets"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown dataset config keys: {sorted(unknown)}")
        if "image_size" in d:
            size = d["image_size"]
            d["image_size"] = (int(size), int(size)) if isinstance(size, int) else tuple(int(s) for s in size)
        if "randomization" in d:
            d["randomization"] = RandomizationConfig.from_dict(d["randomization"])
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "DatasetConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "count": self.count,
            "master_seed": self.master_seed,
            "image_size": list(self.image_size),
            "randomization": self.randomization.to_dict(),
            "overwrite": self.overwrite,
            "capture_presets": self.capture_presets,
        }


@dataclass(frozen=True)
class ManifestRow:
    index: int
    image_path: str
    scenario: str
    pose: Pose2
    seed: int

    def to_csv_row(self) -> list[str]:
        return [
            str(self.index),
            self.image_path,
            self.scenario,
            fmt_float(self.pose.x),
            fmt_float(self.pose.y),
            fmt_float(self.pose.theta),
            mask_to_str(self.pose.mask),
            str(self.seed),
        ]


def item_seed(master_seed: int, index: int) -> int:
    """Counter-based per-item seed; independent of generation order."""
    return derive_seed(master_seed, index)


def format_manifest(rows: list[ManifestRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_HEADER)
    for r in rows:
        w.writerow(r.to_csv_row())
    return buf.getvalue()


def parse_manifest(text: str) -> list[ManifestRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != MANIFEST_HEADER:
        raise DatasetError(f"unexpected manifest header {header!r}")
    rows = []
    for rec in reader:
        if not rec:
            continue
        idx, path, scen, x, y, th, mask, seed = rec
        rows.append(ManifestRow(int(idx), path, scen, Pose2(float(x), float(y), float(th), mask_from_str(mask)), int(seed)))
    return rows


@dataclass
class Dataset:
    root: Path
    manifest: list[ManifestRow]

    def __len__(self) -> int:
        return len(self.manifest)

    def image(self, i: int) -> Image:
        return read_ppm(self.root / self.manifest[i].image_path)

    def images(self) -> Iterator[Image]:
        for i in range(len(self)):
            yield self.image(i)

    def image_array(self) -> np.ndarray:
        """All images stacked as uint8 (N, H, W, 3)."""
        return np.stack([img.pixels for img in self.images()])

    def poses(self) -> list[Pose2]:
        return [r.pose for r in self.manifest]

    def validate(self) -> None:
        """Parse every listed image; raises on the first missing or corrupt file."""
        for i in range(len(self)):
            self.image(i)


def load_dataset(root) -> Dataset:
    root = Path(root)
    path = root / MANIFEST_NAME
    try:
        text = path.read_text()
    except OSError as exc:
        raise DatasetIOError(path, exc) from exc
    return Dataset(root, parse_manifest(text))


def generate_dataset(config: DatasetConfig, out_dir, scene_sampler=None) -> Dataset:
    """Render ``config.count`` labelled images into ``out_dir``.

    Item ``i`` is drawn from ``item_seed(master_seed, i)`` alone, so any
    subset of items can be regenerated independently.
    """
    if config.count < 1:
        raise ValueError("dataset count must be >= 1")
    spec = scenario_spec(config.scenario)
    config.randomization.validate()
    root = Path(out_dir)
    try:
        if root.exists() and any(root.iterdir()) and not config.overwrite:
            raise DatasetExistsError(f"{root} is not empty; set overwrite to replace its contents")
        (root / IMAGE_DIR).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetIOError(root, exc) from exc

    sampler = scene_sampler or (sample_training_scene if config.capture_presets else sample_scene)
    rows = []
    for i in range(config.count):
        seed = item_seed(config.master_seed, i)
        scene = sampler(spec, seed)
        params = sample_randomization(derive_seed(seed, 1), config.randomization)
        image = render(scene, params, config.image_size)
        rel = f"{IMAGE_DIR}/{i:06d}.ppm"
        write_ppm(root / rel, image)
        rows.append(ManifestRow(i, rel, spec.tag, scene.label, seed))

    try:
        (root / MANIFEST_NAME).write_text(format_manifest(rows))
        (root / CONFIG_NAME).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise DatasetIOError(root, exc) from exc
    # labels are reported at manifest precision
    return Dataset(root, parse_manifest(format_manifest(rows)))
