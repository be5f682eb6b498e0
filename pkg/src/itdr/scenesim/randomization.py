"""Sampling of nuisance appearance parameters (colors, noise, light, camera jitter)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..seeding import rng_for

# color/noise slots, in draw order
SLOTS = ("table", "background", "target", "reference", "distractor0", "distractor1", "distractor2")
MAX_DISTRACTORS = 3

_RANDOMIZATION_STREAM = 0x52414E44

# hard limits each configured range must respect
_BOUNDS = {
    "color": (0.0, 1.0),
    "noise_amplitude": (0.0, 0.5),
    "ambient": (0.3, 1.0),
    "light_intensity": (0.0, 0.7),
    "light_elevation": (0.0, math.pi / 2),
    "light_azimuth": (-math.pi, math.pi),
    "eye_jitter": (0.0, 0.05),
    "fov_jitter": (-0.1, 0.1),
}


class RandomizationConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RandomizationConfig:
    """Closed (lo, hi) ranges for every randomized quantity.

    ``eye_jitter`` is a fraction of the scene diameter; ``fov_jitter`` is a
    relative change of the vertical field of view.
    """

    color: tuple[float, float] = (0.0, 1.0)
    noise_amplitude: tuple[float, float] = (0.0, 0.5)
    ambient: tuple[float, float] = (0.3, 1.0)
    light_intensity: tuple[float, float] = (0.0, 0.7)
    light_elevation: tuple[float, float] = (math.pi / 6, math.pi / 2)
    light_azimuth: tuple[float, float] = (-math.pi, math.pi)
    eye_jitter: tuple[float, float] = (0.0, 0.05)
    fov_jitter: tuple[float, float] = (-0.1, 0.1)

    def __post_init__(self):
        for f in fields(self):
            lo, hi = (float(v) for v in getattr(self, f.name))
            object.__setattr__(self, f.name, (lo, hi))

    def validate(self) -> None:
        for name, (blo, bhi) in _BOUNDS.items():
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise RandomizationConfigError(f"{name} range must be finite, got {(lo, hi)}")
            if lo > hi:
                raise RandomizationConfigError(f"{name} range has min {lo} > max {hi}")
            if lo < blo - 1e-12 or hi > bhi + 1e-12:
                raise RandomizationConfigError(f"{name} range {(lo, hi)} outside allowed {(blo, bhi)}")

    @classmethod
    def fixed(cls, **values: float) -> "RandomizationConfig":
        """Zero-width ranges at the given values (others keep defaults)."""
        return cls(**{k: (v, v) for k, v in values.items()})

    @classmethod
    def from_dict(cls, d: dict) -> "RandomizationConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise RandomizationConfigError(f"unknown randomization keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class RandomizationParams:
    colors: tuple[tuple[float, float, float], ...]
    noise_amplitudes: tuple[float, ...]
    ambient: float
    light_direction: tuple[float, float, float]
    light_intensity: float
    eye_offset: tuple[float, float, float]  # fraction of scene diameter
    fov_scale: float
    noise_seed: int

    def color(self, slot: str) -> tuple[float, float, float]:
        return self.colors[SLOTS.index(slot)]

    @property
    def background(self) -> tuple[float, float, float]:
        return self.color("background")


def sample_randomization(seed: int, config: RandomizationConfig | None = None) -> RandomizationParams:
    """Draw appearance parameters; a pure function of ``(seed, config)``."""
    config = config or RandomizationConfig()
    config.validate()
    rng = rng_for(seed, _RANDOMIZATION_STREAM)

    def u(rng_range):
        lo, hi = rng_range
        return float(rng.uniform(lo, hi))

    colors = tuple(tuple(u(config.color) for _ in range(3)) for _ in SLOTS)
    noise = tuple(u(config.noise_amplitude) for _ in SLOTS)
    ambient = u(config.ambient)
    intensity = u(config.light_intensity)
    elev = u(config.light_elevation)
    azim = u(config.light_azimuth)
    light = (math.cos(elev) * math.cos(azim), math.cos(elev) * math.sin(azim), math.sin(elev))

    direction = rng.normal(size=3)
    direction /= max(np.linalg.norm(direction), 1e-12)
    magnitude = u(config.eye_jitter)
    eye_offset = tuple(float(c) for c in magnitude * direction)
    fov_scale = 1.0 + u(config.fov_jitter)
    noise_seed = int(rng.integers(0, 2**62))
    return RandomizationParams(
        colors=colors,
        noise_amplitudes=noise,
        ambient=ambient,
        light_direction=light,
        light_intensity=intensity,
        eye_offset=eye_offset,
        fov_scale=fov_scale,
        noise_seed=noise_seed,
    )
