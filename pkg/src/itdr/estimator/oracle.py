"""Synthetic estimator: ground truth plus parameterized Gaussian noise.

The heading noise grows when the peg points away from the camera::

    sigma_theta_eff(phi) = sigma_theta * (1 + a * (1 + cos(phi)) / 2)

where ``phi`` is the peg heading relative to the camera's line of sight
(``phi = 0``: pointing straight away, the most occluded view).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from ..geometry import Pose2
from ..seeding import rng_for

_ORACLE_STREAM = 0x4F524143


@dataclass(frozen=True)
class NoiseOracle:
    sigma_pos: float = 0.01
    sigma_theta: float = 0.05
    amplification: float = 0.0
    bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if self.sigma_pos < 0 or self.sigma_theta < 0:
            raise ValueError("oracle noise std must be >= 0")
        if self.amplification < 0:
            raise ValueError("amplification factor must be >= 0")
        object.__setattr__(self, "bias", tuple(float(b) for b in self.bias))

    def sigma_theta_eff(self, phi: float) -> float:
        return self.sigma_theta * (1.0 + self.amplification * (1.0 + math.cos(phi)) / 2.0)

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseOracle":
        d = dict(d)
        if "bias" in d:
            d["bias"] = tuple(d["bias"])
        return cls(**d)


def oracle_predict(oracle: NoiseOracle, truth: Pose2, draw_index: int, view_angle: Optional[float] = None) -> Pose2:
    """One noisy reading of ``truth``; a pure function of (oracle, truth, draw_index, view_angle).

    ``view_angle`` is the heading relative to the line of sight used for the
    amplification; without it the truth heading itself is used.
    """
    rng = rng_for(oracle.seed, _ORACLE_STREAM, draw_index)
    nx, ny, nt = rng.standard_normal(3)
    phi = truth.theta if view_angle is None else view_angle
    bx, by, bt = oracle.bias
    return Pose2(
        truth.x + bx + oracle.sigma_pos * nx,
        truth.y + by + oracle.sigma_pos * ny,
        truth.theta + bt + oracle.sigma_theta_eff(phi) * nt,
        truth.mask,
    )
