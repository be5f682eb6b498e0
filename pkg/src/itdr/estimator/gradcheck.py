"""Central finite-difference check of the backpropagated gradient."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..seeding import rng_for
from .loss import batch_loss
from .model import Model, activation_pattern, forward_batch
from .train import loss_gradient_arrays


@dataclass(frozen=True)
class Probe:
    layer: str
    index: int
    analytic: float
    numeric: float
    crossed_kink: bool

    @property
    def relative_error(self) -> float:
        denom = max(abs(self.analytic), abs(self.numeric), 1e-7)
        return abs(self.analytic - self.numeric) / denom


def _same_pattern(a, b) -> bool:
    return all(np.array_equal(u, v) for u, v in zip(a, b))


def finite_difference_check(
    model: Model,
    x: np.ndarray,
    targets: np.ndarray,
    mask=(True, True, True),
    probes_per_layer: int = 10,
    h: float = 1e-4,
    seed: int = 0,
    max_draws_per_layer: int = 200,
) -> list[Probe]:
    """Compare analytic and central-difference derivatives on random parameters.

    A probe whose +/-h step changes any ReLU sign or pooling argmax straddles
    a non-differentiable point, so the difference quotient is not an
    estimate of the derivative there; such probes are flagged and another
    parameter of the same layer is drawn instead.
    """
    x = np.asarray(x, dtype=np.float64)
    _, grad = loss_gradient_arrays(model, x, targets, mask)
    base = activation_pattern(model, x)
    rng = rng_for(seed, 0x4644)
    probes = []
    for name, (off, shape) in model.layout.items():
        size = math.prod(shape)
        order = rng.permutation(size)[:max_draws_per_layer]
        good = 0
        for k in order:
            if good >= min(probes_per_layer, size):
                break
            i = off + int(k)
            p = model.params.copy()
            p[i] += h
            up = batch_loss(forward_batch(model, x, p), targets, mask)[0]
            up_pat = activation_pattern(model, x, p)
            p[i] -= 2 * h
            down = batch_loss(forward_batch(model, x, p), targets, mask)[0]
            down_pat = activation_pattern(model, x, p)
            kink = not (_same_pattern(base, up_pat) and _same_pattern(base, down_pat))
            probes.append(Probe(name, int(k), float(grad[i]), (up - down) / (2 * h), kink))
            good += not kink
    return probes
