"""Choosing which capture transforms to use.

A subset of pool candidates is evaluated by fusing over a fixed scene set.
Subsets need not contain the identity: the scene is first moved by the
subset's first member (in canonical name order) and the remaining members
are expressed relative to it. Fused estimates are mapped back to the
label frame of the untouched scene before scoring, so every subset is
scored against the same ground truth.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .fusion import FusionError, TransformSet, itdr_estimate, label_map
from .geometry import IDENTITY, ErrorVector, RigidTransform2, apply, compose, inverse, mean_error, pose_error
from .scenesim.randomization import RandomizationConfig
from .scenesim.render import DEFAULT_SIZE
from .scenesim.sampling import apply_scene_transform
from .scenesim.types import ENTITIES, Scene, SceneError, ScenarioSpec
from .seeding import derive_seed

DEFAULT_THETA_WEIGHT = 0.1
MAX_SUBSETS = 10_000
MAX_FAILURE_FRACTION = 0.10


class SelectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class CandidatePool:
    """Named (transform, entity) candidates; names define the canonical order."""

    candidates: tuple[tuple[str, RigidTransform2, str], ...]

    def __post_init__(self):
        items = tuple((str(n), t, str(e)) for n, t, e in self.candidates)
        names = [n for n, _, _ in items]
        if not items:
            raise SelectionError("candidate pool is empty")
        if len(set(names)) != len(names):
            raise SelectionError(f"duplicate candidate names in {names}")
        for n, _, e in items:
            if e not in ENTITIES:
                raise SceneError(f"candidate {n!r} has unknown entity {e!r}")
        object.__setattr__(self, "candidates", items)

    @classmethod
    def from_spec(cls, spec: ScenarioSpec) -> "CandidatePool":
        return cls(tuple((n, t, e) for n, (t, e) in spec.candidates.items()))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _, _ in self.candidates)

    def __len__(self) -> int:
        return len(self.candidates)

    def get(self, name: str) -> tuple[RigidTransform2, str]:
        for n, t, e in self.candidates:
            if n == name:
                return t, e
        raise KeyError(name)

    def check(self, scenes: Sequence[Scene]) -> None:
        """Raise unless every candidate applies to every scene."""
        for s in scenes:
            for _, t, e in self.candidates:
                apply_scene_transform(s, t, e)


def scalarize(err: ErrorVector, theta_weight: float = DEFAULT_THETA_WEIGHT) -> float:
    """``ex + ey + w * etheta`` over the evaluated components."""
    ex, ey, et = err.as_tuple()
    return (ex or 0.0) + (ey or 0.0) + theta_weight * (et or 0.0)


def rebase(pool: CandidatePool, members: Sequence[str]) -> tuple[tuple[RigidTransform2, str], TransformSet]:
    """Base move plus a transform set relative to the moved scene.

    Members are taken in canonical (sorted) order so the result does not
    depend on how the subset was listed.
    """
    names = sorted(members)
    if not names:
        raise SelectionError("empty subset")
    t0, e0 = pool.get(names[0])
    rel = [(compose(pool.get(n)[0], inverse(t0)), pool.get(n)[1]) for n in names[1:]]
    entities = {e0, *(e for _, e in rel)}
    if len(entities) > 1:
        raise SelectionError(f"subset {names} mixes entities {sorted(entities)}")
    return (t0, e0), TransformSet(((IDENTITY, e0), *rel))


@dataclass(frozen=True)
class SetEvaluation:
    mean: ErrorVector
    n: int
    failed: tuple[int, ...]


def _evaluate(pool, members, estimator, scenes, seed, policy, randomization, image_size) -> SetEvaluation:
    (t0, e0), ts = rebase(pool, members)
    errors, failed = [], []
    for i, scene in enumerate(scenes):
        base = apply_scene_transform(scene, t0, e0)
        try:
            trace = itdr_estimate(estimator, base, ts, policy, derive_seed(seed, i), randomization, image_size)
        except FusionError:
            failed.append(i)
            continue
        fused = apply(inverse(label_map(t0, e0, scene)), trace.fused)
        errors.append(pose_error(scene.label, fused))
    if len(failed) > MAX_FAILURE_FRACTION * len(scenes):
        raise SelectionError(
            f"subset {'+'.join(sorted(members))}: {len(failed)} of {len(scenes)} fusions failed"
        )
    return SetEvaluation(mean_error(errors), len(errors), tuple(failed))


def evaluate_transform_set(
    ts,
    estimator,
    scenes: Sequence[Scene],
    seed: int = 0,
    params_policy: str = "resampled",
    randomization: Optional[RandomizationConfig] = None,
    image_size: tuple[int, int] = DEFAULT_SIZE,
) -> SetEvaluation:
    """Mean fused error over ``scenes``; scenes whose fusion degenerates are
    counted in ``failed`` and excluded. More than 10% failures is an error.

    ``ts`` is a :class:`TransformSet` applied to each scene as is, or a
    ``(pool, member names)`` pair.
    """
    if not scenes:
        raise SelectionError("no evaluation scenes")
    if isinstance(ts, TransformSet):
        # keep the given order: zero-padded names sort like the indices
        names = [f"t{i:06d}" for i in range(len(ts))]
        pool = CandidatePool(tuple((n, t, e) for n, (t, e) in zip(names, ts)))
    else:
        pool, names = ts
    return _evaluate(pool, names, estimator, scenes, seed, params_policy, randomization, image_size)


@dataclass(frozen=True)
class SubsetResult:
    members: tuple[str, ...]
    evaluation: SetEvaluation
    scalar: float
    rank: int = 0

    @property
    def label(self) -> str:
        return "+".join(self.members)


@dataclass(frozen=True)
class SelectionReport:
    rows: tuple[SubsetResult, ...]
    chosen: SubsetResult

    def write_csv(self, path) -> None:
        def f(v):
            return "" if v is None else f"{v:.9g}"

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["subset", "ex_m", "ey_m", "etheta_rad", "scalar", "rank"])
            for r in self.rows:
                w.writerow([r.label, *map(f, r.evaluation.mean.as_tuple()), f(r.scalar), r.rank])


def _ranked(rows: list[SubsetResult]) -> tuple[SubsetResult, ...]:
    order = sorted(range(len(rows)), key=lambda i: (rows[i].scalar, i))
    ranks = {i: r + 1 for r, i in enumerate(order)}
    return tuple(
        SubsetResult(r.members, r.evaluation, r.scalar, ranks[i]) for i, r in enumerate(rows)
    )


def _check_size(pool: CandidatePool, subset_size: int) -> None:
    if not 1 <= subset_size <= len(pool):
        raise SelectionError(f"subset size {subset_size} outside [1, {len(pool)}]")


def exhaustive_select(
    pool: CandidatePool,
    subset_size: int,
    estimator,
    scenes: Sequence[Scene],
    seed: int = 0,
    theta_weight: float = DEFAULT_THETA_WEIGHT,
    params_policy: str = "resampled",
    randomization: Optional[RandomizationConfig] = None,
    image_size: tuple[int, int] = DEFAULT_SIZE,
) -> SelectionReport:
    """Evaluate every subset of ``subset_size`` candidates and pick the best.

    Rows follow lexicographic order of pool indices, which also breaks
    ties in the scalarized error.
    """
    _check_size(pool, subset_size)
    count = math.comb(len(pool), subset_size)
    if count > MAX_SUBSETS:
        raise SelectionError(f"{count} subsets exceed the limit of {MAX_SUBSETS}; use greedy_select")
    if not scenes:
        raise SelectionError("no evaluation scenes")
    rows = []
    for combo in itertools.combinations(pool.names, subset_size):
        ev = _evaluate(pool, combo, estimator, scenes, seed, params_policy, randomization, image_size)
        rows.append(SubsetResult(tuple(combo), ev, scalarize(ev.mean, theta_weight)))
    ranked = _ranked(rows)
    return SelectionReport(ranked, min(ranked, key=lambda r: r.rank))


def greedy_select(
    pool: CandidatePool,
    subset_size: int,
    estimator,
    scenes: Sequence[Scene],
    seed: int = 0,
    theta_weight: float = DEFAULT_THETA_WEIGHT,
    params_policy: str = "resampled",
    randomization: Optional[RandomizationConfig] = None,
    image_size: tuple[int, int] = DEFAULT_SIZE,
) -> SelectionReport:
    """Grow a subset one candidate at a time, each step taking the lowest error.

    Every evaluated set is reported; the chosen one is the final set.
    """
    _check_size(pool, subset_size)
    if not scenes:
        raise SelectionError("no evaluation scenes")
    current: list[str] = []
    rows: list[SubsetResult] = []
    best = None
    for _ in range(subset_size):
        best = None
        for name in pool.names:
            if name in current:
                continue
            members = tuple(n for n in pool.names if n in current or n == name)
            ev = _evaluate(pool, members, estimator, scenes, seed, params_policy, randomization, image_size)
            row = SubsetResult(members, ev, scalarize(ev.mean, theta_weight))
            rows.append(row)
            if best is None or row.scalar < best.scalar:
                best = row
        current = list(best.members)
    ranked = _ranked(rows)
    return SelectionReport(ranked, ranked[rows.index(best)])
