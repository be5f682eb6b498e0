"""Scenario runs and the orientation breakdown."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence, Union

from ..estimator.evaluate import OracleEstimator, PerfectEstimator, as_estimator
from ..estimator.model import CheckpointError, load_checkpoint
from ..estimator.oracle import NoiseOracle
from ..fusion import POLICIES, FusionError, FusionTrace, TransformSet, itdr_estimate
from ..geometry import ErrorVector, mean_error, wrap_angle
from ..scenesim.randomization import RandomizationConfig
from ..scenesim.sampling import sample_scene
from ..scenesim.scenarios import scenario_spec
from ..scenesim.types import SCENARIOS, Scene, ScenarioSpec
from ..seeding import derive_seed

DEFAULT_N = 500
REPORT_HEADER = ["condition", "n", "ex_m", "ey_m", "etheta_rad", "seed"]
ORIENTATION_HEADER = ["condition", "bin", "theta_lo_rad", "theta_hi_rad", "n", "ex_m", "ey_m", "etheta_rad", "seed"]

_EVAL_SCENE_STREAM = 0x4556414C


class HarnessError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Settings shared by scenario, orientation and selection runs.

    ``oracle`` is either ``"perfect"`` or a dict of :class:`NoiseOracle`
    fields; when it is set no checkpoint is needed.
    """

    scenario: str = "reference"
    n: int = DEFAULT_N
    seed: int = 0
    params_policy: str = "resampled"
    image_size: tuple[int, int] = (64, 64)
    randomization: Optional[RandomizationConfig] = None
    oracle: Union[None, str, dict] = None
    model: Optional[str] = None
    conditions: Optional[tuple[str, ...]] = None
    bins: int = 8
    multi_condition: Optional[str] = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.params_policy not in POLICIES:
            raise ConfigError(f"unknown params policy {self.params_policy!r}; expected one of {POLICIES}")
        if isinstance(self.oracle, str) and self.oracle != "perfect":
            raise ConfigError(f"oracle must be 'perfect' or an object, got {self.oracle!r}")
        object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))
        if self.conditions is not None:
            object.__setattr__(self, "conditions", tuple(self.conditions))
        if isinstance(self.randomization, dict):
            object.__setattr__(self, "randomization", RandomizationConfig.from_dict(self.randomization))

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class ReportRow:
    condition: str
    n: int
    mean: Optional[ErrorVector]
    seed: int

    def cells(self) -> list[str]:
        vals = self.mean.as_tuple() if self.mean is not None else (None, None, None)
        return [self.condition, str(self.n), *(_fmt(v) for v in vals), str(self.seed)]


@dataclass(frozen=True)
class ReportTable:
    rows: tuple[ReportRow, ...]
    failures: dict = field(default_factory=dict, compare=False)

    def row(self, condition: str) -> ReportRow:
        for r in self.rows:
            if r.condition == condition:
                return r
        raise KeyError(condition)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_HEADER)
            for r in self.rows:
                w.writerow(r.cells())


@dataclass(frozen=True)
class OrientationRow:
    condition: str
    bin: int
    theta_lo: float
    theta_hi: float
    n: int
    mean: Optional[ErrorVector]
    seed: int


@dataclass(frozen=True)
class OrientationTable:
    rows: tuple[OrientationRow, ...]
    bins: int

    def profile(self, condition: str) -> list[Optional[ErrorVector]]:
        return [r.mean for r in self.rows if r.condition == condition]

    def bin_of(self, theta: float) -> int:
        return orientation_bin(theta, self.bins)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ORIENTATION_HEADER)
            for r in self.rows:
                vals = r.mean.as_tuple() if r.mean is not None else (None, None, None)
                w.writerow([r.condition, r.bin, _fmt(r.theta_lo), _fmt(r.theta_hi), r.n, *map(_fmt, vals), r.seed])


def _fmt(v: Optional[float]) -> str:
    # shortest repr round-trips, so reports can be re-aggregated exactly
    return "" if v is None else repr(float(v))


def load_estimator(model_path=None, oracle=None, mask=None):
    """Estimator from a checkpoint path or an oracle description."""
    if oracle is not None:
        if oracle == "perfect":
            return PerfectEstimator()
        try:
            return OracleEstimator(NoiseOracle.from_dict(oracle))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad oracle config: {exc}") from None
    if model_path is None:
        raise ConfigError("either a model checkpoint or an oracle config is required")
    if not os.path.exists(model_path):
        raise HarnessError(f"checkpoint not found: {model_path}")
    model = load_checkpoint(model_path)
    if mask is not None and tuple(model.config.mask) != tuple(mask):
        raise HarnessError(f"model evaluates mask {model.config.mask} but the scenario needs {tuple(mask)}")
    return as_estimator(model)


def evaluation_scenes(spec: ScenarioSpec, n: int, seed: int) -> list[Scene]:
    return [sample_scene(spec, derive_seed(seed, _EVAL_SCENE_STREAM, i)) for i in range(n)]


def _conditions(spec: ScenarioSpec, wanted: Optional[Sequence[str]]) -> list[str]:
    if wanted is None:
        return list(spec.conditions)
    for c in wanted:
        if c not in spec.conditions:
            raise ConfigError(f"scenario {spec.tag!r} has no condition {c!r}; options {list(spec.conditions)}")
    return list(wanted)


def _run_condition(est, scenes, ts, config) -> list[tuple[int, Union[FusionTrace, FusionError]]]:
    out = []
    for i, scene in enumerate(scenes):
        # the same per-item seed across conditions keeps comparisons paired
        item_seed = derive_seed(config.seed, i)
        try:
            out.append((i, itdr_estimate(est, scene, ts, config.params_policy, item_seed, config.randomization, config.image_size)))
        except FusionError as exc:
            out.append((i, exc))
    return out


def _trace_line(condition: str, item: int, result) -> str:
    if isinstance(result, FusionTrace):
        doc = {"condition": condition, "item": item, **result.to_dict()}
    else:
        doc = {
            "condition": condition,
            "item": item,
            "error": str(result),
            "predictions": [{"x": p.x, "y": p.y, "theta": p.theta} for p in result.predictions],
        }
    return json.dumps(doc, sort_keys=True)


def _row(condition, results, seed) -> ReportRow:
    errors = [r.error for _, r in results if isinstance(r, FusionTrace)]
    return ReportRow(condition, len(errors), mean_error(errors) if errors else None, seed)


def run_scenario(
    spec: Union[str, ScenarioSpec, None],
    model_path=None,
    config: Optional[RunConfig] = None,
    out_dir=None,
) -> ReportTable:
    """Single- and multi-capture conditions of one scenario over ``config.n`` scenes.

    Writes ``report.csv`` and ``traces.jsonl`` (one fused trace per scene
    and condition) to ``out_dir`` when given.
    """
    config = config or RunConfig()
    if spec is None:
        spec = config.scenario
    spec = spec if isinstance(spec, ScenarioSpec) else scenario_spec(spec)
    est = load_estimator(model_path or config.model, config.oracle, spec.mask)
    conditions = _conditions(spec, config.conditions)
    scenes = evaluation_scenes(spec, config.n, config.seed)
    rows, lines, failures = [], [], {}
    for cond in conditions:
        results = _run_condition(est, scenes, TransformSet.from_condition(spec, cond), config)
        rows.append(_row(cond, results, config.seed))
        failures[cond] = sum(not isinstance(r, FusionTrace) for _, r in results)
        lines += [_trace_line(cond, i, r) for i, r in results]
    table = ReportTable(tuple(rows), failures)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        table.write_csv(out / "report.csv")
        (out / "traces.jsonl").write_text("".join(line + "\n" for line in lines))
    return table


def orientation_bin(theta: float, bins: int) -> int:
    """Bin index with bin 0 centered on heading pi and bin b on pi + 2*pi*b/bins."""
    width = 2 * math.pi / bins
    return int(round(wrap_angle(theta - math.pi) / width)) % bins


def bin_edges(b: int, bins: int) -> tuple[float, float]:
    width = 2 * math.pi / bins
    center = math.pi + b * width
    return wrap_angle(center - width / 2), wrap_angle(center + width / 2)


def error_vs_orientation(model_path=None, config: Optional[RunConfig] = None, bins: Optional[int] = None, out_dir=None) -> OrientationTable:
    """Per-heading-bin mean errors for the single-capture and one multi-capture condition.

    Items are bucketed by their true heading. Bins without items are
    reported with ``n = 0`` and blank means.
    """
    config = config or RunConfig(scenario="camera")
    bins = config.bins if bins is None else bins
    if bins < 4:
        raise ConfigError(f"need at least 4 orientation bins, got {bins}")
    spec = scenario_spec(config.scenario)
    est = load_estimator(model_path or config.model, config.oracle, spec.mask)
    names = list(spec.conditions)
    multi = config.multi_condition or names[-1]
    conditions = _conditions(spec, [names[0], multi] if multi != names[0] else [names[0]])
    scenes = evaluation_scenes(spec, config.n, config.seed)
    bucket = [orientation_bin(s.label.theta, bins) for s in scenes]
    rows = []
    for cond in conditions:
        results = _run_condition(est, scenes, TransformSet.from_condition(spec, cond), config)
        for b in range(bins):
            errs = [r.error for i, r in results if bucket[i] == b and isinstance(r, FusionTrace)]
            lo, hi = bin_edges(b, bins)
            rows.append(OrientationRow(cond, b, lo, hi, len(errs), mean_error(errs) if errs else None, config.seed))
    table = OrientationTable(tuple(rows), bins)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        table.write_csv(out / "orientation.csv")
    return table


def read_report(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def reaggregate(traces_path) -> dict[str, ErrorVector]:
    """Per-condition mean error recomputed from a traces file."""
    errors: dict[str, list] = {}
    with open(traces_path) as fh:
        for line in fh:
            doc = json.loads(line)
            if "error" in doc and "captures" not in doc:
                continue
            trace = FusionTrace.from_dict(doc)
            errors.setdefault(doc["condition"], []).append(trace.error)
    return {c: mean_error(e) for c, e in errors.items()}
