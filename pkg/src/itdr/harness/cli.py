"""Command-line entry point.

Every subcommand reads an optional JSON config (``--config``); command-line
flags override the matching config keys. ``--out`` names an output
directory. Exit status is 0 on success, 1 for usage or configuration
errors and 2 for runtime failures; failures print a JSON document to
stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from ..estimator.evaluate import evaluate
from ..estimator.model import Model, ModelConfig, save_checkpoint
from ..estimator.train import TrainConfig, TrainingData, train
from ..fusion import TransformSet, itdr_estimate
from ..scenesim.dataset import DatasetConfig, generate_dataset, load_dataset
from ..scenesim.randomization import RandomizationConfigError
from ..scenesim.sampling import sample_scene
from ..scenesim.scenarios import scenario_spec
from ..selection import DEFAULT_THETA_WEIGHT, CandidatePool, exhaustive_select, greedy_select
from .experiments import ConfigError, RunConfig, error_vs_orientation, evaluation_scenes, load_estimator, run_scenario

log = logging.getLogger("itdr")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return cfg


def _merged(args, keys: dict[str, str]) -> dict:
    """Config file values overridden by the flags that were given."""
    cfg = _load_config(args.config)
    for attr, key in keys.items():
        v = getattr(args, attr, None)
        if v is not None:
            cfg[key] = v
    return cfg


def _split(cfg: dict, names) -> tuple[dict, dict]:
    mine = {k: cfg[k] for k in names if k in cfg}
    rest = {k: v for k, v in cfg.items() if k not in names}
    return mine, rest


def _out_dir(args) -> Path:
    if args.out is None:
        raise ConfigError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run_config(cfg: dict) -> RunConfig:
    try:
        return RunConfig.from_dict(cfg)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# --- subcommands ---------------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = _merged(args, {"seed": "master_seed", "scenario": "scenario", "count": "count", "overwrite": "overwrite"})
    if args.size is not None:
        cfg["image_size"] = list(args.size)
    if args.out is None:
        raise ConfigError("--out is required")
    try:
        dcfg = DatasetConfig.from_dict(cfg)
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"bad dataset config: {exc}") from None
    ds = generate_dataset(dcfg, args.out)
    print(json.dumps({"images": len(ds.manifest), "out": str(args.out)}))
    return EXIT_OK


_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}


def cmd_train(args) -> int:
    cfg = _merged(
        args,
        {"seed": "seed", "dataset": "dataset", "epochs": "epochs", "learning_rate": "learning_rate", "batch_size": "batch_size"},
    )
    out = _out_dir(args)
    tcfg_d, rest = _split(cfg, _TRAIN_KEYS)
    arch, rest = _split(rest, ("channels", "hidden"))
    if "dataset" not in rest:
        raise ConfigError("train needs a dataset directory (--dataset or config key 'dataset')")
    dataset_dir = rest.pop("dataset")
    if rest:
        raise ConfigError(f"unknown config keys {sorted(rest)}")
    try:
        tcfg = TrainConfig.from_dict(tcfg_d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad training config: {exc}") from None
    ds = load_dataset(dataset_dir)
    data = TrainingData.from_dataset(ds)
    h, w = data.images.shape[1:3]
    mcfg = ModelConfig(height=h, width=w, mask=data.mask, **arch)
    model = Model.init(mcfg, tcfg.seed, tcfg.init_scale)
    trained, tlog = train(model, data, tcfg)
    save_checkpoint(trained, out / "model.ckpt")
    tlog.write_csv(out / "train_log.csv")
    print(json.dumps({"checkpoint": str(out / "model.ckpt"), "final_loss": tlog.mean_loss[-1]}))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _merged(args, {"dataset": "dataset", "model": "model"})
    out = _out_dir(args)
    if "dataset" not in cfg:
        raise ConfigError("evaluate needs a dataset directory")
    ds = load_dataset(cfg["dataset"])
    est = load_estimator(cfg.get("model"), cfg.get("oracle"))
    report = evaluate(est, ds)
    report.write_csv(out / "errors.csv")
    print(json.dumps({"n": report.n, "mean": report.mean.as_tuple()}))
    return EXIT_OK


def cmd_itdr(args) -> int:
    cfg = _merged(args, {"seed": "seed", "scenario": "scenario", "model": "model", "condition": "condition", "scene_seed": "scene_seed"})
    out = _out_dir(args)
    mine, rest = _split(cfg, ("condition", "scene_seed"))
    rc = _run_config(rest)
    spec = scenario_spec(rc.scenario)
    est = load_estimator(rc.model, rc.oracle, spec.mask)
    condition = mine.get("condition", list(spec.conditions)[-1])
    scene = sample_scene(spec, int(mine.get("scene_seed", rc.seed)))
    ts = TransformSet.from_condition(spec, condition)
    trace = itdr_estimate(est, scene, ts, rc.params_policy, rc.seed, rc.randomization, rc.image_size)
    text = trace.to_json()
    (out / "trace.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_select(args) -> int:
    cfg = _merged(args, {"seed": "seed", "scenario": "scenario", "model": "model", "n": "n", "subset_size": "subset_size", "method": "method"})
    out = _out_dir(args)
    mine, rest = _split(cfg, ("subset_size", "method", "theta_weight"))
    rc = _run_config(rest)
    spec = scenario_spec(rc.scenario)
    est = load_estimator(rc.model, rc.oracle, spec.mask)
    method = mine.get("method", "exhaustive")
    if method not in ("exhaustive", "greedy"):
        raise ConfigError(f"unknown selection method {method!r}")
    select = exhaustive_select if method == "exhaustive" else greedy_select
    scenes = evaluation_scenes(spec, rc.n, rc.seed)
    report = select(
        CandidatePool.from_spec(spec),
        int(mine.get("subset_size", 2)),
        est,
        scenes,
        rc.seed,
        float(mine.get("theta_weight", DEFAULT_THETA_WEIGHT)),
        rc.params_policy,
        rc.randomization,
        rc.image_size,
    )
    report.write_csv(out / "selection.csv")
    print(json.dumps({"chosen": report.chosen.label, "scalar": report.chosen.scalar}))
    return EXIT_OK


def cmd_scenario(args) -> int:
    cfg = _merged(args, {"seed": "seed", "scenario": "scenario", "model": "model", "n": "n"})
    out = _out_dir(args)
    rc = _run_config(cfg)
    table = run_scenario(rc.scenario, rc.model, rc, out)
    for r in table.rows:
        print(",".join(r.cells()))
    return EXIT_OK


def cmd_orientation(args) -> int:
    cfg = _merged(args, {"seed": "seed", "scenario": "scenario", "model": "model", "n": "n", "bins": "bins"})
    cfg.setdefault("scenario", "camera")
    out = _out_dir(args)
    rc = _run_config(cfg)
    error_vs_orientation(rc.model, rc, rc.bins, out)
    print(json.dumps({"out": str(out / "orientation.csv")}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="itdr", description="Multi-capture pose estimation on simulated tabletop scenes.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, scenario=True, model=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        if scenario:
            p.add_argument("--scenario", choices=("reference", "gripper", "camera"))
        if model:
            p.add_argument("--model", help="model checkpoint")
        return p

    p = common(sub.add_parser("generate", help="render a domain-randomized dataset"), model=False)
    p.add_argument("--count", type=int)
    p.add_argument("--size", type=int, nargs=2, metavar=("W", "H"))
    p.add_argument("--overwrite", action="store_true", default=None)
    p.set_defaults(func=cmd_generate)

    p = common(sub.add_parser("train", help="train the pose regressor"), scenario=False, model=False)
    p.add_argument("--dataset")
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("evaluate", help="single-image errors on a dataset"), scenario=False)
    p.add_argument("--dataset")
    p.set_defaults(func=cmd_evaluate)

    p = common(sub.add_parser("itdr", help="fused estimate for one sampled scene"))
    p.add_argument("--condition")
    p.add_argument("--scene-seed", dest="scene_seed", type=int)
    p.set_defaults(func=cmd_itdr)

    p = common(sub.add_parser("select", help="rank subsets of capture presets"))
    p.add_argument("--n", type=int)
    p.add_argument("--subset-size", dest="subset_size", type=int)
    p.add_argument("--method", choices=("exhaustive", "greedy"))
    p.set_defaults(func=cmd_select)

    p = common(sub.add_parser("scenario", help="report table for one scenario"))
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_scenario)

    p = common(sub.add_parser("orientation", help="errors binned by true heading"))
    p.add_argument("--n", type=int)
    p.add_argument("--bins", type=int)
    p.set_defaults(func=cmd_orientation)
    return parser


def _fail(code: int, exc: BaseException) -> int:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(doc), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _fail(EXIT_USAGE, exc)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, RandomizationConfigError, UsageError) as exc:
        return _fail(EXIT_USAGE, exc)
    except Exception as exc:  # runtime failure: report, do not trace
        log.debug("failure", exc_info=True)
        return _fail(EXIT_RUNTIME, exc)


if __name__ == "__main__":
    sys.exit(main())
