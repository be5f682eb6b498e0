import json
import math

import numpy as np
import pytest

from itdr.estimator import Model, ModelConfig, save_checkpoint
from itdr.geometry import GRIPPER_MASK
from itdr.harness import (
    ConfigError,
    HarnessError,
    RunConfig,
    bin_edges,
    error_vs_orientation,
    main,
    orientation_bin,
    reaggregate,
    read_report,
    run_scenario,
)

NOISY = {"sigma_pos": 0.01, "sigma_theta": 0.05}
AMPLIFIED = {"sigma_pos": 0.005, "sigma_theta": 0.05, "amplification": 4.0}


def _cfg(**kw):
    kw.setdefault("oracle", NOISY)
    return RunConfig(**kw)


# --- run_scenario ---------------------------------------------------------------------


@pytest.mark.parametrize("tag", ["reference", "gripper", "camera"])
def test_perfect_oracle_all_zero(tag):
    table = run_scenario(tag, config=_cfg(scenario=tag, n=15, oracle="perfect"))
    for row in table.rows:
        assert row.n == 15
        assert all(v is None or v < 1e-9 for v in row.mean.as_tuple())


@pytest.mark.parametrize(
    "tag,conditions",
    [
        ("reference", ["one image", "diagonal", "parallel", "four corners"]),
        ("gripper", ["one image", "two images", "five images"]),
        ("camera", ["one image", "three images"]),
    ],
)
def test_report_row_structure(tag, conditions, tmp_path):
    table = run_scenario(tag, config=_cfg(scenario=tag, n=5), out_dir=tmp_path)
    assert [r.condition for r in table.rows] == conditions
    rows = read_report(tmp_path / "report.csv")
    assert list(rows[0]) == ["condition", "n", "ex_m", "ey_m", "etheta_rad", "seed"]
    assert [r["condition"] for r in rows] == conditions
    for r in rows:
        # the gripper scenario does not evaluate y
        assert (r["ey_m"] == "") == (tag == "gripper")
        assert int(r["n"]) > 0
    lines = (tmp_path / "traces.jsonl").read_text().splitlines()
    assert len(lines) == 5 * len(conditions)


def test_gripper_more_views_lower_heading_error():
    table = run_scenario("gripper", config=_cfg(scenario="gripper", n=600, oracle={"sigma_pos": 0.01, "sigma_theta": 0.1}))
    one, two, five = (table.row(c).mean.etheta for c in ("one image", "two images", "five images"))
    assert five < two < one


def test_reports_byte_identical(tmp_path):
    cfg = _cfg(scenario="reference", n=20, seed=3)
    run_scenario("reference", config=cfg, out_dir=tmp_path / "a")
    run_scenario("reference", config=cfg, out_dir=tmp_path / "b")
    for name in ("report.csv", "traces.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    run_scenario("reference", config=_cfg(scenario="reference", n=20, seed=4), out_dir=tmp_path / "c")
    assert (tmp_path / "a" / "report.csv").read_bytes() != (tmp_path / "c" / "report.csv").read_bytes()


def test_report_reconstructible_from_traces(tmp_path):
    table = run_scenario("camera", config=_cfg(scenario="camera", n=30, oracle=AMPLIFIED), out_dir=tmp_path)
    again = reaggregate(tmp_path / "traces.jsonl")
    for row in table.rows:
        for a, b in zip(row.mean.as_tuple(), again[row.condition].as_tuple()):
            assert abs(a - b) <= 1e-12
    for r in read_report(tmp_path / "report.csv"):
        assert float(r["ex_m"]) == table.row(r["condition"]).mean.ex


def test_missing_checkpoint_and_mask_mismatch(tmp_path):
    with pytest.raises(HarnessError):
        run_scenario("reference", model_path=tmp_path / "none.ckpt", config=RunConfig(n=2))
    save_checkpoint(Model.init(ModelConfig(mask=GRIPPER_MASK), 0), tmp_path / "g.ckpt")
    with pytest.raises(HarnessError, match="mask"):
        run_scenario("reference", model_path=tmp_path / "g.ckpt", config=RunConfig(n=2))
    with pytest.raises(ConfigError):
        run_scenario("reference", config=RunConfig(n=2))


def test_run_with_checkpoint(tmp_path):
    save_checkpoint(Model.init(ModelConfig(height=16, width=16), 0), tmp_path / "m.ckpt")
    cfg = RunConfig(n=3, image_size=(16, 16), conditions=("one image", "diagonal"))
    table = run_scenario("reference", model_path=tmp_path / "m.ckpt", config=cfg)
    assert [r.n for r in table.rows] == [3, 3]


def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(scenario="kitchen")
    with pytest.raises(ConfigError):
        RunConfig(n=0)
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"n": 3, "colour": "red"})
    with pytest.raises(ConfigError):
        run_scenario("reference", config=_cfg(conditions=("three corners",), n=1))


# --- orientation ----------------------------------------------------------------------


def test_orientation_bins_centered():
    assert orientation_bin(math.pi, 8) == 0
    assert orientation_bin(-math.pi + 1e-9, 8) == 0
    assert orientation_bin(0.0, 8) == 4
    assert orientation_bin(0.1, 8) == 4
    lo, hi = bin_edges(4, 8)
    assert lo == pytest.approx(-math.pi / 8) and hi == pytest.approx(math.pi / 8)
    for theta in np.linspace(-3.1, 3.1, 50):
        b = orientation_bin(theta, 6)
        lo, hi = bin_edges(b, 6)
        width = (hi - lo) % (2 * math.pi)
        assert (theta - lo) % (2 * math.pi) <= width + 1e-12


def test_orientation_needs_four_bins():
    with pytest.raises(ConfigError):
        error_vs_orientation(config=_cfg(scenario="camera", n=5), bins=3)


def test_orientation_empty_bins_reported(tmp_path):
    table = error_vs_orientation(config=_cfg(scenario="camera", n=3), bins=16, out_dir=tmp_path)
    assert len(table.rows) == 2 * 16
    empty = [r for r in table.rows if r.n == 0]
    assert empty and all(r.mean is None for r in empty)
    lines = (tmp_path / "orientation.csv").read_text().splitlines()
    assert lines[0] == "condition,bin,theta_lo_rad,theta_hi_rad,n,ex_m,ey_m,etheta_rad,seed"
    blank = [line for line in lines[1:] if ",0,,," in line]
    assert len(blank) == len(empty)


def test_uniform_oracle_flat_profile():
    table = error_vs_orientation(config=_cfg(scenario="camera", n=2000, oracle={"sigma_pos": 0.01, "sigma_theta": 0.1}), bins=8)
    prof = [e.etheta for e in table.profile("one image")]
    overall = np.mean(prof)
    assert all(abs(p - overall) < 0.2 * overall for p in prof)


def test_amplified_oracle_peaks_at_pi_and_views_flatten():
    table = error_vs_orientation(config=_cfg(scenario="camera", n=2000, oracle=AMPLIFIED), bins=8)
    single = [e.etheta for e in table.profile("one image")]
    multi = [e.etheta for e in table.profile("three images")]
    assert int(np.argmax(single)) == table.bin_of(math.pi)
    assert max(multi) / min(multi) < max(single) / min(single)


# --- CLI ------------------------------------------------------------------------------


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_cli_scenario_with_oracle(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", {"oracle": "perfect", "n": 3})
    assert main(["scenario", "--config", cfg, "--scenario", "camera", "--out", str(tmp_path / "o")]) == 0
    rows = read_report(tmp_path / "o" / "report.csv")
    assert [r["condition"] for r in rows] == ["one image", "three images"]
    assert all(r["n"] == "3" for r in rows)


def test_cli_flags_override_config(tmp_path):
    cfg = _write(tmp_path / "c.json", {"oracle": NOISY, "n": 50, "seed": 1})
    assert main(["scenario", "--config", cfg, "--n", "2", "--seed", "9", "--out", str(tmp_path / "o")]) == 0
    rows = read_report(tmp_path / "o" / "report.csv")
    assert rows[0]["n"] == "2" and rows[0]["seed"] == "9"


def test_cli_usage_errors(tmp_path, capsys):
    assert main([]) == 1
    assert main(["scenario", "--n", "many"]) == 1
    assert main(["scenario", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 1
    bad = _write(tmp_path / "bad.json", {"oracle": "perfect", "bogus": 1})
    assert main(["scenario", "--config", bad, "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err.strip().splitlines()[-1]
    doc = json.loads(err)
    assert doc["exit_code"] == 1 and "bogus" in doc["message"]


def test_cli_runtime_error_on_missing_checkpoint(tmp_path, capsys):
    code = main(["scenario", "--model", str(tmp_path / "missing.ckpt"), "--n", "1", "--out", str(tmp_path)])
    assert code == 2
    doc = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert doc == {"error": "HarnessError", "message": doc["message"], "exit_code": 2}
    assert "missing.ckpt" in doc["message"]


def test_cli_generate_train_evaluate_itdr(tmp_path, capsys):
    d = tmp_path / "data"
    assert main(["generate", "--scenario", "reference", "--count", "6", "--size", "16", "16", "--seed", "2", "--out", str(d)]) == 0
    # refusing to overwrite is a runtime failure
    assert main(["generate", "--scenario", "reference", "--count", "6", "--size", "16", "16", "--out", str(d)]) == 2
    cfg = _write(tmp_path / "t.json", {"epochs": 1, "batch_size": 3, "channels": [4, 4, 4], "hidden": 16})
    assert main(["train", "--config", cfg, "--dataset", str(d), "--out", str(tmp_path / "m")]) == 0
    ckpt = tmp_path / "m" / "model.ckpt"
    assert ckpt.exists() and (tmp_path / "m" / "train_log.csv").exists()
    assert main(["evaluate", "--dataset", str(d), "--model", str(ckpt), "--out", str(tmp_path / "e")]) == 0
    lines = (tmp_path / "e" / "errors.csv").read_text().splitlines()
    assert len(lines) == 1 + 6 + 1 and lines[-1].startswith("mean,")
    icfg = _write(tmp_path / "i.json", {"image_size": [16, 16]})
    argv = ["itdr", "--config", icfg, "--model", str(ckpt), "--condition", "diagonal", "--scene-seed", "4", "--out", str(tmp_path / "i")]
    assert main(argv) == 0
    trace = json.loads((tmp_path / "i" / "trace.json").read_text())
    assert len(trace["captures"]) == 2


def test_cli_select_and_orientation(tmp_path):
    cfg = _write(tmp_path / "c.json", {"oracle": NOISY})
    assert main(["select", "--config", cfg, "--n", "5", "--subset-size", "2", "--out", str(tmp_path / "s")]) == 0
    lines = (tmp_path / "s" / "selection.csv").read_text().splitlines()
    assert lines[0] == "subset,ex_m,ey_m,etheta_rad,scalar,rank" and len(lines) == 7
    assert main(["select", "--config", cfg, "--n", "5", "--method", "greedy", "--subset-size", "2", "--out", str(tmp_path / "g")]) == 0
    assert main(["orientation", "--config", cfg, "--n", "10", "--bins", "4", "--out", str(tmp_path / "o")]) == 0
    assert len((tmp_path / "o" / "orientation.csv").read_text().splitlines()) == 1 + 2 * 4
