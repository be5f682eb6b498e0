import math
from dataclasses import replace

import numpy as np
import pytest

from itdr.geometry import IDENTITY, Pose2, RigidTransform2, apply, inverse, frame_change, relative_pose
from itdr.scenesim import (
    CameraPose,
    DatasetConfig,
    DatasetExistsError,
    DegenerateCameraError,
    Image,
    OutOfRegionError,
    RandomizationConfig,
    RandomizationConfigError,
    SceneError,
    SceneObject,
    apply_scene_transform,
    generate_dataset,
    load_dataset,
    read_ppm,
    render,
    sample_placement,
    sample_randomization,
    sample_scene,
    scenario_spec,
    silhouette_area,
    write_ppm,
)
from itdr.scenesim.dataset import MANIFEST_HEADER, format_manifest, parse_manifest
from itdr.scenesim.randomization import SLOTS
from itdr.scenesim.scenarios import CAMERA_PEG_SCALE, PEG


@pytest.fixture(scope="module")
def ref_scene():
    return sample_scene("reference", 5)


# --- sampling -------------------------------------------------------------------------


@pytest.mark.parametrize("tag", ["reference", "gripper", "camera"])
def test_sample_scene_deterministic(tag):
    assert sample_scene(tag, 17) == sample_scene(tag, 17)
    assert sample_scene(tag, 17) != sample_scene(tag, 18)


def test_sample_scene_unknown_tag():
    with pytest.raises(SceneError):
        sample_scene("kitchen", 0)


@pytest.mark.parametrize("tag", ["reference", "gripper", "camera"])
def test_placements_inside_table(tag):
    for seed in range(10_000 // 3):
        s = sample_placement(tag, seed)
        assert s.inside_table(s.target) and s.inside_table(s.reference)


def test_placement_matches_full_sample():
    for seed in range(20):
        full = sample_scene("reference", seed)
        core = sample_placement("reference", seed)
        assert (full.target, full.reference) == (core.target, core.reference)


def test_camera_scenario_peg_is_scaled():
    s = sample_scene("camera", 3)
    assert CAMERA_PEG_SCALE == pytest.approx(0.343)
    assert s.target.shape.dims == pytest.approx(tuple(d * 0.343 for d in PEG.dims))


def test_distractors_bounded_and_inside_table():
    for seed in range(40):
        s = sample_scene("reference", seed)
        assert 0 <= len(s.distractors) <= 3
        for d in s.distractors:
            assert s.inside_table(d)


def test_gripper_label_in_offset_region():
    spec = scenario_spec("gripper")
    x0, x1, _, _ = spec.target_region
    for seed in range(200):
        lab = sample_placement(spec, seed).label
        assert x0 <= lab.x <= x1
        assert lab.mask == (True, False, True)


# --- randomization --------------------------------------------------------------------


def test_randomization_deterministic():
    assert sample_randomization(4) == sample_randomization(4)
    assert sample_randomization(4) != sample_randomization(5)


def test_randomization_fixed_ranges():
    cfg = RandomizationConfig.fixed(ambient=0.7, light_intensity=0.2, noise_amplitude=0.1, eye_jitter=0.0, fov_jitter=0.0)
    p = sample_randomization(9, cfg)
    assert p.ambient == 0.7 and p.light_intensity == 0.2
    assert set(p.noise_amplitudes) == {0.1}
    assert p.eye_offset == (0.0, 0.0, 0.0) and p.fov_scale == 1.0


def test_randomization_bounds_over_many_draws():
    cfg = RandomizationConfig()
    draws = [sample_randomization(i, cfg) for i in range(10_000)]
    colors = np.array([d.colors for d in draws])
    assert colors.min() >= 0 and colors.max() <= 1
    amps = np.array([d.noise_amplitudes for d in draws])
    assert amps.min() >= 0 and amps.max() <= 0.5
    amb = np.array([d.ambient for d in draws])
    assert amb.min() >= 0.3 and amb.max() <= 1.0
    inten = np.array([d.light_intensity for d in draws])
    assert inten.min() >= 0 and inten.max() <= 0.7
    light = np.array([d.light_direction for d in draws])
    assert np.allclose(np.linalg.norm(light, axis=1), 1.0)
    eye = np.linalg.norm(np.array([d.eye_offset for d in draws]), axis=1)
    assert eye.max() <= 0.05 + 1e-12
    fov = np.array([d.fov_scale for d in draws])
    assert fov.min() >= 0.9 and fov.max() <= 1.1


@pytest.mark.parametrize(
    "bad",
    [{"ambient": (0.9, 0.5)}, {"ambient": (0.1, 0.5)}, {"noise_amplitude": (0.0, 0.8)}, {"eye_jitter": (0.0, 0.2)}],
)
def test_randomization_invalid_config(bad):
    with pytest.raises(RandomizationConfigError):
        sample_randomization(0, RandomizationConfig(**bad))


def test_randomization_config_round_trip():
    cfg = RandomizationConfig(ambient=(0.5, 0.6))
    assert RandomizationConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(RandomizationConfigError):
        RandomizationConfig.from_dict({"colour": [0, 1]})


# --- rendering --------------------------------------------------------------------------


def test_render_deterministic(ref_scene):
    p = sample_randomization(1)
    a, b = render(ref_scene, p), render(ref_scene, p)
    assert a == b and a.digest() == b.digest()
    assert a.pixels.shape == (64, 64, 3) and a.pixels.dtype == np.uint8
    assert len(a.tobytes()) == 3 * 64 * 64


def test_render_size_configurable(ref_scene):
    img = render(ref_scene, sample_randomization(1), (32, 16))
    assert (img.width, img.height) == (32, 16)


def test_render_label_sensitive(ref_scene):
    p = sample_randomization(2)
    moved = replace(ref_scene, target=SceneObject(ref_scene.target.shape, Pose2(0.1, -0.05, 1.0)))
    assert render(ref_scene, p) != render(moved, p)


def test_render_ambient_monotone(ref_scene):
    base = dict(noise_amplitude=0.0, light_intensity=0.0, eye_jitter=0.0, fov_jitter=0.0)
    bright = render(ref_scene, sample_randomization(3, RandomizationConfig.fixed(ambient=1.0, **base)))
    dim = render(ref_scene, sample_randomization(3, RandomizationConfig.fixed(ambient=0.3, **base)))
    assert bright.pixels.mean() > dim.pixels.mean()


def test_render_degenerate_camera(ref_scene):
    bad = replace(ref_scene, camera=CameraPose((0, 0, 1), (0, 0, 1)))
    with pytest.raises(DegenerateCameraError):
        render(bad, sample_randomization(0))


def test_image_validation():
    with pytest.raises(ValueError):
        Image(np.zeros((4, 4), dtype=np.uint8))
    img = Image(np.zeros((4, 5, 3), dtype=np.uint8))
    assert (img.width, img.height) == (5, 4)
    with pytest.raises(ValueError):
        img.pixels[0, 0, 0] = 1


def test_peg_pointing_away_is_more_occluded():
    # camera near table level on +x: heading pi points straight away from it
    spec = scenario_spec("camera")
    base = sample_placement(spec, 0)
    areas = {}
    for th in (math.pi, math.pi / 2):
        tgt = SceneObject(base.target.shape, Pose2(0.0, 0.0, th))
        areas[th] = silhouette_area(replace(base, target=tgt), size=(128, 128))
    assert 0 < areas[math.pi] < areas[math.pi / 2]


# --- scene transforms -----------------------------------------------------------------


def test_identity_transform_keeps_scene(ref_scene):
    for entity in ("reference", "target", "camera_orbit"):
        moved = apply_scene_transform(ref_scene, IDENTITY, entity)
        assert moved.label == ref_scene.label


def test_camera_orbit_keeps_label():
    s = sample_scene("camera", 2)
    for deg in (30, 120, -120, 175):
        moved = apply_scene_transform(s, RigidTransform2.rotation_about(math.radians(deg)), "camera_orbit")
        assert moved.label == s.label
        assert moved.camera != s.camera


def test_gripper_move_keeps_label():
    s = sample_scene("gripper", 2)
    for t, entity in scenario_spec("gripper").candidates.values():
        moved = apply_scene_transform(s, t, entity)
        lab, ref = moved.label, s.label
        assert lab.x == pytest.approx(ref.x, abs=1e-12) and lab.theta == pytest.approx(ref.theta, abs=1e-12)


def test_reference_corner_move_world_oracle(ref_scene):
    spec = scenario_spec("reference")
    t, entity = spec.candidates["c2"]
    moved = apply_scene_transform(ref_scene, t, entity)
    # recompute from world coordinates
    ref_world = moved.reference.pose
    assert (ref_world.x, ref_world.y) == pytest.approx((0.38, 0.38))
    world = relative_pose(ref_world, ref_scene.target.pose)
    predicted = apply(frame_change(t, ref_scene.reference.pose), ref_scene.label)
    for a, b in ((world, moved.label), (predicted, moved.label)):
        assert (a.x, a.y, a.theta) == pytest.approx((b.x, b.y, b.theta), abs=1e-12)


def test_reference_move_round_trip_through_inverse_frame_change():
    rng = np.random.default_rng(0)
    spec = scenario_spec("reference")
    for seed in range(200):
        s = sample_placement(spec, seed)
        name = list(spec.candidates)[int(rng.integers(4))]
        t, e = spec.candidates[name]
        moved = apply_scene_transform(s, t, e)
        back = apply(inverse(frame_change(t, s.reference.pose)), moved.label)
        assert abs(back.x - s.label.x) < 1e-9 and abs(back.y - s.label.y) < 1e-9
        assert abs(math.remainder(back.theta - s.label.theta, 2 * math.pi)) < 1e-9


def test_out_of_region_errors(ref_scene):
    with pytest.raises(OutOfRegionError):
        apply_scene_transform(ref_scene, RigidTransform2.translation(2.0, 0), "reference")
    with pytest.raises(OutOfRegionError):
        apply_scene_transform(ref_scene, RigidTransform2.translation(0, 1.5), "target")
    with pytest.raises(OutOfRegionError):
        # orbit to straight below the table center: the camera looks away
        cam = replace(ref_scene, camera=CameraPose((0.0, -1.0, 1.25), (0.0, -2.0, 1.25)))
        apply_scene_transform(cam, IDENTITY, "camera_orbit")
    with pytest.raises(SceneError):
        apply_scene_transform(ref_scene, IDENTITY, "table")


def test_reference_collision_rejected(ref_scene):
    tgt = ref_scene.target.pose
    ref = ref_scene.reference.pose
    onto = RigidTransform2.translation(tgt.x - ref.x, tgt.y - ref.y)
    with pytest.raises(OutOfRegionError):
        apply_scene_transform(ref_scene, onto, "reference")


# --- datasets -------------------------------------------------------------------------


def test_ppm_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    img = Image(rng.integers(0, 256, (7, 5, 3), dtype=np.uint8))
    write_ppm(tmp_path / "a.ppm", img)
    assert read_ppm(tmp_path / "a.ppm") == img
    assert (tmp_path / "a.ppm").read_bytes().startswith(b"P6")


def test_dataset_single_item_round_trip(tmp_path):
    ds = generate_dataset(DatasetConfig("reference", 1, 3), tmp_path / "d")
    again = load_dataset(tmp_path / "d")
    assert len(again) == 1 and again.manifest == ds.manifest
    again.validate()
    text = (tmp_path / "d" / "manifest.csv").read_text()
    assert text.splitlines()[0] == ",".join(MANIFEST_HEADER)
    assert format_manifest(parse_manifest(text)) == text


def test_dataset_deterministic_and_refuses_overwrite(tmp_path):
    cfg = DatasetConfig("gripper", 4, 11, image_size=(32, 32))
    generate_dataset(cfg, tmp_path / "a")
    generate_dataset(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "manifest.csv").read_bytes() == (tmp_path / "b" / "manifest.csv").read_bytes()
    for i in range(4):
        name = f"images/{i:06d}.ppm"
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    with pytest.raises(DatasetExistsError):
        generate_dataset(cfg, tmp_path / "a")
    generate_dataset(replace(cfg, overwrite=True), tmp_path / "a")
    rows = load_dataset(tmp_path / "a").manifest
    assert all(r.pose.mask == (True, False, True) for r in rows)


def test_dataset_config_json(tmp_path):
    cfg = DatasetConfig("camera", 3, 2, image_size=(48, 48), randomization=RandomizationConfig(ambient=(0.5, 0.9)))
    p = tmp_path / "cfg.json"
    import json

    p.write_text(json.dumps(cfg.to_dict()))
    assert DatasetConfig.from_json(p) == cfg
    with pytest.raises(ValueError):
        DatasetConfig.from_dict({"scenario": "reference", "bogus": 1})


def test_dataset_missing_manifest(tmp_path):
    from itdr.scenesim import DatasetIOError

    with pytest.raises(DatasetIOError) as info:
        load_dataset(tmp_path / "nowhere")
    assert "nowhere" in str(info.value)


@pytest.mark.slow
def test_dataset_labels_uniform_chi_square(tmp_path):
    # raw placement distribution: reference at its home corner
    ds = generate_dataset(
        DatasetConfig("reference", 5000, 2024, image_size=(8, 8), capture_presets=False), tmp_path / "d"
    )
    spec = scenario_spec("reference")
    x0, x1, y0, y1 = spec.target_region
    hx, hy = spec.reference_home.x, spec.reference_home.y
    counts = np.zeros((4, 4))
    for p in ds.poses():
        i = min(int((p.x + hx - x0) / (x1 - x0) * 4), 3)
        j = min(int((p.y + hy - y0) / (y1 - y0) * 4), 3)
        counts[i, j] += 1
    expected = len(ds) / 16
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 < 30.578  # chi-square 0.99 quantile, 15 degrees of freedom
