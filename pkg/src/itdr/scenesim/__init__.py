"""Synthetic tabletop scenes, domain-randomized rendering and datasets."""

from .dataset import (
    Dataset,
    DatasetConfig,
    DatasetError,
    DatasetExistsError,
    DatasetIOError,
    ManifestRow,
    generate_dataset,
    load_dataset,
    read_ppm,
    write_ppm,
)
from .randomization import RandomizationConfig, RandomizationConfigError, RandomizationParams, sample_randomization
from .render import Image, render, render_ids, silhouette_area
from .sampling import apply_scene_transform, sample_placement, sample_scene, sample_training_scene, target_visibility
from .scenarios import home_candidate, scenario_spec
from .types import (
    ENTITIES,
    CameraPose,
    DegenerateCameraError,
    OutOfRegionError,
    Scene,
    SceneError,
    SceneObject,
    ScenarioSpec,
    Shape,
    view_relative_heading,
)
