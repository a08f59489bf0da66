"""Environment configuration: probe geometry, imaging, templates, views.

Everything is loaded from a YAML file (see ``data/default_env.yaml``). Key
set, all units mm/deg:

    probe:        tip_length_mm, flex_limit_deg, step_sizes (5 per-DOF)
    image:        width, height, sector_fov_deg, slab_half_mm,
                  lateral_extent_mm, depth_max_mm, min_sigma_mm
    perturbation: start (5), goal (5)
    variation:    scale_mm (nominal landmark jitter sigma), affine_scale,
                  affine_rot_deg, affine_trans_mm, centerline_mm,
                  bounding_radius_mm
    landmark_classes: list of class labels
    templates:    map template_id -> {centerline: 4x3 coeffs,
                  landmarks: [{class, pos, intensity, radius, group}],
                  views: {view_id: {dof: 5, landmarks: 3 template indices,
                  requires: [group, ...]}}}
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

DOF_NAMES = ("d", "roll", "plane", "flex_lr", "flex_ar")


class EnvConfigError(ValueError):
    """Malformed or inconsistent environment configuration."""


@dataclass(frozen=True)
class ProbeConfig:
    tip_length_mm: float = 20.0
    flex_limit_deg: float = 45.0
    step_sizes: tuple = (5.0, 10.0, 10.0, 5.0, 5.0)


@dataclass(frozen=True)
class ImageConfig:
    width: int = 32
    height: int = 32
    sector_fov_deg: float = 90.0
    slab_half_mm: float = 4.0
    lateral_extent_mm: float = 60.0
    depth_max_mm: float = 120.0
    min_sigma_mm: float = 0.5


@dataclass(frozen=True)
class PerturbRanges:
    """Symmetric per-DOF offset ranges, start and goal draws."""

    start: tuple = (20.0, 30.0, 30.0, 15.0, 15.0)
    goal: tuple = (20.0, 30.0, 30.0, 15.0, 15.0)

    def __post_init__(self):
        for label, ranges in (("start", self.start), ("goal", self.goal)):
            if len(ranges) != 5 or any(r < 0 for r in ranges):
                raise EnvConfigError(f"perturbation.{label} must be 5 non-negative values")


@dataclass(frozen=True)
class VariationConfig:
    scale_mm: float = 1.5
    affine_scale: float = 0.10
    affine_rot_deg: float = 10.0
    affine_trans_mm: float = 10.0
    centerline_mm: float = 2.0
    bounding_radius_mm: float = 110.0


@dataclass(frozen=True)
class LandmarkSpec:
    cls: str
    pos: tuple
    intensity: float
    radius: float
    group: str = "core"


@dataclass(frozen=True)
class ViewSpec:
    dof: tuple
    landmarks: tuple
    requires: tuple = ()


@dataclass(frozen=True)
class TemplateSpec:
    centerline_coeffs: tuple
    landmarks: tuple
    views: dict

    def optional_groups(self) -> frozenset:
        return frozenset(l.group for l in self.landmarks if l.group != "core")


@dataclass(frozen=True)
class EnvConfig:
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    image: ImageConfig = field(default_factory=ImageConfig)
    perturbation: PerturbRanges = field(default_factory=PerturbRanges)
    variation: VariationConfig = field(default_factory=VariationConfig)
    landmark_classes: tuple = ()
    templates: dict = field(default_factory=dict)


def _landmark(entry) -> LandmarkSpec:
    return LandmarkSpec(
        cls=str(entry["class"]),
        pos=tuple(float(v) for v in entry["pos"]),
        intensity=float(entry["intensity"]),
        radius=float(entry["radius"]),
        group=str(entry.get("group", "core")),
    )


def _view(entry) -> ViewSpec:
    dof = tuple(float(v) for v in entry["dof"])
    marks = tuple(int(i) for i in entry["landmarks"])
    if len(dof) != 5 or len(marks) != 3:
        raise EnvConfigError("view needs 5 DOF values and 3 landmark indices")
    return ViewSpec(dof=dof, landmarks=marks, requires=tuple(entry.get("requires", ())))


def _template(entry, classes) -> TemplateSpec:
    landmarks = tuple(_landmark(l) for l in entry["landmarks"])
    if len(landmarks) < 8:
        raise EnvConfigError("template needs at least 8 landmarks")
    for l in landmarks:
        if classes and l.cls not in classes:
            raise EnvConfigError(f"unknown landmark class {l.cls!r}")
    views = {str(k): _view(v) for k, v in entry["views"].items()}
    for vid, view in views.items():
        if any(i < 0 or i >= len(landmarks) for i in view.landmarks):
            raise EnvConfigError(f"view {vid}: landmark index out of range")
    return TemplateSpec(
        centerline_coeffs=tuple(tuple(float(x) for x in row) for row in entry["centerline"]),
        landmarks=landmarks,
        views=views,
    )


def load_env_config(path: str | Path | None = None) -> EnvConfig:
    """Load the environment config, defaulting to the packaged YAML."""
    if path is None:
        text = resources.files("probenav.data").joinpath("default_env.yaml").read_text()
    else:
        text = Path(path).read_text()
    raw = yaml.safe_load(text)
    try:
        classes = tuple(raw.get("landmark_classes", ()))
        templates = {int(k): _template(v, classes) for k, v in raw["templates"].items()}
        return EnvConfig(
            probe=ProbeConfig(**{k: tuple(v) if k == "step_sizes" else v
                                 for k, v in raw.get("probe", {}).items()}),
            image=ImageConfig(**raw.get("image", {})),
            perturbation=PerturbRanges(**{k: tuple(v) for k, v in raw.get("perturbation", {}).items()}),
            variation=VariationConfig(**raw.get("variation", {})),
            landmark_classes=classes,
            templates=templates,
        )
    except (KeyError, TypeError) as exc:
        raise EnvConfigError(f"bad environment config: {exc}") from exc


def as_dof_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (5,):
        raise EnvConfigError(f"expected 5 DOF values, got shape {arr.shape}")
    return arr
