"""Synthetic patient environment: anatomies, kinematics, rendering, views."""

from __future__ import annotations

import numpy as np

from .anatomy import (
    Landmark,
    PatientAnatomy,
    TEMPLATE_PATIENT_ID,
    UnknownTemplateError,
    generate_patient,
    template_anatomy,
)
from .centerline import Centerline
from .config import (
    DOF_NAMES,
    EnvConfig,
    EnvConfigError,
    ImageConfig,
    PerturbRanges,
    ProbeConfig,
    VariationConfig,
    load_env_config,
)
from .kinematics import (
    Pose5,
    ProbeFrame,
    apply_action,
    frame_for,
    make_pose,
    perturb_pose,
    wrap_plane,
    wrap_roll,
)
from .metrics import pose_errors
from .render import render_observation, save_pgm, sector_mask
from .views import (
    MissingStructureError,
    UnknownViewError,
    plane_distances,
    sample_view_pose,
    view_landmark_positions,
)


class VirtualPatientEnv:
    """Convenience wrapper caching anatomies and solved view poses.

    Anatomies and poses are immutable; rendering is pure, so one instance
    can serve many readers. Only the caches mutate, guarded by the GIL's
    dict atomicity (worst case a value is computed twice, identically).
    """

    def __init__(self, config: EnvConfig | None = None, template_id: int = 0,
                 variation_scale: float | None = None,
                 with_structures: frozenset | set = frozenset()):
        self.config = config if config is not None else load_env_config()
        self.template_id = template_id
        self.variation_scale = variation_scale
        self.with_structures = frozenset(with_structures)
        self._anatomies: dict[int, PatientAnatomy] = {}
        self._view_poses: dict[tuple[int, str], Pose5] = {}

    def anatomy(self, patient_id: int) -> PatientAnatomy:
        cached = self._anatomies.get(patient_id)
        if cached is None:
            if patient_id == TEMPLATE_PATIENT_ID:
                cached = template_anatomy(self.config, self.template_id,
                                          self.with_structures)
            else:
                cached = generate_patient(patient_id, self.template_id, self.config,
                                          self.variation_scale, self.with_structures)
            self._anatomies[patient_id] = cached
        return cached

    def template(self) -> PatientAnatomy:
        return self.anatomy(TEMPLATE_PATIENT_ID)

    def view_pose(self, patient_id: int, view_id: str) -> Pose5:
        key = (patient_id, view_id)
        cached = self._view_poses.get(key)
        if cached is None:
            cached = sample_view_pose(self.anatomy(patient_id), view_id, self.config)
            self._view_poses[key] = cached
        return cached

    def observe(self, patient_id: int, pose: Pose5) -> np.ndarray:
        return render_observation(self.anatomy(patient_id), pose, self.config)

    def step(self, patient_id: int, pose: Pose5, action) -> Pose5:
        return apply_action(pose, action, self.anatomy(patient_id).length,
                            self.config.probe)

    def perturb(self, patient_id: int, pose: Pose5, ranges,
                rng: np.random.Generator) -> Pose5:
        return perturb_pose(pose, ranges, rng, self.anatomy(patient_id).length,
                            self.config.probe)

    def errors(self, patient_id: int, pose_a: Pose5, pose_b: Pose5) -> tuple[float, float]:
        return pose_errors(pose_a, pose_b, self.anatomy(patient_id), self.config)

    def obs_dim(self) -> int:
        return self.config.image.width * self.config.image.height


__all__ = [
    "Centerline",
    "DOF_NAMES",
    "EnvConfig",
    "EnvConfigError",
    "ImageConfig",
    "Landmark",
    "MissingStructureError",
    "PatientAnatomy",
    "PerturbRanges",
    "Pose5",
    "ProbeConfig",
    "ProbeFrame",
    "TEMPLATE_PATIENT_ID",
    "UnknownTemplateError",
    "UnknownViewError",
    "VariationConfig",
    "VirtualPatientEnv",
    "apply_action",
    "frame_for",
    "generate_patient",
    "load_env_config",
    "make_pose",
    "perturb_pose",
    "plane_distances",
    "pose_errors",
    "render_observation",
    "sample_view_pose",
    "save_pgm",
    "sector_mask",
    "template_anatomy",
    "view_landmark_positions",
    "wrap_plane",
    "wrap_roll",
]
