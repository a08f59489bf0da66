"""Seeded synthetic patient anatomies derived from a template.

A patient is the template transformed by a seeded random affine (applied to
landmarks and centerline alike, so views stay reachable), a smooth seeded
centerline displacement, and per-landmark Gaussian jitter. All perturbation
magnitudes scale linearly with ``variation_scale``: the configured affine /
centerline ranges apply at the nominal scale (``variation.scale_mm``) and a
scale of zero reproduces the template bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .centerline import Centerline
from .config import EnvConfig, EnvConfigError, TemplateSpec

_SEED_DOMAIN = 0x50524E41  # package-fixed entropy prefix for patient streams

TEMPLATE_PATIENT_ID = -1


class UnknownTemplateError(EnvConfigError):
    pass


@dataclass(frozen=True)
class Landmark:
    template_index: int
    cls: str
    position: np.ndarray
    intensity: float
    radius: float
    group: str


@dataclass(frozen=True)
class PatientAnatomy:
    patient_id: int
    template_id: int
    centerline: Centerline
    landmarks: tuple
    structures: frozenset

    def __post_init__(self):
        # rendering-hot-path cache; the dataclass is otherwise immutable
        object.__setattr__(self, "_positions", np.stack([l.position for l in self.landmarks]))

    @property
    def length(self) -> float:
        return self.centerline.length

    def landmark_by_template_index(self, idx: int) -> Landmark:
        for l in self.landmarks:
            if l.template_index == idx:
                return l
        raise KeyError(f"template landmark {idx} not present in this anatomy")

    def positions(self) -> np.ndarray:
        return self._positions


def _rotation_matrix(angles_rad: np.ndarray) -> np.ndarray:
    cx, cy, cz = np.cos(angles_rad)
    sx, sy, sz = np.sin(angles_rad)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def generate_patient(patient_id: int, template_id: int, config: EnvConfig,
                     variation_scale: float | None = None,
                     with_structures: frozenset | set = frozenset()) -> PatientAnatomy:
    """Deterministically build one patient from (patient_id, template_id).

    ``with_structures`` selects which optional landmark groups are present;
    jitter is drawn for the full template so core landmarks do not depend on
    that choice.
    """
    template = config.templates.get(template_id)
    if template is None:
        raise UnknownTemplateError(f"unknown template id {template_id}")
    var = config.variation
    vs = var.scale_mm if variation_scale is None else float(variation_scale)
    if vs < 0:
        raise EnvConfigError("variation scale must be >= 0")

    base_positions = np.array([l.pos for l in template.landmarks])
    centerline = Centerline(np.asarray(template.centerline_coeffs))

    if vs == 0.0:
        positions = base_positions
    else:
        rng = np.random.default_rng(
            np.random.SeedSequence([_SEED_DOMAIN, template_id, patient_id]))
        nominal = var.scale_mm if var.scale_mm > 0 else 1.0
        m = vs / nominal  # configured affine/centerline ranges hold at nominal scale

        scale = 1.0 + rng.uniform(-var.affine_scale, var.affine_scale) * m
        rot = _rotation_matrix(
            np.radians(rng.uniform(-var.affine_rot_deg, var.affine_rot_deg, 3) * m))
        trans = rng.uniform(-var.affine_trans_mm, var.affine_trans_mm, 3) * m
        delta_coeffs = np.zeros((4, 3))
        delta_coeffs[1:] = rng.normal(0.0, var.centerline_mm * m / 3.0, (3, 3))
        jitter = rng.normal(0.0, vs, (len(template.landmarks), 3))

        centroid = base_positions.mean(axis=0)
        linear = scale * rot
        positions = (base_positions - centroid) @ linear.T + centroid + trans + jitter
        centerline = centerline.transformed(linear, centroid - linear @ centroid + trans)
        centerline = centerline.displaced(delta_coeffs)

    requested = frozenset(with_structures)
    available = template.optional_groups()
    present = requested & available
    landmarks = tuple(
        Landmark(template_index=i, cls=l.cls, position=positions[i],
                 intensity=l.intensity, radius=l.radius, group=l.group)
        for i, l in enumerate(template.landmarks)
        if l.group == "core" or l.group in present
    )
    anatomy = PatientAnatomy(patient_id=patient_id, template_id=template_id,
                             centerline=centerline, landmarks=landmarks,
                             structures=present)
    _validate(anatomy, config)
    return anatomy


def template_anatomy(config: EnvConfig, template_id: int = 0,
                     with_structures: frozenset | set = frozenset()) -> PatientAnatomy:
    """The unperturbed template itself, used for template-goal evaluation."""
    return generate_patient(TEMPLATE_PATIENT_ID, template_id, config,
                            variation_scale=0.0, with_structures=with_structures)


def _validate(anatomy: PatientAnatomy, config: EnvConfig) -> None:
    if len(anatomy.landmarks) < 8:
        raise EnvConfigError("anatomy must keep at least 8 landmarks")
    samples = anatomy.centerline._eval(np.linspace(0, 1, 64))
    for l in anatomy.landmarks:
        dist = np.min(np.linalg.norm(samples - l.position, axis=1))
        if dist > config.variation.bounding_radius_mm:
            raise EnvConfigError(
                f"landmark {l.template_index} is {dist:.1f} mm from the centerline "
                f"(limit {config.variation.bounding_radius_mm} mm)")
