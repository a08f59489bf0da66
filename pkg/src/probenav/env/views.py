"""Per-patient standard-view poses from landmark geometry.

Each view has a canonical DOF vector (exact for the template anatomy, whose
defining landmarks sit on the canonical imaging plane by construction) and
three defining landmarks. For a generated patient the canonical pose is
refined by a deterministic bounded least-squares solve that drives the
landmarks' signed plane distances to zero, with a weak pull toward the
canonical DOF to keep the solution unique.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import least_squares

from .anatomy import PatientAnatomy
from .config import EnvConfig, EnvConfigError
from .geometry import quat_to_matrix
from .kinematics import Pose5, frame_for, make_pose


class UnknownViewError(EnvConfigError):
    pass


class MissingStructureError(EnvConfigError):
    """The view needs an optional landmark group this anatomy lacks."""


_REG_WEIGHT = 0.03
_ANCHOR_WEIGHT = 0.02
_DOF_SCALE = np.array([20.0, 30.0, 30.0, 15.0, 15.0])  # residual normalization only


def view_landmark_positions(anatomy: PatientAnatomy, view_id: str,
                            config: EnvConfig) -> np.ndarray:
    view = _get_view(anatomy, view_id, config)
    return np.stack([anatomy.landmark_by_template_index(i).position for i in view.landmarks])


def plane_distances(pose: Pose5, points: np.ndarray, anatomy: PatientAnatomy,
                    config: EnvConfig) -> np.ndarray:
    frame = frame_for(pose, anatomy.centerline, config.probe)
    normal = quat_to_matrix(frame.quat)[:, 1]
    return (points - frame.origin) @ normal


def _frame_coords(pose: Pose5, points: np.ndarray, anatomy: PatientAnatomy,
                  config: EnvConfig) -> tuple[np.ndarray, np.ndarray]:
    """(plane distances, in-plane (depth, lateral) coordinates) of the points."""
    frame = frame_for(pose, anatomy.centerline, config.probe)
    rot = quat_to_matrix(frame.quat)
    rel = points - frame.origin
    return rel @ rot[:, 1], np.column_stack([rel @ rot[:, 0], rel @ rot[:, 2]])


def _get_view(anatomy: PatientAnatomy, view_id: str, config: EnvConfig):
    template = config.templates[anatomy.template_id]
    view = template.views.get(view_id)
    if view is None:
        raise UnknownViewError(f"unknown view {view_id!r}")
    missing = set(view.requires) - set(anatomy.structures)
    if missing:
        raise MissingStructureError(
            f"view {view_id!r} requires structures {sorted(missing)} "
            f"absent from patient {anatomy.patient_id}")
    return view


def sample_view_pose(anatomy: PatientAnatomy, view_id: str, config: EnvConfig) -> Pose5:
    """The patient's pose for a standard view; canonical DOF for the template."""
    view = _get_view(anatomy, view_id, config)
    points = np.stack([anatomy.landmark_by_template_index(i).position
                       for i in view.landmarks])
    canonical = np.asarray(view.dof, dtype=np.float64)
    length = anatomy.length
    lim = config.probe.flex_limit_deg

    def raw_pose(x):
        # solver works in unclamped coordinates; plane distances are
        # invariant under the 180-degree plane wrap
        return Pose5(d=float(np.clip(x[0], 0.0, length)), roll=float(x[1]),
                     plane=float(x[2]), flex_lr=float(x[3]), flex_ar=float(x[4]))

    start_dists, anchor_coords = _frame_coords(raw_pose(canonical), points, anatomy, config)
    if np.max(np.abs(start_dists)) < 1e-9:
        return make_pose(canonical, length, config.probe)

    def residuals(x):
        dists, coords = _frame_coords(raw_pose(x), points, anatomy, config)
        # weak anchors: keep the landmarks near their canonical-pose image
        # positions so the solve cannot drift to a far-away plane fit
        anchor = _ANCHOR_WEIGHT * (coords - anchor_coords).ravel()
        reg = _REG_WEIGHT * (x - canonical) / _DOF_SCALE
        return np.concatenate([dists, anchor, reg])

    lower = np.array([0.0, canonical[1] - 90.0, canonical[2] - 90.0, -lim, -lim])
    upper = np.array([length, canonical[1] + 90.0, canonical[2] + 90.0, lim, lim])

    # deterministic multistart: canonical first, then a small offset grid to
    # escape the occasional local minimum of the plane-fit objective
    starts = [np.zeros(5)]
    for dd in (-10.0, 10.0):
        starts.append(np.array([dd, 0.0, 0.0, 0.0, 0.0]))
    for fl in (-15.0, 15.0):
        for fa in (-15.0, 15.0):
            starts.append(np.array([0.0, 0.0, 0.0, fl, fa]))

    best_x, best_dist = None, np.inf
    for offset in starts:
        x0 = np.clip(canonical + offset, lower, upper)
        result = least_squares(residuals, x0, bounds=(lower, upper),
                               xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=400)
        dist = float(np.max(np.abs(plane_distances(raw_pose(result.x), points,
                                                   anatomy, config))))
        if dist < best_dist:
            best_x, best_dist = result.x.copy(), dist
        if dist < 0.25 * config.image.slab_half_mm:
            break

    pose = make_pose(best_x, length, config.probe)
    final = plane_distances(pose, points, anatomy, config)
    if np.max(np.abs(final)) > config.image.slab_half_mm:
        raise EnvConfigError(
            f"view {view_id!r} unreachable for patient {anatomy.patient_id}: "
            f"landmark plane distance {np.max(np.abs(final)):.2f} mm exceeds the slab")
    return pose
