"""5-DOF probe pose, frame mapping, stepping, and perturbation.

Pose conventions:
  d        arc length along the centerline, clamped to [0, L]
  roll     probe rotation about its own axis, wrapped to [-180, 180)
  plane    electronic scan-plane rotation, wrapped to [0, 180) (a plane and
           its half-turn image cut the same slice)
  flex_lr  left/right tip flexion, clamped to +-flex_limit
  flex_ar  ante/retro tip flexion, clamped to +-flex_limit

The flexible tip is modelled as a constant-curvature arc of fixed length:
both flexions combine into a single bend of angle beta = hypot(lr, ar)
toward the in-plane direction (lr, ar). The reported origin is the arc end
point; with zero flexion it coincides with centerline(d).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .centerline import Centerline
from .config import ProbeConfig, as_dof_array
from .geometry import quat_from_axis_angle, quat_mul, quat_normalize, quat_rotate


def wrap_roll(deg: float) -> float:
    return float((deg + 180.0) % 360.0 - 180.0)


def wrap_plane(deg: float) -> float:
    return float(deg % 180.0)


@dataclass(frozen=True)
class Pose5:
    d: float
    roll: float
    plane: float
    flex_lr: float
    flex_ar: float

    def as_array(self) -> np.ndarray:
        return np.array([self.d, self.roll, self.plane, self.flex_lr, self.flex_ar])


@dataclass(frozen=True)
class ProbeFrame:
    origin: np.ndarray
    quat: np.ndarray

    def __post_init__(self):
        if abs(np.linalg.norm(self.quat) - 1.0) > 1e-9:
            raise ValueError("probe frame quaternion must be unit norm")


def make_pose(dof, length: float, probe: ProbeConfig) -> Pose5:
    """Clamp/wrap raw DOF values into a valid pose."""
    arr = as_dof_array(dof)
    lim = probe.flex_limit_deg
    return Pose5(
        d=float(np.clip(arr[0], 0.0, length)),
        roll=wrap_roll(arr[1]),
        plane=wrap_plane(arr[2]),
        flex_lr=float(np.clip(arr[3], -lim, lim)),
        flex_ar=float(np.clip(arr[4], -lim, lim)),
    )


def frame_for(pose: Pose5, centerline: Centerline, probe: ProbeConfig) -> ProbeFrame:
    """Map a pose to its imaging frame (origin + orientation quaternion).

    Orientation composition: centerline tangent frame, roll about the probe
    axis, tip flexion, then the electronic plane rotation about the (bent)
    probe axis.
    """
    q = centerline.frame_quat_at(pose.d)
    q = quat_mul(q, quat_from_axis_angle([0.0, 0.0, 1.0], np.radians(pose.roll)))

    tip = probe.tip_length_mm
    bx = np.radians(pose.flex_lr)
    by = np.radians(pose.flex_ar)
    beta = float(np.hypot(bx, by))
    if beta > 1e-12:
        bend_dir = np.array([bx / beta, by / beta, 0.0])
        # chord of the constant-curvature arc, in pre-flex local coordinates
        along = tip * np.sin(beta) / beta
        lateral = tip * (1.0 - np.cos(beta)) / beta
        chord_local = along * np.array([0.0, 0.0, 1.0]) + lateral * bend_dir
        axis_local = np.array([-bend_dir[1], bend_dir[0], 0.0])
        q_flex = quat_from_axis_angle(axis_local, beta)
    else:
        chord_local = np.array([0.0, 0.0, tip])
        q_flex = np.array([1.0, 0.0, 0.0, 0.0])

    base = centerline.point_at(pose.d) - tip * quat_rotate(q, np.array([0.0, 0.0, 1.0]))
    origin = base + quat_rotate(q, chord_local)
    q = quat_mul(q, q_flex)
    q = quat_mul(q, quat_from_axis_angle([0.0, 0.0, 1.0], np.radians(pose.plane)))
    return ProbeFrame(origin=origin, quat=quat_normalize(q))


def apply_action(pose: Pose5, action, length: float, probe: ProbeConfig) -> Pose5:
    """Pure transition: clamp action to [-1, 1], scale per DOF, clamp/wrap."""
    a = np.clip(as_dof_array(action), -1.0, 1.0)
    return make_pose(pose.as_array() + a * np.asarray(probe.step_sizes), length, probe)


def perturb_pose(pose: Pose5, ranges, rng: np.random.Generator,
                 length: float, probe: ProbeConfig) -> Pose5:
    """Uniform per-DOF offsets within +-ranges, then clamp/wrap."""
    r = as_dof_array(ranges)
    offsets = rng.uniform(-r, r)
    return make_pose(pose.as_array() + offsets, length, probe)
