"""Pose error metrics between imaging frames."""

from __future__ import annotations

import numpy as np

from .anatomy import PatientAnatomy
from .geometry import quat_geodesic_deg
from .kinematics import Pose5, frame_for


def pose_errors(pose_a: Pose5, pose_b: Pose5, anatomy: PatientAnatomy,
                config) -> tuple[float, float]:
    """(position error mm, angle error deg) between two poses' imaging frames.

    Position is the Euclidean distance between frame origins; angle is the
    quaternion geodesic 2*acos(|<qa, qb>|), so roll, plane and flexions all
    contribute.
    """
    fa = frame_for(pose_a, anatomy.centerline, config.probe)
    fb = frame_for(pose_b, anatomy.centerline, config.probe)
    pos = float(np.linalg.norm(fa.origin - fb.origin))
    ang = quat_geodesic_deg(fa.quat, fb.quat)
    return pos, ang
