"""Plane-section landmark-splat rendering of observations.

The imaging frame's local x axis is the beam (depth) direction, y the plane
normal, z the probe axis (in-plane lateral direction). A landmark whose
center lies within the slab half-thickness of the plane and inside the
sector field of view is splatted as an unnormalized 2-D Gaussian: amplitude
is its base intensity scaled by a quadratic slab falloff, width is the
radius of the sphere's cross-section with the plane (floored at
``min_sigma_mm``). Pixels outside the sector mask are zero; the image is
clamped to [0, 1].
"""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path

import numpy as np

from .anatomy import PatientAnatomy
from .config import ImageConfig
from .geometry import quat_to_matrix
from .kinematics import Pose5, ProbeFrame, frame_for


@lru_cache(maxsize=8)
def _pixel_grid(img: ImageConfig):
    # pixel centers: rows sweep depth, columns sweep lateral offset
    v = (np.arange(img.height) + 0.5) * (img.depth_max_mm / img.height)
    u = -img.lateral_extent_mm + (np.arange(img.width) + 0.5) * (
        2.0 * img.lateral_extent_mm / img.width)
    ugrid, vgrid = np.meshgrid(u, v)
    tan_half = np.tan(np.radians(img.sector_fov_deg / 2.0))
    mask = (np.abs(ugrid) <= vgrid * tan_half) & (np.hypot(ugrid, vgrid) <= img.depth_max_mm)
    return ugrid, vgrid, mask


def sector_mask(img: ImageConfig) -> np.ndarray:
    return _pixel_grid(img)[2].copy()


def render_at_frame(anatomy: PatientAnatomy, frame: ProbeFrame, img: ImageConfig) -> np.ndarray:
    rot = quat_to_matrix(frame.quat)
    ugrid, vgrid, mask = _pixel_grid(img)
    out = np.zeros((img.height, img.width))
    tan_half = np.tan(np.radians(img.sector_fov_deg / 2.0))

    # vectorized visibility prefilter; only the survivors get splatted
    rel = anatomy.positions() - frame.origin
    dist = rel @ rot[:, 1]
    v = rel @ rot[:, 0]
    u = rel @ rot[:, 2]
    visible = ((np.abs(dist) <= img.slab_half_mm) & (v >= 0.0)
               & (np.abs(u) <= v * tan_half) & (np.hypot(u, v) <= img.depth_max_mm))

    for i in np.nonzero(visible)[0]:
        lm = anatomy.landmarks[i]
        amp = lm.intensity * (1.0 - (dist[i] / img.slab_half_mm) ** 2)
        sigma = max(np.sqrt(max(lm.radius ** 2 - dist[i] ** 2, 0.0)), img.min_sigma_mm)
        out += amp * np.exp(-((ugrid - u[i]) ** 2 + (vgrid - v[i]) ** 2) / (2.0 * sigma ** 2))

    out *= mask
    return np.clip(out, 0.0, 1.0)


def render_observation(anatomy: PatientAnatomy, pose: Pose5, config) -> np.ndarray:
    """Deterministic (anatomy, pose) -> image in [0, 1], shape (height, width)."""
    frame = frame_for(pose, anatomy.centerline, config.probe)
    return render_at_frame(anatomy, frame, config.image)


def save_pgm(image: np.ndarray, path: str | Path) -> None:
    """Dump an observation as an 8-bit binary PGM for eyeballing."""
    h, w = image.shape
    data = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())
