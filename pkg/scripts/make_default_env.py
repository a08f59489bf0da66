#!/usr/bin/env python3
"""Regenerate src/probenav/data/default_env.yaml.

Builds the default template anatomy: a gently bowed centerline, six views
with canonical DOF vectors, and landmarks placed so that each view's three
defining landmarks lie exactly on the canonical imaging plane. Texture
landmarks are seeded draws around the defining cloud. Full-precision floats
are written so the template round-trips exactly.
"""

import sys
from pathlib import Path

import numpy as np
import yaml

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from probenav.env.centerline import Centerline
from probenav.env.config import ProbeConfig
from probenav.env.geometry import quat_to_matrix
from probenav.env.kinematics import Pose5, frame_for

CENTERLINE = [
    [0.0, 0.0, 0.0],      # c0
    [6.0, 0.0, -190.0],   # c1
    [-6.0, 25.0, 0.0],    # c2
    [0.0, -10.0, 0.0],    # c3
]

# view_id -> (canonical dof, in-plane (lateral, depth) offsets of the three
# defining landmarks, required structure groups). Offsets span wide triangles
# so the plane they define stays insensitive to per-landmark jitter.
VIEWS = {
    "V1": ((85.0, 0.0, 60.0, 0.0, 0.0), [(-30, 40), (0, 68), (27, 44)], []),
    "V2": ((95.0, 0.0, 90.0, 0.0, 10.0), [(-26, 52), (4, 38), (24, 62)], []),
    "V3": ((105.0, 0.0, 120.0, 0.0, 0.0), [(-32, 48), (-4, 70), (22, 40)], []),
    "V4": ((115.0, 10.0, 75.0, -8.0, 0.0), [(-22, 64), (6, 42), (30, 56)], []),
    "V5": ((100.0, -5.0, 105.0, 5.0, 5.0), [(-28, 44), (2, 62), (26, 38)], []),
    "V6": ((90.0, 5.0, 50.0, 0.0, -10.0), [(-24, 46), (0, 58), (22, 66)], ["appendage"]),
}

CORE_CLASSES = ["chamber", "valve", "vessel", "wall", "apex", "septum", "outflow"]


def main():
    probe = ProbeConfig()
    centerline = Centerline(np.array(CENTERLINE))
    landmarks = []
    views = {}
    class_cycle = 0

    for view_id, (dof, offsets, requires) in VIEWS.items():
        pose = Pose5(*dof)
        frame = frame_for(pose, centerline, probe)
        rot = quat_to_matrix(frame.quat)
        depth_dir, lateral = rot[:, 0], rot[:, 2]
        indices = []
        for k, (u, v) in enumerate(offsets):
            pos = frame.origin + v * depth_dir + u * lateral
            if requires:
                cls, group = "appendage", "appendage"
            else:
                cls, group = CORE_CLASSES[class_cycle % len(CORE_CLASSES)], "core"
                class_cycle += 1
            indices.append(len(landmarks))
            landmarks.append({
                "class": cls,
                "pos": [float(x) for x in pos],
                "intensity": round(0.75 + 0.08 * ((len(landmarks) * 7) % 4), 4),
                "radius": round(4.5 + 0.5 * ((len(landmarks) * 3) % 5), 4),
                "group": group,
            })
        views[view_id] = {"dof": list(dof), "landmarks": indices,
                          "requires": list(requires)}

    defining = np.array([l["pos"] for l in landmarks])
    center = defining.mean(axis=0)
    # dense texture cloud: the 4 mm slab is thin, so random planes through
    # the region only reliably cut structure if the cloud is dense. One part
    # concentrates around the defining cloud (anterior), the rest rings the
    # centerline so rotated beams still see texture.
    rng = np.random.default_rng(20240511)
    for i in range(60):
        pos = center + rng.uniform(-32.0, 32.0, 3)
        landmarks.append({
            "class": CORE_CLASSES[i % len(CORE_CLASSES)],
            "pos": [float(x) for x in pos],
            "intensity": round(float(rng.uniform(0.35, 0.7)), 4),
            "radius": round(float(rng.uniform(4.5, 8.5)), 4),
            "group": "core",
        })
    for i in range(120):
        angle = rng.uniform(0.0, 2.0 * np.pi)
        radius = rng.uniform(25.0, 60.0)
        z = rng.uniform(-128.0, -58.0)
        pos = np.array([1.2 + radius * np.cos(angle), 7.0 + radius * np.sin(angle), z])
        landmarks.append({
            "class": CORE_CLASSES[(i + 3) % len(CORE_CLASSES)],
            "pos": [float(x) for x in pos],
            "intensity": round(float(rng.uniform(0.3, 0.6)), 4),
            "radius": round(float(rng.uniform(4.5, 8.5)), 4),
            "group": "core",
        })
    v6_anchor = np.array(landmarks[views["V6"]["landmarks"][1]]["pos"])
    for _ in range(2):
        pos = v6_anchor + rng.uniform(-12.0, 12.0, 3)
        landmarks.append({
            "class": "appendage",
            "pos": [float(x) for x in pos],
            "intensity": round(float(rng.uniform(0.5, 0.8)), 4),
            "radius": round(float(rng.uniform(4.0, 7.0)), 4),
            "group": "appendage",
        })

    config = {
        "schema_version": 1,
        "probe": {
            "tip_length_mm": 20.0,
            "flex_limit_deg": 45.0,
            "step_sizes": [5.0, 10.0, 10.0, 5.0, 5.0],
        },
        "image": {
            "width": 32,
            "height": 32,
            "sector_fov_deg": 90.0,
            "slab_half_mm": 4.0,
            "lateral_extent_mm": 60.0,
            "depth_max_mm": 120.0,
            "min_sigma_mm": 0.5,
        },
        "perturbation": {
            "start": [20.0, 30.0, 30.0, 15.0, 15.0],
            "goal": [20.0, 30.0, 30.0, 15.0, 15.0],
        },
        "variation": {
            "scale_mm": 1.5,
            "affine_scale": 0.10,
            "affine_rot_deg": 10.0,
            "affine_trans_mm": 10.0,
            "centerline_mm": 2.0,
            "bounding_radius_mm": 110.0,
        },
        "landmark_classes": CORE_CLASSES + ["appendage"],
        "templates": {0: {
            "centerline": [list(row) for row in CENTERLINE],
            "landmarks": landmarks,
            "views": views,
        }},
    }

    out = Path(__file__).resolve().parents[1] / "src" / "probenav" / "data" / "default_env.yaml"
    out.write_text(yaml.safe_dump(config, sort_keys=False, width=100))
    print(f"wrote {out} ({len(landmarks)} landmarks, {len(views)} views, "
          f"centerline length {centerline.length:.1f} mm)")


if __name__ == "__main__":
    main()
