import numpy as np
import pytest

from probenav.env import Pose5, frame_for, render_observation, save_pgm, sector_mask
from probenav.env.geometry import quat_to_matrix

from conftest import straight_anatomy


def _pixel_center(env_config, row, col):
    img = env_config.image
    v = (row + 0.5) * img.depth_max_mm / img.height
    u = -img.lateral_extent_mm + (col + 0.5) * 2.0 * img.lateral_extent_mm / img.width
    return u, v


def _place_on_plane(env_config, pose, anat_factory, u, v, intensity=0.8, radius=5.0):
    """Build an anatomy whose single landmark sits at in-plane coords (u, v)."""
    probe_anat = anat_factory()
    frame = frame_for(pose, probe_anat.centerline, env_config.probe)
    rot = quat_to_matrix(frame.quat)
    pos = frame.origin + v * rot[:, 0] + u * rot[:, 2]
    return anat_factory(landmark_positions=[pos], intensities=[intensity], radii=[radius])


def test_no_landmark_in_slab_gives_zero_image(env_config):
    anat = straight_anatomy(landmark_positions=[(500.0, 500.0, 500.0)])
    obs = render_observation(anat, Pose5(50.0, 0.0, 0.0, 0.0, 0.0), env_config)
    np.testing.assert_array_equal(obs, np.zeros_like(obs))


def test_on_plane_landmark_peak_equals_intensity(env_config):
    pose = Pose5(80.0, 0.0, 0.0, 0.0, 0.0)
    row, col = 12, 16
    u, v = _pixel_center(env_config, row, col)
    anat = _place_on_plane(env_config, pose, straight_anatomy, u, v, intensity=0.8)
    obs = render_observation(anat, pose, env_config)
    assert obs[row, col] == pytest.approx(0.8, abs=1e-12)
    assert obs.max() == pytest.approx(0.8, abs=1e-12)


def test_splat_matches_direct_formula(env_config):
    # independent evaluation of the Gaussian splat on the pixel grid
    pose = Pose5(70.0, 0.0, 0.0, 0.0, 0.0)
    row, col = 10, 14
    u0, v0 = _pixel_center(env_config, row, col)
    intensity, radius = 0.6, 6.0
    anat = _place_on_plane(env_config, pose, straight_anatomy, u0, v0,
                           intensity=intensity, radius=radius)
    obs = render_observation(anat, pose, env_config)

    img = env_config.image
    rows = (np.arange(img.height) + 0.5) * img.depth_max_mm / img.height
    cols = -img.lateral_extent_mm + (np.arange(img.width) + 0.5) * (
        2.0 * img.lateral_extent_mm / img.width)
    ugrid, vgrid = np.meshgrid(cols, rows)
    expected = intensity * np.exp(-((ugrid - u0) ** 2 + (vgrid - v0) ** 2)
                                  / (2.0 * radius ** 2))
    expected = np.clip(expected * sector_mask(img), 0.0, 1.0)
    np.testing.assert_allclose(obs, expected, atol=1e-12)


def test_render_deterministic(env_config):
    from probenav.env import generate_patient, sample_view_pose
    anat = generate_patient(2, 0, env_config)
    pose = sample_view_pose(anat, "V2", env_config)
    a = render_observation(anat, pose, env_config)
    b = render_observation(anat, pose, env_config)
    assert np.array_equal(a, b)


def test_values_in_unit_range(env_config):
    from probenav.env import generate_patient, perturb_pose, sample_view_pose
    anat = generate_patient(4, 0, env_config)
    rng = np.random.default_rng(5)
    pose = sample_view_pose(anat, "V1", env_config)
    for _ in range(20):
        pose2 = perturb_pose(pose, env_config.perturbation.start, rng, anat.length,
                             env_config.probe)
        obs = render_observation(anat, pose2, env_config)
        assert obs.min() >= 0.0 and obs.max() <= 1.0
        assert obs.shape == (env_config.image.height, env_config.image.width)


def test_out_of_sector_pixels_zero(env_config):
    from probenav.env import generate_patient, sample_view_pose
    anat = generate_patient(1, 0, env_config)
    obs = render_observation(anat, sample_view_pose(anat, "V3", env_config), env_config)
    mask = sector_mask(env_config.image)
    assert np.all(obs[~mask] == 0.0)


def test_pgm_export(tmp_path, env_config):
    anat = straight_anatomy()
    obs = render_observation(anat, Pose5(100.0, 0.0, 90.0, 0.0, 0.0), env_config)
    path = tmp_path / "obs.pgm"
    save_pgm(obs, path)
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n32 32\n255\n")
    assert len(raw) == len(b"P5\n32 32\n255\n") + 32 * 32
