import dataclasses

import numpy as np
import pytest

from probenav.env import (
    UnknownTemplateError,
    generate_patient,
    template_anatomy,
)


def test_variation_zero_reproduces_template(env_config):
    anat = generate_patient(17, 0, env_config, variation_scale=0.0)
    template = template_anatomy(env_config)
    assert np.array_equal(anat.positions(), template.positions())
    assert np.array_equal(anat.centerline.coeffs, template.centerline.coeffs)
    base = np.array([l.pos for l in env_config.templates[0].landmarks
                     if l.group == "core"])
    assert np.array_equal(anat.positions(), base)


def test_same_ids_bit_identical(env_config):
    a = generate_patient(5, 0, env_config)
    b = generate_patient(5, 0, env_config)
    assert np.array_equal(a.positions(), b.positions())
    assert np.array_equal(a.centerline.coeffs, b.centerline.coeffs)
    assert a.length == b.length


def test_different_ids_differ(env_config):
    a = generate_patient(5, 0, env_config)
    b = generate_patient(6, 0, env_config)
    assert not np.array_equal(a.positions(), b.positions())


def test_unknown_template_rejected(env_config):
    with pytest.raises(UnknownTemplateError):
        generate_patient(0, 42, env_config)


def test_structures_gate_optional_landmarks(env_config):
    plain = generate_patient(3, 0, env_config)
    with_app = generate_patient(3, 0, env_config, with_structures={"appendage"})
    assert plain.structures == frozenset()
    assert with_app.structures == {"appendage"}
    assert len(with_app.landmarks) > len(plain.landmarks)
    # core landmark positions are independent of structure inclusion
    plain_core = {l.template_index: l.position for l in plain.landmarks}
    for l in with_app.landmarks:
        if l.group == "core":
            assert np.array_equal(l.position, plain_core[l.template_index])


def test_jitter_displacement_matches_configured_sigma(env_config):
    # Monte Carlo oracle: with the affine and centerline variation switched
    # off, the displacement between two patients' copies of one landmark is
    # the difference of two N(0, sigma^2 I3) draws, so E||delta|| =
    # sigma * sqrt(2) * E||N(0, I3)|| = 2.2568 * sigma.
    sigma = 1.5
    quiet = dataclasses.replace(
        env_config,
        variation=dataclasses.replace(env_config.variation, affine_scale=0.0,
                                      affine_rot_deg=0.0, affine_trans_mm=0.0,
                                      centerline_mm=0.0, scale_mm=sigma),
    )
    patients = [generate_patient(pid, 0, quiet, variation_scale=sigma)
                for pid in range(100)]
    clouds = np.stack([p.positions() for p in patients])  # (100, n, 3)
    rng = np.random.default_rng(0)
    pairs = rng.choice(100, size=(400, 2))
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    disp = np.linalg.norm(clouds[pairs[:, 0]] - clouds[pairs[:, 1]], axis=2)
    mean_disp = disp.mean()
    expected = sigma * np.sqrt(2.0) * 1.59577
    assert mean_disp > 0.0
    assert mean_disp == pytest.approx(expected, rel=0.20)


def test_landmark_count_invariant(env_config):
    for pid in range(5):
        assert len(generate_patient(pid, 0, env_config).landmarks) >= 8
