import numpy as np
import pytest

from probenav.env import Centerline, PatientAnatomy, load_env_config
from probenav.env.anatomy import Landmark


@pytest.fixture(scope="session")
def env_config():
    return load_env_config()


def straight_anatomy(landmark_positions=(), intensities=None, radii=None, length=200.0):
    """Anatomy on a straight -z centerline, for closed-form geometry tests."""
    coeffs = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -length], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    positions = list(landmark_positions) or [(0.0, 40.0, -100.0)]
    intensities = intensities or [0.8] * len(positions)
    radii = radii or [5.0] * len(positions)
    landmarks = tuple(
        Landmark(template_index=i, cls="chamber", position=np.asarray(p, dtype=float),
                 intensity=float(a), radius=float(r), group="core")
        for i, (p, a, r) in enumerate(zip(positions, intensities, radii))
    )
    return PatientAnatomy(patient_id=0, template_id=0, centerline=Centerline(coeffs),
                          landmarks=landmarks, structures=frozenset())
