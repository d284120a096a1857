import math

import numpy as np
import pytest

from qtraj.models import AtomParams, build_two_atom_eigen

# Two-atom configuration with a strong light/dark timescale separation
# (intermittent-fluorescence regime): lambda = sqrt(delta^2/4 + V^2).
BLINK_LAMBDA = math.hypot(1.0, 10.0)
BLINK_PARAMS = dict(
    gamma=1.0, omega_rabi=5.0, delta_total=-BLINK_LAMBDA,
    delta_diff=2.0, v=10.0, gamma12=1.0,
)

# Two-atom configuration used for the steady-state spectroscopy scan and the
# central-resonance bunching runs.
SPECTRO_PARAMS = dict(
    gamma=1.0, omega_rabi=6.0, delta_diff=46.4, v=19.3, gamma12=0.18,
)
SPECTRO_LAMBDA = math.sqrt(46.4**2 / 4.0 + 19.3**2)


@pytest.fixture(scope="session")
def blinking_model():
    return build_two_atom_eigen(AtomParams(**BLINK_PARAMS))


@pytest.fixture(scope="session")
def spectroscopy_params():
    return AtomParams(**SPECTRO_PARAMS)


@pytest.fixture(scope="session")
def ground4():
    return np.array([0, 0, 0, 1], dtype=complex)


@pytest.fixture(scope="session")
def ground2():
    return np.array([0, 1], dtype=complex)
