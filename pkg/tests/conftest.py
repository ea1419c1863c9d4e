from pathlib import Path

import numpy as np
import pytest

from stirap_tomo.state import DecayConfig, PulseConfig


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def reference_pulse():
    """Reference pulses: moderately adiabatic, visible nonadiabatic loss."""
    return PulseConfig(omega_max=6.0, half_width_T=2.0, delay_tau=3.2, delta=0.3)


@pytest.fixture
def adiabatic_pulse():
    """Strongly adiabatic pulses on which the tight transfer tolerances hold."""
    return PulseConfig(omega_max=20.0, half_width_T=3.0, delay_tau=4.8, delta=0.3)


@pytest.fixture
def reference_decay():
    return DecayConfig(gamma_e=0.1, gamma_a=0.0)


@pytest.fixture
def no_decay():
    return DecayConfig()


@pytest.fixture
def configs_dir():
    return Path(__file__).resolve().parents[1] / "configs"
