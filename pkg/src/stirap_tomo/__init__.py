"""Simulation and reconstruction of STIRAP-based density-matrix block measurements."""

from stirap_tomo.dynamics import propagate
from stirap_tomo.protocol import measure_block
from stirap_tomo.quantum_core import DensityMatrix
from stirap_tomo.state import DecayConfig, PulseConfig
from stirap_tomo.tomography import four_step_settings, reconstruct

__version__ = "0.1.0"

__all__ = [
    "DecayConfig",
    "DensityMatrix",
    "PulseConfig",
    "four_step_settings",
    "measure_block",
    "propagate",
    "reconstruct",
]
