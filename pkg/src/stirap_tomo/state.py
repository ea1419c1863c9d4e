import math
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator
from typing_extensions import Literal

SCHEMA_VERSION = "1.0"

SignalMode = Literal["final_population", "integrated_fluorescence"]
Calibration = Literal["analytic", "simulated"]
GaussianConvention = Literal["amplitude_1e", "rms", "fwhm"]


def _wrap_phase(value: float) -> float:
    """Map a phase into (-pi, pi], leaving in-range values untouched."""
    if -math.pi < value <= math.pi:
        return value
    return math.pi - (math.pi - value) % (2.0 * math.pi)


def _coerce_complex(value: Any) -> Any:
    if isinstance(value, dict):
        return complex(value.get("re", 0.0), value.get("im", 0.0))
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(value[0], value[1])
    return value

# ===== PULSES AND DECAY =====

class PulseConfig(BaseModel):
    """Gaussian pump/Stokes pair, pump mixing angles and common detuning.

    The pump is centred at +tau/2 and the Stokes pulse at -tau/2, so a positive
    delay gives the counterintuitive order (Stokes first).
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    omega_max: float = Field(
        default=6.0, ge=0.0,
        description="Peak Rabi frequency of the pump (and of the Stokes pulse unless omega_max_stokes is set), rad/unit-time.",
    )
    half_width_T: float = Field(
        default=2.0, gt=0.0,
        description="Gaussian half-width T, interpreted according to `convention`, unit-time.",
    )
    delay_tau: float = Field(
        default=3.2,
        description="Centre-to-centre delay between the Stokes and the pump pulse, unit-time.",
    )
    alpha: float = Field(
        default=0.0, ge=0.0, le=math.pi / 2,
        description="Pump mixing angle splitting the pump between |m> and |n>, rad.",
    )
    beta: float = Field(
        default=0.0,
        description="Relative phase of the |n> pump component, rad, wrapped into (-pi, pi].",
    )
    delta: float = Field(
        default=0.3,
        description="Common single-photon detuning of all three fields, rad/unit-time.",
    )
    omega_max_stokes: Optional[float] = Field(
        default=None, ge=0.0,
        description="Separate Stokes peak Rabi frequency; None means equal to omega_max.",
    )
    convention: GaussianConvention = Field(
        default="amplitude_1e",
        description="Meaning of T: 1/e amplitude half-width, rms width, or half width at half maximum.",
    )
    shape: Literal["gaussian"] = Field(
        default="gaussian",
        description="Envelope family.",
    )

    @field_validator("beta")
    @classmethod
    def _wrap_beta(cls, value: float) -> float:
        return _wrap_phase(value)

    @property
    def pump_peak(self) -> float:
        return self.omega_max

    @property
    def stokes_peak(self) -> float:
        return self.omega_max if self.omega_max_stokes is None else self.omega_max_stokes

    @property
    def width(self) -> float:
        """Width w of exp(-(t/w)^2) implied by T and the convention."""
        if self.convention == "rms":
            return math.sqrt(2.0) * self.half_width_T
        if self.convention == "fwhm":
            return self.half_width_T / math.sqrt(math.log(2.0))
        return self.half_width_T

    def with_updates(self, **updates: Any) -> "PulseConfig":
        """Return a validated copy with some fields replaced."""
        return PulseConfig.model_validate({**self.model_dump(), **updates})


class DecayConfig(BaseModel):
    """Decay rates out of the excited and the auxiliary state."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    gamma_e: float = Field(default=0.0, ge=0.0, description="Population decay rate of |e>, 1/unit-time.")
    gamma_a: float = Field(default=0.0, ge=0.0, description="Population decay rate of |a>, 1/unit-time.")

    def with_updates(self, **updates: Any) -> "DecayConfig":
        return DecayConfig.model_validate({**self.model_dump(), **updates})

# ===== PROTOCOL =====

class ProtocolSetting(BaseModel):
    """One choice of pump mixing angles and readout."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = Field(ge=0.0, le=math.pi / 2, description="Pump mixing angle, rad.")
    beta: float = Field(description="Pump relative phase, rad.")
    signal_mode: SignalMode = Field(
        default="final_population",
        description="Read out the final |a> population or the integrated |a> fluorescence.",
    )


class MeasurementRecord(BaseModel):
    """Result of one simulated protocol shot."""

    model_config = ConfigDict(frozen=True)

    setting: ProtocolSetting = Field(description="Setting the shot was taken with.")
    raw_signal: float = Field(ge=0.0, description="Final rho_aa or integrated Gamma_a rho_aa, population units.")
    calibrated_pa: float = Field(ge=0.0, le=1.0 + 1e-6, description="Signal divided by the calibration factor.")
    calibration_factor: float = Field(default=1.0, gt=0.0, description="Factor the raw signal was divided by.")
    step: int = Field(default=0, ge=0, description="Position of the setting in the protocol.")

# ===== ESTIMATES =====

class BlockElements(BaseModel):
    """The addressed 2x2 block: two populations and one coherence."""

    model_config = ConfigDict(frozen=True)

    rho_mm: float = Field(description="Population of |m>.")
    rho_nn: float = Field(description="Population of |n>.")
    rho_mn: complex = Field(description="Coherence <m|rho|n>, serialised as [re, im].")

    @field_validator("rho_mn", mode="before")
    @classmethod
    def _parse_complex(cls, value: Any) -> Any:
        return _coerce_complex(value)

    @field_serializer("rho_mn")
    def _serialize_complex(self, value: complex) -> list[float]:
        return [value.real, value.imag]

    def matrix(self) -> np.ndarray:
        """Return the block as a 2x2 Hermitian array."""
        return np.array(
            [[self.rho_mm, self.rho_mn], [np.conj(self.rho_mn), self.rho_nn]],
            dtype=np.complex128,
        )

    @classmethod
    def from_matrix(cls, block: np.ndarray) -> "BlockElements":
        return cls(
            rho_mm=float(np.real(block[0, 0])),
            rho_nn=float(np.real(block[1, 1])),
            rho_mn=complex(block[0, 1]),
        )


class BlockEstimate(BlockElements):
    """Least-squares reconstruction of the addressed block."""

    residual: float = Field(ge=0.0, description="Root-mean-square misfit of the linear model.")
    settings_used: int = Field(ge=0, description="Number of records in the fit.")
    cauchy_schwarz_excess: float = Field(
        default=0.0,
        description="|rho_mn|^2 - rho_mm*rho_nn; positive values flag an unphysical estimate.",
    )

    @property
    def physical(self) -> bool:
        return self.cauchy_schwarz_excess <= 1e-6


class MeasurementReport(BaseModel):
    """Everything one protocol run produces, in a stable JSON schema."""

    schema_version: str = Field(default=SCHEMA_VERSION, description="Version of this report schema.")
    estimate: BlockEstimate = Field(description="Reconstructed block.")
    records: list[MeasurementRecord] = Field(description="Per-setting records in protocol order.")
    truth: Optional[BlockElements] = Field(default=None, description="True block, when known.")
    delta: Optional[BlockElements] = Field(default=None, description="Estimate minus truth, when known.")
