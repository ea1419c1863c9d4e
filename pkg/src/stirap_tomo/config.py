"""Run configuration: schemas, file loading and environment settings.

Config files are flat ``section.key = value`` text with ``#`` comments, or a
JSON mirror of the same structure (selected by a ``.json`` suffix or a leading
``{``). Sections:

- pulse.*          PulseConfig fields (pulse.omega_max = 6.0)
- decay.*          DecayConfig fields (decay.gamma_a = 0.5)
- initial_block.*  rho_mm, rho_nn, rho_mn (complex, e.g. 0.3-0.1j), spectator_weight
- run.*            protocol, integrator_tol, output_path, seed, signal_mode, calibration

``run.protocol`` is ``four_step``, ``uniform N_ALPHA N_BETA`` or a list of
``alpha:beta`` pairs separated by commas.

Environment variables:
- STIRAP_TOMO_LOG=DEBUG|INFO|WARNING|ERROR|CRITICAL
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from typing_extensions import Literal

from stirap_tomo.errors import ConfigError
from stirap_tomo.quantum_core import DensityMatrix, random_density_matrix
from stirap_tomo.state import (
    BlockElements,
    Calibration,
    DecayConfig,
    ProtocolSetting,
    PulseConfig,
    SignalMode,
)
from stirap_tomo.tomography import four_step_settings, uniform_settings

logger = logging.getLogger(__name__)

LOG_ENV_VAR = "STIRAP_TOMO_LOG"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
SECTIONS = ("pulse", "decay", "initial_block", "run")

# ===== SCHEMAS =====

class InitialBlock(BlockElements):
    """Initial 2x2 block over (|m>, |n>) and the weight of the spectator levels."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    rho_mm: float = Field(default=1.0, description="Population of |m>.")
    rho_nn: float = Field(default=0.0, description="Population of |n>.")
    rho_mn: complex = Field(default=0j, description="Coherence <m|rho|n>.")
    spectator_weight: float = Field(default=0.0, ge=0.0, le=1.0, description="Population outside {m, n}.")

    @model_validator(mode="after")
    def _check_physical(self) -> "InitialBlock":
        # PhysicalityError is a ValueError, so pydantic reports it as a validation error
        self.density_matrix()
        return self

    def density_matrix(self) -> DensityMatrix:
        return DensityMatrix.from_block(self.matrix(), self.spectator_weight)


class UniformProtocol(BaseModel):
    """Overdetermined grid of settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_alpha: int = Field(ge=2, description="Number of mixing angles in [0, pi/2].")
    n_beta: int = Field(ge=1, description="Number of phases in (-pi, pi].")


class RunConfig(BaseModel):
    """Everything one CLI command needs."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    pulse: PulseConfig = Field(default_factory=PulseConfig, description="Pulse parameters.")
    decay: DecayConfig = Field(default_factory=DecayConfig, description="Decay rates.")
    initial_block: Optional[InitialBlock] = Field(
        default=None, description="Initial state; a seeded random block when omitted."
    )
    protocol: Union[Literal["four_step"], UniformProtocol, list[ProtocolSetting]] = Field(
        default="four_step", description="Measurement settings."
    )
    integrator_tol: float = Field(default=1e-9, gt=0.0, description="Integrator tolerance.")
    output_path: Optional[str] = Field(default=None, description="Where commands write their output.")
    seed: int = Field(default=0, ge=0, description="Seed for randomized initial states.")
    signal_mode: SignalMode = Field(default="final_population", description="Readout for generated protocols.")
    calibration: Calibration = Field(default="analytic", description="How readouts are calibrated.")

    @field_validator("protocol")
    @classmethod
    def _check_protocol(cls, value: Any) -> Any:
        if isinstance(value, list) and not value:
            raise ValueError("protocol has no settings")
        return value

    def settings(self) -> list[ProtocolSetting]:
        """Return the protocol settings; generated ones use ``signal_mode``."""
        if self.protocol == "four_step":
            return four_step_settings(self.signal_mode)
        if isinstance(self.protocol, UniformProtocol):
            return uniform_settings(self.protocol.n_alpha, self.protocol.n_beta, self.signal_mode)
        return list(self.protocol)

    def initial_state(self) -> DensityMatrix:
        if self.initial_block is not None:
            return self.initial_block.density_matrix()
        return random_density_matrix(np.random.default_rng(self.seed), "mixed", spectator_weight=0.0)

# ===== FLAT FORMAT =====

def _parse_scalar(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parse_complex(text: str) -> complex:
    return complex(text.replace(" ", "").replace("i", "j"))


def _parse_protocol(text: str) -> Any:
    words = text.split()
    if text == "four_step":
        return text
    if words and words[0] == "uniform":
        if len(words) != 3:
            raise ValueError("expected 'uniform N_ALPHA N_BETA'")
        return {"n_alpha": int(words[1]), "n_beta": int(words[2])}
    settings = []
    for pair in text.split(","):
        alpha, sep, beta = pair.partition(":")
        if not sep:
            raise ValueError(f"expected alpha:beta pairs, got '{pair.strip()}'")
        settings.append({"alpha": float(alpha), "beta": float(beta)})
    return settings


def parse_flat_config(text: str, path: str = "<string>") -> tuple[dict, dict[str, int]]:
    """Parse flat dotted key-value text.

    Returns:
        The nested data and the line number of every dotted key.

    Raises:
        ConfigError: On syntax errors, unknown sections or duplicate keys.
    """
    data: dict[str, Any] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError("expected 'section.key = value'", path, lineno)
        section, dot, name = key.partition(".")
        if not dot or not name:
            raise ConfigError("key must be dotted as section.key", path, lineno, key)
        if section not in SECTIONS:
            raise ConfigError(f"unknown section '{section}' (expected one of {', '.join(SECTIONS)})", path, lineno, key)
        if key in lines:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", path, lineno, key)
        if not value:
            raise ConfigError("missing value", path, lineno, key)

        try:
            if name == "rho_mn":
                parsed: Any = _parse_complex(value)
                parsed = [parsed.real, parsed.imag]
            elif section == "run" and name == "protocol":
                parsed = _parse_protocol(value)
            else:
                parsed = _parse_scalar(value)
        except ValueError as e:
            raise ConfigError(f"cannot parse '{value}': {e}", path, lineno, key) from e

        lines[key] = lineno
        if section == "run":
            data[name] = parsed
        else:
            data.setdefault(section, {})[name] = parsed
    return data, lines


def _dotted(loc: tuple) -> str:
    parts = [str(p) for p in loc if not isinstance(p, int)]
    if parts and parts[0] not in SECTIONS[:3]:
        parts.insert(0, "run")
    return ".".join(parts)


def _validation_error(err: ValidationError, path: str, lines: dict[str, int]) -> ConfigError:
    first = err.errors()[0]
    field = _dotted(tuple(first["loc"]))
    line = lines.get(field)
    if line is None:
        # errors raised by a whole-section validator point at the section
        section = field.split(".", 1)[0]
        line = min((n for k, n in lines.items() if k.startswith(section + ".")), default=None)
    return ConfigError(first["msg"], path, line, field or None)


def load_config(path: Union[str, Path], text: Optional[str] = None) -> RunConfig:
    """Load a flat or JSON config file into a validated ``RunConfig``.

    Raises:
        ConfigError: With file, line and dotted field when available.
    """
    path = str(path)
    if text is None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e.strerror}", path) from e

    lines: dict[str, int] = {}
    if path.endswith(".json") or text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(e.msg, path, e.lineno) from e
        if not isinstance(data, dict):
            raise ConfigError("top level must be an object", path)
        data = {**data.pop("run", {}), **data}
    else:
        data, lines = parse_flat_config(text, path)

    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise _validation_error(e, path, lines) from e
    logger.debug("loaded config from %s", path)
    return config


def config_to_json(config: RunConfig) -> str:
    """Return the JSON mirror of ``config``."""
    return config.model_dump_json(indent=2, exclude_none=True)

# ===== ENVIRONMENT =====

def log_level_from_env(env_var: str = LOG_ENV_VAR, fallback: str = "WARNING") -> int:
    """Return the log level named by ``env_var``, falling back on a bad value."""
    value = os.getenv(env_var)
    if value is None or not value.strip():
        return getattr(logging, fallback)
    name = value.strip().upper()
    if name not in LOG_LEVELS:
        logger.warning("invalid %s=%r, falling back to %s", env_var, value, fallback)
        return getattr(logging, fallback)
    return getattr(logging, name)
