"""Pulse envelopes and the adiabatic mixing angles.

Envelopes are ``peak * exp(-((t - c) / w)^2)`` with the pump centred at
``c = +tau/2`` and the Stokes pulse at ``c = -tau/2``. ``w`` follows from the
configured half-width convention (``PulseConfig.width``).
"""

import math
from typing import NamedTuple

from stirap_tomo.state import PulseConfig

# Window half-width in units of the pulse width beyond the pulse centres
WINDOW_WIDTHS = 5.0


class AngleSample(NamedTuple):
    """Mixing angles, rms Rabi frequency and their time derivatives at ``t``."""

    t: float
    theta: float
    phi: float
    omega_rms: float
    theta_dot: float
    phi_dot: float


def time_window(cfg: PulseConfig) -> tuple[float, float]:
    """Return the integration window symmetric about t = 0."""
    half = abs(cfg.delay_tau) / 2.0 + WINDOW_WIDTHS * cfg.width
    return -half, half


def envelope_pump(cfg: PulseConfig, t: float) -> float:
    """Return the pump Rabi frequency Omega_p(t)."""
    return cfg.pump_peak * math.exp(-(((t - cfg.delay_tau / 2.0) / cfg.width) ** 2))


def envelope_stokes(cfg: PulseConfig, t: float) -> float:
    """Return the Stokes Rabi frequency Omega_a(t)."""
    return cfg.stokes_peak * math.exp(-(((t + cfg.delay_tau / 2.0) / cfg.width) ** 2))


def envelope_derivatives(cfg: PulseConfig, t: float) -> tuple[float, float]:
    """Return the closed-form time derivatives (dOmega_p/dt, dOmega_a/dt)."""
    w2 = cfg.width**2
    pump = -2.0 * (t - cfg.delay_tau / 2.0) / w2 * envelope_pump(cfg, t)
    stokes = -2.0 * (t + cfg.delay_tau / 2.0) / w2 * envelope_stokes(cfg, t)
    return pump, stokes


def pump_components(cfg: PulseConfig, t: float) -> tuple[complex, complex]:
    """Split the pump into its |m> and |n> Rabi frequencies."""
    omega_p = envelope_pump(cfg, t)
    return (
        complex(omega_p * math.cos(cfg.alpha)),
        omega_p * math.sin(cfg.alpha) * complex(math.cos(cfg.beta), math.sin(cfg.beta)),
    )


def _theta(cfg: PulseConfig, t: float) -> float:
    # tan(theta) = Omega_p / Omega_a = (peak ratio) * exp(2 t tau / w^2); working
    # with the log keeps the limits 0 (early) and pi/2 (late) after underflow.
    if cfg.pump_peak == 0.0:
        return 0.0
    if cfg.stokes_peak == 0.0:
        return math.pi / 2.0
    x = math.log(cfg.pump_peak / cfg.stokes_peak) + 2.0 * t * cfg.delay_tau / cfg.width**2
    if x > 0.0:
        return math.pi / 2.0 - math.atan(math.exp(-x))
    return math.atan(math.exp(x))


def mixing_angles(cfg: PulseConfig, t: float) -> AngleSample:
    """Return theta, phi, Omega(t) and their closed-form derivatives."""
    omega_p = envelope_pump(cfg, t)
    omega_a = envelope_stokes(cfg, t)
    omega = math.hypot(omega_p, omega_a)

    theta = _theta(cfg, t)
    if cfg.pump_peak == 0.0 or cfg.stokes_peak == 0.0:
        theta_dot = 0.0
    else:
        theta_dot = cfg.delay_tau / cfg.width**2 * math.sin(2.0 * theta)

    phi = 0.5 * math.atan2(omega, cfg.delta)
    dp, da = envelope_derivatives(cfg, t)
    omega_dot = (omega_p * dp + omega_a * da) / omega if omega > 0.0 else 0.0
    denom = cfg.delta**2 + omega**2
    phi_dot = 0.5 * cfg.delta * omega_dot / denom if denom > 0.0 else 0.0

    return AngleSample(t, theta, phi, omega, theta_dot, phi_dot)
