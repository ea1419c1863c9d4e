"""Measurement protocol and linear reconstruction of the addressed 2x2 block.

A transfer with pump mixing angles (alpha, beta) moves exactly the
population <C|rho|C> to |a>, the expectation value of a rank-one observable
V(alpha, beta). Four settings fix rho_mm, rho_nn and both quadratures of
rho_mn; more settings are fitted by least squares.
"""

import logging
import math
from typing import Optional

import numpy as np
import numpy.typing as npt

from stirap_tomo.adiabatic import attenuation_factor, cd_basis
from stirap_tomo.dynamics import DEFAULT_TOL, propagate
from stirap_tomo.errors import UnidentifiableError, UnrecoverableAttenuationError
from stirap_tomo.quantum_core import A, DIM, M, N, ComplexMatrix, DensityMatrix, require_block_support
from stirap_tomo.state import (
    BlockEstimate,
    Calibration,
    DecayConfig,
    MeasurementRecord,
    ProtocolSetting,
    PulseConfig,
    SignalMode,
)

logger = logging.getLogger(__name__)

# Smallest calibration factor a signal may be divided by
MIN_CALIBRATION = 1e-6
CLAMP_TOL = 1e-6
# Singular values below this fraction of the largest mark an unresolved direction
RANK_TOL = 1e-10

PARAMETER_NAMES = ("rho_mm", "rho_nn", "Re rho_mn", "Im rho_mn")


def observable_v(alpha: float, beta: float) -> ComplexMatrix:
    """Return the observable whose expectation is the transferred population.

    This is the projector |C><C| onto the coupled state of the pump.
    """
    v = np.zeros((DIM, DIM), dtype=np.complex128)
    mixed = math.sin(alpha) * math.cos(alpha)
    phase = complex(math.cos(beta), math.sin(beta))
    v[M, M] = math.cos(alpha) ** 2
    v[N, N] = math.sin(alpha) ** 2
    v[M, N] = mixed * phase.conjugate()
    v[N, M] = mixed * phase
    return v

# ===== SETTINGS =====

def four_step_settings(signal_mode: SignalMode = "final_population") -> list[ProtocolSetting]:
    """Return the minimal protocol: |m>, |n>, and the two coherence quadratures."""
    return [
        ProtocolSetting(alpha=0.0, beta=0.0, signal_mode=signal_mode),
        ProtocolSetting(alpha=math.pi / 2, beta=0.0, signal_mode=signal_mode),
        ProtocolSetting(alpha=math.pi / 4, beta=0.0, signal_mode=signal_mode),
        ProtocolSetting(alpha=math.pi / 4, beta=-math.pi / 2, signal_mode=signal_mode),
    ]


def uniform_settings(
    n_alpha: int, n_beta: int, signal_mode: SignalMode = "final_population"
) -> list[ProtocolSetting]:
    """Return an overdetermined grid of settings.

    ``n_alpha`` mixing angles spanning [0, pi/2] and ``n_beta`` phases spread
    evenly over (-pi, pi].
    """
    if n_alpha < 2 or n_beta < 1:
        raise ValueError(f"need n_alpha >= 2 and n_beta >= 1, got {n_alpha}, {n_beta}")
    alphas = np.linspace(0.0, math.pi / 2, n_alpha)
    betas = math.pi - 2.0 * math.pi * np.arange(n_beta) / n_beta
    return [
        ProtocolSetting(alpha=float(a), beta=float(b), signal_mode=signal_mode)
        for a in alphas
        for b in betas
    ]


def design_row(setting: ProtocolSetting) -> npt.NDArray[np.float64]:
    """Coefficients of (rho_mm, rho_nn, Re rho_mn, Im rho_mn) in the transferred population."""
    s2 = math.sin(2.0 * setting.alpha)
    return np.array(
        [
            math.cos(setting.alpha) ** 2,
            math.sin(setting.alpha) ** 2,
            s2 * math.cos(setting.beta),
            -s2 * math.sin(setting.beta),
        ]
    )

# ===== SIMULATED MEASUREMENT =====

def transfer_efficiency(
    cfg: PulseConfig,
    decay: DecayConfig,
    mode: SignalMode = "final_population",
    tol: float = DEFAULT_TOL,
) -> float:
    """Return the signal a pure coupled state produces.

    The decoupled state never reaches |a>, so every signal is this constant
    times <C|rho|C>, whatever the pump angles.
    """
    rho_c = DensityMatrix.pure(cd_basis(cfg.alpha, cfg.beta).c)
    trajectory = propagate(rho_c, cfg, decay, tol=tol)
    return _raw_signal(float(trajectory.population(A)[-1]), trajectory.signal_integral, mode)


def calibration_factor(
    cfg: PulseConfig,
    decay: DecayConfig,
    mode: SignalMode = "final_population",
    calibration: Calibration = "analytic",
    tol: float = DEFAULT_TOL,
) -> float:
    """Return the factor a raw signal is divided by to give the transferred population.

    ``analytic`` uses the closed-form attenuation f: f itself for the final
    population, 1 - f for the integrated fluorescence. ``simulated`` uses
    ``transfer_efficiency``.

    Raises:
        UnrecoverableAttenuationError: If the factor is below 1e-6.
    """
    if calibration == "simulated":
        factor = transfer_efficiency(cfg, decay, mode, tol)
    else:
        surviving = attenuation_factor(cfg, decay.gamma_a)
        factor = surviving if mode == "final_population" else 1.0 - surviving
    if factor < MIN_CALIBRATION:
        raise UnrecoverableAttenuationError(
            f"{calibration} calibration factor {factor:.3e} for {mode} with "
            f"gamma_a={decay.gamma_a} is too small to invert"
        )
    logger.debug("%s calibration factor for %s: %.12g", calibration, mode, factor)
    return factor


def _raw_signal(final_pa: float, signal_integral: float, mode: SignalMode) -> float:
    return max(final_pa if mode == "final_population" else signal_integral, 0.0)


def run_measurement(
    rho_i: DensityMatrix,
    setting: ProtocolSetting,
    cfg: PulseConfig,
    decay: DecayConfig,
    *,
    calibration: Calibration = "analytic",
    factor: Optional[float] = None,
    tol: float = DEFAULT_TOL,
    step: int = 0,
) -> MeasurementRecord:
    """Simulate one protocol shot with the pump angles of ``setting``.

    Args:
        rho_i: Initial state, supported on the {m, n} block plus spectators.
        setting: Pump angles and readout.
        cfg: Pulse parameters; its (alpha, beta) are replaced by the setting's.
        decay: Decay rates.
        calibration: How the calibration factor is obtained when ``factor`` is None.
        factor: Precomputed calibration factor (it does not depend on the angles).
        tol: Integrator tolerance.
        step: Position of the setting in the protocol.

    Raises:
        SupportError: If ``rho_i`` has weight on |e> or |a>.
        UnrecoverableAttenuationError: If the calibration factor is below 1e-6.
    """
    require_block_support(rho_i)

    shot_cfg = cfg.with_updates(alpha=setting.alpha, beta=setting.beta)
    if factor is None:
        factor = calibration_factor(shot_cfg, decay, setting.signal_mode, calibration, tol)
    elif factor < MIN_CALIBRATION:
        raise UnrecoverableAttenuationError(f"calibration factor {factor:.3e} is too small to invert")

    trajectory = propagate(rho_i, shot_cfg, decay, tol=tol)
    raw = _raw_signal(float(trajectory.population(A)[-1]), trajectory.signal_integral, setting.signal_mode)
    calibrated = raw / factor
    if calibrated > 1.0 + CLAMP_TOL:
        logger.warning(
            "calibrated population %.6f at step %d exceeds 1; clamped", calibrated, step
        )
    calibrated = min(calibrated, 1.0)

    logger.info(
        "step %d (alpha=%.4f, beta=%.4f): raw %.6g, calibrated %.6g",
        step, setting.alpha, setting.beta, raw, calibrated,
    )
    return MeasurementRecord(
        setting=setting,
        raw_signal=raw,
        calibrated_pa=calibrated,
        calibration_factor=factor,
        step=step,
    )

# ===== RECONSTRUCTION =====

def _describe_direction(direction: np.ndarray) -> str:
    terms = [
        f"{coef:+.3f}*{name}"
        for coef, name in zip(direction, PARAMETER_NAMES)
        if abs(coef) > 1e-3
    ]
    return " ".join(terms)


def reconstruct(records: list[MeasurementRecord]) -> BlockEstimate:
    """Fit (rho_mm, rho_nn, Re rho_mn, Im rho_mn) to the calibrated populations.

    Solves the normal equations of the linear model. For the four canonical
    settings this is the direct inversion.

    Raises:
        UnidentifiableError: If the settings leave a block direction unresolved.
    """
    if len(records) < 4:
        raise UnidentifiableError(f"need at least 4 records, got {len(records)}")
    design = np.array([design_row(r.setting) for r in records])
    populations = np.array([r.calibrated_pa for r in records])

    _, singular, vt = np.linalg.svd(design)
    if singular[-1] < RANK_TOL * singular[0]:
        raise UnidentifiableError(
            f"settings do not resolve the direction {_describe_direction(vt[-1])}"
        )

    x = np.linalg.solve(design.T @ design, design.T @ populations)
    residual = float(np.sqrt(np.mean((design @ x - populations) ** 2)))
    rho_mn = complex(x[2], x[3])
    excess = abs(rho_mn) ** 2 - x[0] * x[1]
    if excess > 1e-6:
        logger.warning(
            "estimate violates |rho_mn|^2 <= rho_mm*rho_nn by %.3e; use project_to_physical to repair",
            excess,
        )
    return BlockEstimate(
        rho_mm=float(x[0]),
        rho_nn=float(x[1]),
        rho_mn=rho_mn,
        residual=residual,
        settings_used=len(records),
        cauchy_schwarz_excess=float(excess),
    )


def project_to_physical(estimate: BlockEstimate) -> BlockEstimate:
    """Return the nearest positive block with the estimated trace.

    Negative eigenvalues are clipped to zero and the rest rescaled.
    """
    block = estimate.matrix()
    trace = max(float(np.real(np.trace(block))), 0.0)
    values, vectors = np.linalg.eigh(block)
    clipped = np.clip(values, 0.0, None)
    if clipped.sum() > 0.0:
        clipped *= trace / clipped.sum()
    repaired = (vectors * clipped) @ vectors.conj().T
    rho_mm, rho_nn = float(repaired[0, 0].real), float(repaired[1, 1].real)
    rho_mn = complex(repaired[0, 1])
    return estimate.model_copy(
        update={
            "rho_mm": rho_mm,
            "rho_nn": rho_nn,
            "rho_mn": rho_mn,
            "cauchy_schwarz_excess": abs(rho_mn) ** 2 - rho_mm * rho_nn,
        }
    )
