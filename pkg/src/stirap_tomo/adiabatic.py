"""Closed-form adiabatic layer.

Coupled/decoupled states of the pump, the adiabatic eigenframe of the
(|C>, |e>, |a>) system, the ideal transfer propagator and final-state map, the
non-Hermitian adiabatic-frame model and the decay-corrected transfer formula.

Frame vectors are real 3-vectors over (|C>, |e>, |a>). The rotation O(t) has
columns (psi_plus, psi0, psi_minus).
"""

import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
import numpy.typing as npt
from scipy.integrate import quad

from stirap_tomo.dynamics import DEFAULT_TOL, integrate_adaptive
from stirap_tomo.errors import DegenerateFrameError, DimensionError
from stirap_tomo.pulses import AngleSample, envelope_pump, envelope_stokes, mixing_angles, time_window
from stirap_tomo.quantum_core import (
    A,
    E,
    ComplexMatrix,
    DensityMatrix,
    StateVector,
    ket,
    outer,
    require_block_support,
)
from stirap_tomo.state import DecayConfig, PulseConfig

logger = logging.getLogger(__name__)

Branch = Literal["plus", "minus"]

QUAD_EPSREL = 1e-10
QUAD_EPSABS = 1e-12
QUAD_LIMIT = 500
# Tolerance on the norm of amplitudes returned by frame integrations
STATEVECTOR_NORM_TOL = 1e-8


def _quad(func, t0: float, t1: float, cfg: PulseConfig) -> float:
    if t1 == t0:
        return 0.0
    if t1 < t0:
        return -_quad(func, t1, t0, cfg)
    points = sorted({c for c in (-cfg.delay_tau / 2.0, cfg.delay_tau / 2.0) if t0 < c < t1})
    value, error = quad(
        func, t0, t1, epsrel=QUAD_EPSREL, epsabs=QUAD_EPSABS, limit=QUAD_LIMIT, points=points or None
    )
    logger.debug("quad over [%g, %g] = %.12g (error estimate %.2e)", t0, t1, value, error)
    return float(value)

# ===== COUPLED / DECOUPLED BASIS =====

@dataclass(frozen=True)
class CDBasis:
    """Coupled state |C> and decoupled state |D> of the pump."""

    c_state: StateVector
    d_state: StateVector

    @property
    def c(self) -> npt.NDArray[np.complex128]:
        return self.c_state.amplitudes

    @property
    def d(self) -> npt.NDArray[np.complex128]:
        return self.d_state.amplitudes

    def embed(self, vector: npt.ArrayLike) -> npt.NDArray[np.complex128]:
        """Map (|C>, |e>, |a>) coordinates into the four-level basis."""
        v = np.asarray(vector, dtype=np.complex128)
        return v[0] * self.c + v[1] * ket(E) + v[2] * ket(A)


def cd_basis(alpha: float, beta: float) -> CDBasis:
    """Return |C> = cos a|m> + sin a e^{ib}|n> and |D> = -sin a|m> + cos a e^{ib}|n>."""
    phase = complex(math.cos(beta), math.sin(beta))
    c = np.array([math.cos(alpha), math.sin(alpha) * phase, 0.0, 0.0], dtype=np.complex128)
    d = np.array([-math.sin(alpha), math.cos(alpha) * phase, 0.0, 0.0], dtype=np.complex128)
    return CDBasis(StateVector(c), StateVector(d))


def hamiltonian_cd(cfg: PulseConfig, t: float) -> npt.NDArray[np.float64]:
    """Return the 3x3 Hamiltonian over (|C>, |e>, |a>); |D> is decoupled."""
    omega_p = envelope_pump(cfg, t)
    omega_a = envelope_stokes(cfg, t)
    return np.array(
        [
            [0.0, 0.5 * omega_p, 0.0],
            [0.5 * omega_p, cfg.delta, 0.5 * omega_a],
            [0.0, 0.5 * omega_a, 0.0],
        ]
    )

# ===== ADIABATIC FRAME =====

@dataclass(frozen=True)
class AdiabaticFrame:
    """Instantaneous eigenvectors and bright-state energies of ``hamiltonian_cd``."""

    psi0: StateVector
    psi_plus: StateVector
    psi_minus: StateVector
    eps_plus: float
    eps_minus: float

    @property
    def rotation(self) -> npt.NDArray[np.float64]:
        """Orthogonal matrix with columns (psi_plus, psi0, psi_minus)."""
        return np.real(
            np.column_stack([self.psi_plus.amplitudes, self.psi0.amplitudes, self.psi_minus.amplitudes])
        )


def bright_energies(delta: float, omega: float) -> tuple[float, float]:
    """Return (eps_plus, eps_minus) = (delta +- sqrt(delta^2 + omega^2)) / 2.

    The root without cancellation is computed directly and the other from
    eps_plus * eps_minus = -omega^2 / 4.
    """
    root = math.hypot(delta, omega)
    if delta >= 0.0:
        eps_plus = 0.5 * (delta + root)
        eps_minus = -0.25 * omega**2 / eps_plus if eps_plus > 0.0 else 0.0
    else:
        eps_minus = 0.5 * (delta - root)
        eps_plus = -0.25 * omega**2 / eps_minus
    return eps_plus, eps_minus


def _frame_vectors(theta: float, phi: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    st, ct = math.sin(theta), math.cos(theta)
    sp, cp = math.sin(phi), math.cos(phi)
    psi0 = np.array([ct, 0.0, -st])
    psi_plus = np.array([sp * st, cp, sp * ct])
    psi_minus = np.array([cp * st, -sp, cp * ct])
    return psi0, psi_plus, psi_minus


def _sample(cfg: PulseConfig, t: float) -> AngleSample:
    sample = mixing_angles(cfg, t)
    if sample.omega_rms == 0.0 and cfg.delta == 0.0:
        raise DegenerateFrameError(f"adiabatic frame undefined at t={t:.6g}: no field and zero detuning")
    return sample


def adiabatic_frame(cfg: PulseConfig, t: float) -> AdiabaticFrame:
    """Return the adiabatic eigenframe at time ``t``.

    Raises:
        DegenerateFrameError: If both Rabi frequencies vanish and delta = 0.
    """
    sample = _sample(cfg, t)
    psi0, psi_plus, psi_minus = _frame_vectors(sample.theta, sample.phi)
    eps_plus, eps_minus = bright_energies(cfg.delta, sample.omega_rms)
    return AdiabaticFrame(
        psi0=StateVector(psi0),
        psi_plus=StateVector(psi_plus),
        psi_minus=StateVector(psi_minus),
        eps_plus=eps_plus,
        eps_minus=eps_minus,
    )


def rotation_matrix(cfg: PulseConfig, t: float) -> npt.NDArray[np.float64]:
    """Return O(t), columns (psi_plus, psi0, psi_minus)."""
    return adiabatic_frame(cfg, t).rotation


def phase_integral(cfg: PulseConfig, t: float, branch: Branch) -> float:
    """Return the dynamic phase of a bright state accumulated from the window start."""
    if branch not in ("plus", "minus"):
        raise ValueError(f"unknown branch: {branch}")
    index = 0 if branch == "plus" else 1

    def energy(s: float) -> float:
        return bright_energies(cfg.delta, mixing_angles(cfg, s).omega_rms)[index]

    return _quad(energy, time_window(cfg)[0], t, cfg)


def adiabatic_propagator(cfg: PulseConfig, t: float) -> ComplexMatrix:
    """Return the decay-free adiabatic evolution operator from the window start to ``t``.

    The bras are the frame vectors at the window start, so the operator is
    exactly unitary and equals the identity there.
    """
    basis = cd_basis(cfg.alpha, cfg.beta)
    start = adiabatic_frame(cfg, time_window(cfg)[0])
    now = adiabatic_frame(cfg, t)

    u = outer(basis.d, basis.d)
    u += outer(basis.embed(now.psi0.amplitudes), basis.embed(start.psi0.amplitudes))
    for branch, psi_now, psi_start in (
        ("plus", now.psi_plus, start.psi_plus),
        ("minus", now.psi_minus, start.psi_minus),
    ):
        phase = np.exp(-1j * phase_integral(cfg, t, branch))
        u += phase * outer(basis.embed(psi_now.amplitudes), basis.embed(psi_start.amplitudes))
    return u

# ===== IDEAL TRANSFER =====

def final_state_map(rho_i: DensityMatrix, basis: CDBasis) -> DensityMatrix:
    """Return the state after an ideal decay-free transfer.

    |D> is untouched, |C> goes to -|a>, and the D/C coherences follow.

    Raises:
        SupportError: If ``rho_i`` has weight outside the {m, n} block.
    """
    require_block_support(rho_i)

    c, d, a = basis.c, basis.d, ket(A)
    rho = rho_i.rho
    rho_dd = np.conj(d) @ rho @ d
    rho_cc = np.conj(c) @ rho @ c
    rho_dc = np.conj(d) @ rho @ c
    result = (
        rho_dd * outer(d, d)
        + rho_cc * outer(a, a)
        - rho_dc * outer(d, a)
        - np.conj(rho_dc) * outer(a, d)
    )
    return DensityMatrix(result, rho_i.spectator_weight)


def predicted_pa(rho_i: DensityMatrix, alpha: float, beta: float) -> float:
    """Return the transferred population <C|rho|C> for pump angles (alpha, beta)."""
    rho = rho_i.rho
    return float(
        math.cos(alpha) ** 2 * rho[0, 0].real
        + math.sin(alpha) ** 2 * rho[1, 1].real
        + math.sin(2.0 * alpha) * (rho[0, 1] * complex(math.cos(beta), math.sin(beta))).real
    )

# ===== LOSSY ADIABATIC FRAME =====

def effective_hamiltonian_adiabatic(cfg: PulseConfig, decay: DecayConfig, t: float) -> ComplexMatrix:
    """Return the non-Hermitian Hamiltonian in the adiabatic basis (psi_plus, psi0, psi_minus).

    Equals O^T (H_cd - i gamma |a><a|) O - i O^T dO/dt with the amplitude rate
    gamma = gamma_a / 2. Decay from |e> is neglected.
    """
    sample = _sample(cfg, t)
    eps_plus, eps_minus = bright_energies(cfg.delta, sample.omega_rms)
    gamma = 0.5 * decay.gamma_a
    st, ct = math.sin(sample.theta), math.cos(sample.theta)
    sp, cp = math.sin(sample.phi), math.cos(sample.phi)
    td, pd = sample.theta_dot, sample.phi_dot

    # |a> components of (psi_plus, psi0, psi_minus)
    a_part = np.array([sp * ct, -st, cp * ct])
    coupling = np.array(
        [
            [0.0, -td * sp, -pd],
            [td * sp, 0.0, td * cp],
            [pd, -td * cp, 0.0],
        ]
    )
    h = np.diag([eps_plus, 0.0, eps_minus]).astype(np.complex128)
    h -= 1j * gamma * np.outer(a_part, a_part)
    h -= 1j * coupling
    return h


def propagate_statevector_adiabatic(
    b0: StateVector, cfg: PulseConfig, decay: DecayConfig, tol: float = DEFAULT_TOL
) -> StateVector:
    """Integrate i dA/dt = H'(t) A over the pulse window.

    Args:
        b0: Initial amplitudes over (|C>, |e>, |a>).

    Returns:
        Adiabatic-basis amplitudes (A_plus, A_0, A_minus) at the window end.
    """
    if b0.dim != 3:
        raise DimensionError(f"expected amplitudes over (C, e, a), got {b0.dim} entries")
    t0, t1 = time_window(cfg)
    a0 = rotation_matrix(cfg, t0).T @ b0.amplitudes

    def fun(t: float, y: np.ndarray) -> np.ndarray:
        return -1j * (effective_hamiltonian_adiabatic(cfg, decay, t) @ y)

    _, ys = integrate_adaptive(
        fun, t0, t1, a0, tol=tol, max_step=cfg.width / 20.0, first_step=cfg.width / 1000.0
    )
    return StateVector(ys[-1], norm_tol=STATEVECTOR_NORM_TOL)

# ===== DECAY-CORRECTED TRANSFER =====

def _loss_rate(cfg: PulseConfig, gamma: float, t: float) -> float:
    """Dark-state loss rate divided by 2 gamma, capped at the bare |a> rate."""
    s = mixing_angles(cfg, t)
    cos2 = math.cos(s.theta) ** 2
    q = 0.25 * s.omega_rms**2 + s.phi_dot**2
    num = cfg.delta**2 * s.theta_dot**2 * cos2 + q**2 * math.sin(s.theta) ** 2
    den = cfg.delta**2 * gamma**2 * cos2**2 + q**2
    if den == 0.0:
        return math.sin(s.theta) ** 2
    return min(num / den, 1.0)


def pa_with_decay(p_a: float, cfg: PulseConfig, gamma_a: float) -> float:
    """Return the transferred population after loss from |a> during the pulses.

    ``p_a * exp(-2 gamma * integral)`` over the pulse window, where gamma is the
    amplitude rate gamma_a / 2 and the integrand is the adiabatically eliminated
    dark-state loss rate.
    """
    if p_a == 0.0:
        return 0.0
    if gamma_a == 0.0:
        return p_a
    gamma = 0.5 * gamma_a
    t0, t1 = time_window(cfg)
    integral = _quad(lambda t: _loss_rate(cfg, gamma, t), t0, t1, cfg)
    return p_a * math.exp(-2.0 * gamma * integral)


def attenuation_factor(cfg: PulseConfig, gamma_a: float) -> float:
    """Return the fraction of a unit transfer that survives to the window end."""
    return pa_with_decay(1.0, cfg, gamma_a)


def dark_state_projection(rho: DensityMatrix, cfg: PulseConfig) -> float:
    """Return <D|rho|D> for the pump angles of ``cfg``."""
    return rho.projection(cd_basis(cfg.alpha, cfg.beta).d)


def coupled_state_projection(rho: DensityMatrix, cfg: PulseConfig) -> float:
    """Return <C|rho|C> for the pump angles of ``cfg``."""
    return rho.projection(cd_basis(cfg.alpha, cfg.beta).c)


