"""Numerical propagation of the driven, lossy four-level master equation.

The loss terms are anticommutators only: population that decays from |e> or
|a> leaves the simulated block. With L = H - (i/2)(G_e |e><e| + G_a |a><a|)
the equation reads ``drho/dt = -i (L rho - rho L^dagger)``.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import numpy.typing as npt
from scipy.integrate import DOP853
from scipy.linalg import expm

from stirap_tomo.errors import IntegrationError, PhysicalityError
from stirap_tomo.pulses import envelope_stokes, pump_components, time_window
from stirap_tomo.quantum_core import (
    DIM,
    ComplexMatrix,
    DensityMatrix,
    A,
    E,
    M,
    N,
    hermitian_defect,
)
from stirap_tomo.state import DecayConfig, PulseConfig

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
# Invariant violations beyond this abort a propagation
ABORT_TOL = 1e-6
# Hermiticity of the raw accepted steps
HERMITIAN_TOL = 1e-10

LABELS = ("m", "n", "e", "a")

# ===== OPERATORS =====

def hamiltonian_bare(cfg: PulseConfig, t: float) -> ComplexMatrix:
    """Return the RWA Hamiltonian over (|m>, |n>, |e>, |a>) at time ``t``."""
    omega_m, omega_n = pump_components(cfg, t)
    omega_a = envelope_stokes(cfg, t)
    h = np.zeros((DIM, DIM), dtype=np.complex128)
    h[E, E] = cfg.delta
    for index, omega in ((M, omega_m), (N, omega_n), (A, omega_a)):
        h[index, E] = 0.5 * omega
        h[E, index] = 0.5 * np.conj(omega)
    return h


def loss_operator(decay: DecayConfig) -> ComplexMatrix:
    """Return ``(G_e/2)|e><e| + (G_a/2)|a><a|``."""
    k = np.zeros((DIM, DIM), dtype=np.complex128)
    k[E, E] = 0.5 * decay.gamma_e
    k[A, A] = 0.5 * decay.gamma_a
    return k


def effective_generator(cfg: PulseConfig, decay: DecayConfig, t: float) -> ComplexMatrix:
    """Return the non-Hermitian ``L = H - i K`` driving both rho and amplitudes."""
    return hamiltonian_bare(cfg, t) - 1j * loss_operator(decay)


def _rhs(rho: ComplexMatrix, generator: ComplexMatrix) -> ComplexMatrix:
    return -1j * (generator @ rho - rho @ generator.conj().T)


def lindblad_rhs(
    rho: DensityMatrix | npt.ArrayLike, H: npt.ArrayLike, decay: DecayConfig
) -> ComplexMatrix:
    """Return ``-i[H, rho] - (G_e/2){|e><e|, rho} - (G_a/2){|a><a|, rho}``."""
    arr = rho.rho if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=np.complex128)
    generator = np.asarray(H, dtype=np.complex128) - 1j * loss_operator(decay)
    return _rhs(arr, generator)

# ===== INTEGRATOR =====

def integrate_adaptive(
    fun: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    t1: float,
    y0: np.ndarray,
    *,
    tol: float,
    max_step: float,
    first_step: float,
    on_step: Optional[Callable[[float, np.ndarray], None]] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Step an embedded Runge-Kutta 8(5,3) pair from ``t0`` to ``t1``.

    ``on_step`` sees every accepted step and may raise to abort.

    Returns:
        Tuple of (times, states) including the initial point.

    Raises:
        IntegrationError: If the step size underflows.
    """
    solver = DOP853(
        fun, t0, np.asarray(y0, dtype=np.complex128), t1,
        max_step=max_step, rtol=tol, atol=tol, first_step=min(first_step, t1 - t0),
    )
    times = [t0]
    states = [solver.y.copy()]
    while solver.status == "running":
        message = solver.step()
        if solver.status == "failed":
            raise IntegrationError(f"stiff failure, step size underflow: {message}", t=solver.t)
        if on_step is not None:
            on_step(solver.t, solver.y)
        times.append(solver.t)
        states.append(solver.y.copy())
    logger.debug("integrated [%g, %g] in %d steps (%d evaluations)", t0, t1, len(times) - 1, solver.nfev)
    return np.asarray(times), np.asarray(states)

# ===== TRAJECTORIES =====

@dataclass(frozen=True)
class Trajectory:
    """Accepted integrator steps of one propagation.

    ``signal`` holds the running integral of G_a rho_aa (photons emitted from
    |a>), ``excited_loss`` the running integral of G_e rho_ee.
    """

    times: np.ndarray
    rho: np.ndarray
    signal: np.ndarray
    excited_loss: np.ndarray
    raw_hermitian_defect: np.ndarray
    spectator_weight: float = 0.0

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def max_hermitian_defect(self) -> float:
        """Largest Hermiticity defect of the integrator output before symmetrisation."""
        return float(self.raw_hermitian_defect.max())

    @property
    def signal_integral(self) -> float:
        return float(self.signal[-1])

    @property
    def states(self) -> tuple[DensityMatrix, ...]:
        return tuple(DensityMatrix(r, self.spectator_weight, relaxed=True) for r in self.rho)

    @property
    def final_state(self) -> DensityMatrix:
        return DensityMatrix(self.rho[-1], self.spectator_weight, relaxed=True)

    @property
    def trace(self) -> np.ndarray:
        return np.real(np.einsum("kii->k", self.rho))

    def population(self, index: int) -> np.ndarray:
        return np.real(self.rho[:, index, index])

    def projection(self, vector: npt.ArrayLike) -> np.ndarray:
        """Return ``<v|rho(t)|v>`` along the trajectory."""
        vec = np.asarray(vector, dtype=np.complex128)
        return np.real(np.einsum("i,kij,j->k", vec.conj(), self.rho, vec))

    def csv_header(self) -> list[str]:
        entries = [f"{part}_{LABELS[i]}{LABELS[j]}" for i in range(DIM) for j in range(DIM) for part in ("re", "im")]
        return ["t", *entries, "signal_integral"]

    def to_csv_rows(self) -> list[list[float]]:
        flat = self.rho.reshape(len(self), DIM * DIM)
        interleaved = np.stack([flat.real, flat.imag], axis=-1).reshape(len(self), 2 * DIM * DIM)
        return [
            [float(t), *map(float, row), float(s)]
            for t, row, s in zip(self.times, interleaved, self.signal)
        ]


def propagate(
    rho0: DensityMatrix,
    cfg: PulseConfig,
    decay: DecayConfig,
    t0: Optional[float] = None,
    t1: Optional[float] = None,
    tol: float = DEFAULT_TOL,
) -> Trajectory:
    """Integrate the master equation from ``t0`` to ``t1``.

    The 16 matrix entries and the two loss integrals are stepped together, so
    the trace balance holds at every accepted step. Omitted bounds default to
    the pulse window.

    Raises:
        ValueError: If ``t1 <= t0``.
        IntegrationError: On step-size underflow.
        PhysicalityError: If an accepted step breaks Hermiticity, positivity or
            trace monotonicity by more than 1e-6.
    """
    window = time_window(cfg)
    t0 = window[0] if t0 is None else t0
    t1 = window[1] if t1 is None else t1
    if t1 <= t0:
        raise ValueError(f"propagation interval is empty: t0={t0}, t1={t1}")

    size = DIM * DIM
    gamma_e, gamma_a = decay.gamma_e, decay.gamma_a

    def fun(t: float, y: np.ndarray) -> np.ndarray:
        rho = y[:size].reshape(DIM, DIM)
        dy = np.empty_like(y)
        dy[:size] = _rhs(rho, effective_generator(cfg, decay, t)).ravel()
        dy[size] = gamma_a * rho[A, A].real
        dy[size + 1] = gamma_e * rho[E, E].real
        return dy

    last_trace = rho0.trace

    def check(t: float, y: np.ndarray) -> None:
        nonlocal last_trace
        rho = y[:size].reshape(DIM, DIM)
        defect = hermitian_defect(rho)
        if defect > ABORT_TOL:
            raise PhysicalityError(f"Hermiticity lost at t={t:.6g} (defect {defect:.3e})")
        lowest = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
        if lowest < -ABORT_TOL:
            raise PhysicalityError(f"positivity lost at t={t:.6g} (eigenvalue {lowest:.3e})")
        trace = float(np.trace(rho).real)
        if trace > last_trace + ABORT_TOL:
            raise PhysicalityError(f"trace grew at t={t:.6g} ({last_trace:.12f} -> {trace:.12f})")
        last_trace = trace

    y0 = np.concatenate([rho0.rho.ravel(), np.zeros(2, dtype=np.complex128)])
    times, ys = integrate_adaptive(
        fun, t0, t1, y0,
        tol=tol, max_step=cfg.width / 20.0, first_step=cfg.width / 1000.0, on_step=check,
    )
    raw = ys[:, :size].reshape(-1, DIM, DIM)
    defects = np.abs(raw - raw.conj().transpose(0, 2, 1)).max(axis=(1, 2))
    if defects.max() > HERMITIAN_TOL:
        logger.warning("Hermiticity defect %.3e exceeds %.0e on an accepted step", defects.max(), HERMITIAN_TOL)
    rho = 0.5 * (raw + raw.conj().transpose(0, 2, 1))
    return Trajectory(
        times=times,
        rho=rho,
        signal=ys[:, size].real.copy(),
        excited_loss=ys[:, size + 1].real.copy(),
        raw_hermitian_defect=defects,
        spectator_weight=rho0.spectator_weight,
    )


def propagate_oracle(
    rho0: DensityMatrix,
    cfg: PulseConfig,
    decay: DecayConfig,
    t0: Optional[float] = None,
    t1: Optional[float] = None,
    n_steps: int = 20000,
) -> DensityMatrix:
    """Piecewise-constant reference propagation.

    Each sub-interval uses the generator sampled at its midpoint and the exact
    congruence ``rho -> W rho W^dagger`` with ``W = exp(-i L dt)``.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be at least 1, got {n_steps}")
    window = time_window(cfg)
    t0 = window[0] if t0 is None else t0
    t1 = window[1] if t1 is None else t1
    dt = (t1 - t0) / n_steps

    total = np.eye(DIM, dtype=np.complex128)
    for k in range(n_steps):
        t_mid = t0 + (k + 0.5) * dt
        total = expm(-1j * effective_generator(cfg, decay, t_mid) * dt) @ total
    rho = total @ rho0.rho @ total.conj().T
    return DensityMatrix(0.5 * (rho + rho.conj().T), rho0.spectator_weight, relaxed=True)
