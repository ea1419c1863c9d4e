import logging
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from stirap_tomo import dynamics
from stirap_tomo.adiabatic import cd_basis, hamiltonian_cd
from stirap_tomo.dynamics import (
    hamiltonian_bare,
    lindblad_rhs,
    propagate,
    propagate_oracle,
)
from stirap_tomo.quantum_core import (
    A,
    DIM,
    E,
    M,
    N,
    DensityMatrix,
    hermitian_defect,
    ket,
    min_eigenvalue,
    purity,
    random_density_matrix,
)
from stirap_tomo.state import DecayConfig


def full_density_matrix(rng):
    """Random state with weight on all four levels."""
    g = rng.normal(size=(DIM, DIM)) + 1j * rng.normal(size=(DIM, DIM))
    rho = g @ g.conj().T
    rho /= np.trace(rho).real
    return DensityMatrix(0.5 * (rho + rho.conj().T))

# ===== OPERATORS =====

def test_hamiltonian_without_fields(reference_pulse):
    h = hamiltonian_bare(reference_pulse.with_updates(omega_max=0.0), 0.4)
    assert_allclose(h, np.diag([0.0, 0.0, 0.3, 0.0]))


def test_hamiltonian_at_pump_peak(reference_pulse):
    h = hamiltonian_bare(reference_pulse, reference_pulse.delay_tau / 2)
    assert h[M, E] == pytest.approx(3.0)
    assert h[N, E] == 0.0
    assert hermitian_defect(h) == 0.0


def test_hamiltonian_in_coupled_basis(reference_pulse, rng):
    for alpha, beta, t in zip(rng.uniform(0, math.pi / 2, 5), rng.uniform(-math.pi, math.pi, 5), rng.uniform(-4, 4, 5)):
        cfg = reference_pulse.with_updates(alpha=alpha, beta=beta)
        basis = cd_basis(alpha, beta)
        u = np.column_stack([basis.c, basis.d, ket(E), ket(A)])
        h = u.conj().T @ hamiltonian_bare(cfg, t) @ u
        assert_allclose(h[1, :], 0.0, atol=1e-14)
        assert_allclose(h[:, 1], 0.0, atol=1e-14)
        keep = [0, 2, 3]
        assert_allclose(h[np.ix_(keep, keep)], hamiltonian_cd(cfg, t), atol=1e-14)


def test_rhs_pure_decay():
    rho = DensityMatrix(np.diag([0.1, 0.2, 0.3, 0.4]))
    drho = lindblad_rhs(rho, np.zeros((DIM, DIM)), DecayConfig(gamma_a=1.0))
    assert drho[A, A] == pytest.approx(-0.4)
    assert drho[E, E] == 0.0


def test_rhs_annihilates_decoupled_state(reference_pulse, rng):
    for alpha, beta, t in zip(rng.uniform(0, math.pi / 2, 5), rng.uniform(-math.pi, math.pi, 5), rng.uniform(-4, 4, 5)):
        cfg = reference_pulse.with_updates(alpha=alpha, beta=beta)
        rho = DensityMatrix.pure(cd_basis(alpha, beta).d)
        drho = lindblad_rhs(rho, hamiltonian_bare(cfg, t), DecayConfig(gamma_e=0.7, gamma_a=1.3))
        assert_allclose(drho, 0.0, atol=1e-14)


def test_rhs_trace_identity(reference_pulse, rng):
    decay = DecayConfig(gamma_e=0.4, gamma_a=1.1)
    for _ in range(5):
        rho = full_density_matrix(rng)
        drho = lindblad_rhs(rho, hamiltonian_bare(reference_pulse, rng.uniform(-3, 3)), decay)
        expected = -decay.gamma_e * rho.population(E) - decay.gamma_a * rho.population(A)
        assert np.trace(drho) == pytest.approx(expected, abs=1e-14)

# ===== PROPAGATION =====

def test_free_evolution_leaves_block_unchanged(reference_pulse, rng):
    rho0 = random_density_matrix(rng, "mixed")
    traj = propagate(rho0, reference_pulse.with_updates(omega_max=0.0), DecayConfig())
    assert_allclose(traj.final_state.rho, rho0.rho, atol=1e-9)


def test_propagate_rejects_empty_interval(reference_pulse):
    rho0 = DensityMatrix.pure(ket(M))
    with pytest.raises(ValueError):
        propagate(rho0, reference_pulse, DecayConfig(), t0=1.0, t1=1.0)


def test_transfer_empties_coupled_state(adiabatic_pulse, reference_decay):
    rho0 = DensityMatrix.pure(ket(M))
    traj = propagate(rho0, adiabatic_pulse, reference_decay)
    assert traj.projection(ket(M))[-1] <= 1e-3
    assert traj.population(E).max() <= 1e-2
    assert traj.population(A)[-1] >= 0.95


def test_reference_pulses_transfer_most_population(reference_pulse, reference_decay):
    rho0 = DensityMatrix.pure(ket(M))
    traj = propagate(rho0, reference_pulse, reference_decay)
    assert traj.projection(ket(M))[-1] <= 0.1
    assert traj.population(E).max() <= 0.25
    assert traj.population(A)[-1] >= 0.5


def test_trace_balance_with_strong_auxiliary_decay(reference_pulse, rng):
    decay = DecayConfig(gamma_e=0.1, gamma_a=3.0)
    rho0 = random_density_matrix(rng, "mixed", spectator_weight=0.2)
    traj = propagate(rho0, reference_pulse, decay)
    deficit = traj.trace[0] - traj.trace
    assert_allclose(deficit, traj.signal + traj.excited_loss, atol=1e-7)
    assert traj.trace[0] - traj.trace[-1] == pytest.approx(traj.signal_integral + traj.excited_loss[-1], abs=1e-6)
    assert traj.spectator_weight == 0.2


def test_decoupled_population_is_conserved(reference_pulse, rng):
    decay = DecayConfig(gamma_e=0.1, gamma_a=1.0)
    for alpha, beta in [(0.3, 1.0), (math.pi / 4, -math.pi / 2)]:
        cfg = reference_pulse.with_updates(alpha=alpha, beta=beta)
        rho0 = random_density_matrix(rng, "mixed")
        traj = propagate(rho0, cfg, decay)
        d_pop = traj.projection(cd_basis(alpha, beta).d)
        assert_allclose(d_pop, d_pop[0], atol=1e-8)


def test_every_step_is_physical(reference_pulse, rng):
    decay = DecayConfig(gamma_e=0.1, gamma_a=0.5)
    rho0 = random_density_matrix(rng, "pure")
    traj = propagate(rho0, reference_pulse.with_updates(alpha=0.6, beta=0.2), decay)
    assert np.all(np.diff(traj.trace) <= 1e-12)
    assert len(traj.raw_hermitian_defect) == len(traj)
    assert traj.max_hermitian_defect <= 1e-10
    for rho in traj.rho:
        assert min_eigenvalue(rho) >= -1e-8
    assert len(traj.states) == len(traj)


def test_hermiticity_is_measured_before_symmetrisation(reference_pulse, monkeypatch, caplog):
    exact = dynamics._rhs
    leak = np.zeros((DIM, DIM), dtype=np.complex128)
    leak[M, N] = 1e-8

    def leaky_rhs(rho, generator):
        return exact(rho, generator) + leak

    monkeypatch.setattr(dynamics, "_rhs", leaky_rhs)
    with caplog.at_level(logging.WARNING, logger="stirap_tomo.dynamics"):
        traj = propagate(DensityMatrix.pure(ket(M)), reference_pulse, DecayConfig())
    assert traj.max_hermitian_defect > 1e-10
    assert "Hermiticity defect" in caplog.text
    assert max(hermitian_defect(rho) for rho in traj.rho) == 0.0


@pytest.mark.slow
@pytest.mark.parametrize("gamma_a", [0.0, 0.1, 0.5, 1.0, 2.0, 3.0])
def test_transfer_across_auxiliary_decay(adiabatic_pulse, rng, gamma_a):
    cfg = adiabatic_pulse.with_updates(omega_max=25.0)
    decay = DecayConfig(gamma_e=0.1, gamma_a=gamma_a)
    for _ in range(20):
        alpha, beta = rng.uniform(0.0, math.pi / 2), rng.uniform(-math.pi, math.pi)
        basis = cd_basis(alpha, beta)
        rho0 = random_density_matrix(rng, "mixed", spectator_weight=0.0)
        traj = propagate(rho0, cfg.with_updates(alpha=alpha, beta=beta), decay)
        assert traj.projection(basis.c)[-1] <= 1e-3
        assert traj.population(E).max() <= 1e-2
        d_pop = traj.projection(basis.d)
        assert_allclose(d_pop, d_pop[0], atol=1e-8)
        assert traj.max_hermitian_defect <= 1e-10
        assert np.all(np.diff(traj.trace) <= 1e-12)
        assert_allclose(traj.trace[0] - traj.trace, traj.signal + traj.excited_loss, atol=1e-7)
        assert min(min_eigenvalue(rho) for rho in traj.rho) >= -1e-8


def test_lossless_evolution_preserves_trace_and_purity(reference_pulse, rng):
    rho0 = random_density_matrix(rng, "mixed", spectator_weight=0.0)
    traj = propagate(rho0, reference_pulse.with_updates(alpha=1.0, beta=0.5), DecayConfig(), tol=1e-10)
    assert_allclose(traj.trace, 1.0, atol=1e-9)
    purities = [purity(DensityMatrix(r, relaxed=True)) for r in traj.rho]
    assert_allclose(purities, purity(rho0), atol=1e-8)


def test_csv_rows_follow_header(reference_pulse):
    traj = propagate(DensityMatrix.pure(ket(M)), reference_pulse, DecayConfig(gamma_a=1.0))
    header = traj.csv_header()
    rows = traj.to_csv_rows()
    assert header[0] == "t" and header[-1] == "signal_integral"
    assert header[1:3] == ["re_mm", "im_mm"]
    assert len(header) == 2 + 2 * DIM * DIM
    assert all(len(row) == len(header) for row in rows)
    assert rows[-1][0] == traj.times[-1]
    assert rows[-1][-1] == traj.signal_integral

# ===== ORACLE =====

def test_oracle_is_exact_for_constant_generator(reference_pulse, rng):
    cfg = reference_pulse.with_updates(omega_max=0.0)
    decay = DecayConfig(gamma_e=0.1, gamma_a=0.4)
    rho0 = full_density_matrix(rng)
    one = propagate_oracle(rho0, cfg, decay, t0=-2.0, t1=3.0, n_steps=1)
    many = propagate_oracle(rho0, cfg, decay, t0=-2.0, t1=3.0, n_steps=100)
    assert_allclose(one.rho, many.rho, atol=1e-12)


def test_oracle_preserves_positivity(reference_pulse, reference_decay, rng):
    for _ in range(3):
        rho = propagate_oracle(full_density_matrix(rng), reference_pulse, reference_decay, n_steps=200)
        assert min_eigenvalue(rho.rho) >= -1e-12


def test_oracle_matches_integrator_over_window(reference_pulse, reference_decay, rng):
    cfg = reference_pulse.with_updates(alpha=0.8, beta=-0.4)
    rho0 = random_density_matrix(rng, "mixed")
    traj = propagate(rho0, cfg, reference_decay)
    oracle = propagate_oracle(rho0, cfg, reference_decay, n_steps=20000)
    assert np.abs(traj.final_state.rho - oracle.rho).max() <= 2e-5


def _extrapolated_oracle(rho0, cfg, decay, t0, t1, n_steps):
    coarse = propagate_oracle(rho0, cfg, decay, t0=t0, t1=t1, n_steps=n_steps).rho
    fine = propagate_oracle(rho0, cfg, decay, t0=t0, t1=t1, n_steps=2 * n_steps).rho
    return (4.0 * fine - coarse) / 3.0


def test_extrapolated_oracle_matches_integrator(reference_pulse, reference_decay, rng):
    rho0 = random_density_matrix(rng, "mixed")
    cfg = reference_pulse.with_updates(alpha=0.5, beta=1.2)
    traj = propagate(rho0, cfg, reference_decay, t0=-3.0, t1=3.0, tol=1e-10)
    reference = _extrapolated_oracle(rho0, cfg, reference_decay, -3.0, 3.0, 2000)
    assert np.abs(traj.final_state.rho - reference).max() <= 1e-6


@pytest.mark.slow
def test_extrapolated_oracle_on_random_configurations(reference_pulse, rng):
    for _ in range(10):
        cfg = reference_pulse.with_updates(
            omega_max=rng.uniform(3.0, 10.0),
            delay_tau=rng.uniform(1.0, 4.0),
            delta=rng.uniform(-1.0, 1.0),
            alpha=rng.uniform(0.0, math.pi / 2),
            beta=rng.uniform(-math.pi, math.pi),
        )
        decay = DecayConfig(gamma_e=rng.uniform(0.0, 0.5), gamma_a=rng.uniform(0.0, 3.0))
        rho0 = random_density_matrix(rng, "mixed")
        traj = propagate(rho0, cfg, decay, t0=-3.0, t1=3.0, tol=1e-10)
        reference = _extrapolated_oracle(rho0, cfg, decay, -3.0, 3.0, 2000)
        assert np.abs(traj.final_state.rho - reference).max() <= 1e-6
