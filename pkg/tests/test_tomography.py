import logging
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from stirap_tomo.adiabatic import cd_basis, predicted_pa
from stirap_tomo.errors import SupportError, UnidentifiableError, UnrecoverableAttenuationError
from stirap_tomo.quantum_core import M, DensityMatrix, expectation, ket, outer, random_density_matrix
from stirap_tomo.state import BlockEstimate, DecayConfig, MeasurementRecord, ProtocolSetting
from stirap_tomo.tomography import (
    calibration_factor,
    design_row,
    four_step_settings,
    observable_v,
    project_to_physical,
    reconstruct,
    run_measurement,
    transfer_efficiency,
    uniform_settings,
)


def synthetic_records(rho, settings, noise=None):
    records = []
    for step, setting in enumerate(settings):
        p = predicted_pa(rho, setting.alpha, setting.beta)
        if noise is not None:
            p = float(np.clip(p + noise[step], 0.0, 1.0))
        records.append(MeasurementRecord(setting=setting, raw_signal=p, calibrated_pa=p, step=step))
    return records


def records_from(populations, settings=None):
    settings = settings or four_step_settings()
    return [
        MeasurementRecord(setting=s, raw_signal=p, calibrated_pa=p, step=k)
        for k, (s, p) in enumerate(zip(settings, populations))
    ]

# ===== OBSERVABLE =====

def test_observable_examples():
    assert_allclose(observable_v(0.0, 1.3), np.outer(ket(M), ket(M)))
    rho = DensityMatrix.from_block(np.eye(2) / 2)
    assert expectation(rho, observable_v(math.pi / 4, 0.0)) == pytest.approx(0.5)


def test_observable_is_coupled_projector(rng):
    for alpha, beta in zip(rng.uniform(0, math.pi / 2, 20), rng.uniform(-math.pi, math.pi, 20)):
        v = observable_v(alpha, beta)
        c = cd_basis(alpha, beta).c
        assert_allclose(v, outer(c, c), atol=1e-15)
        assert np.trace(v).real == pytest.approx(1.0)
        assert_allclose(np.linalg.eigvalsh(v), [0.0, 0.0, 0.0, 1.0], atol=1e-15)

# ===== SETTINGS =====

def test_four_step_settings():
    settings = four_step_settings("integrated_fluorescence")
    assert len(settings) == 4
    assert [(s.alpha, s.beta) for s in settings[:2]] == [(0.0, 0.0), (math.pi / 2, 0.0)]
    assert settings[2].alpha == settings[3].alpha
    assert settings[2].beta != settings[3].beta
    assert all(s.signal_mode == "integrated_fluorescence" for s in settings)
    design = np.array([design_row(s) for s in settings])
    assert abs(np.linalg.det(design)) == pytest.approx(1.0)


def test_uniform_settings_grid():
    settings = uniform_settings(3, 4)
    assert len(settings) == 12
    assert {s.alpha for s in settings} == {0.0, math.pi / 4, math.pi / 2}
    betas = sorted({s.beta for s in settings})
    assert betas[-1] == pytest.approx(math.pi)
    assert all(-math.pi < b <= math.pi for b in betas)
    with pytest.raises(ValueError):
        uniform_settings(1, 4)


def test_design_row_predicts_transfer(rng):
    rho = random_density_matrix(rng, "mixed")
    x = np.array([rho.rho[0, 0].real, rho.rho[1, 1].real, rho.rho[0, 1].real, rho.rho[0, 1].imag])
    for setting in uniform_settings(4, 5):
        assert design_row(setting) @ x == pytest.approx(predicted_pa(rho, setting.alpha, setting.beta), abs=1e-14)

# ===== RECONSTRUCTION =====

def test_reconstruct_pure_m():
    estimate = reconstruct(records_from([1.0, 0.0, 0.5, 0.5]))
    assert estimate.rho_mm == pytest.approx(1.0)
    assert estimate.rho_nn == pytest.approx(0.0, abs=1e-12)
    assert estimate.rho_mn == pytest.approx(0.0, abs=1e-12)
    assert estimate.settings_used == 4
    assert estimate.residual == pytest.approx(0.0, abs=1e-12)


def test_reconstruct_coherence_by_hand():
    estimate = reconstruct(records_from([0.5, 0.5, 0.8, 0.4]))
    assert estimate.rho_mn == pytest.approx(0.3 - 0.1j)
    assert estimate.physical


def test_reconstruct_is_exact_on_synthetic_records(rng):
    for kind in ("pure", "mixed"):
        for _ in range(10):
            rho = random_density_matrix(rng, kind)
            estimate = reconstruct(synthetic_records(rho, uniform_settings(3, 4)))
            assert_allclose(estimate.matrix(), rho.block, atol=1e-12)
            assert estimate.residual <= 1e-12


def test_reconstruct_rejects_unresolved_direction():
    settings = [ProtocolSetting(alpha=a, beta=0.0) for a in (0.0, math.pi / 8, math.pi / 4, math.pi / 2)]
    with pytest.raises(UnidentifiableError, match="Im rho_mn"):
        reconstruct(records_from([1.0, 0.8, 0.5, 0.0], settings))
    with pytest.raises(UnidentifiableError):
        reconstruct(records_from([1.0, 0.0, 0.5]))


def test_noise_perturbs_estimate_linearly(rng):
    settings = four_step_settings()
    for _ in range(20):
        rho = random_density_matrix(rng, "mixed")
        records = synthetic_records(rho, settings, noise=rng.normal(0.0, 1e-3, size=4))
        estimate = reconstruct(records)
        assert np.abs(estimate.matrix() - rho.block).max() <= 5e-3


def test_unphysical_estimate_is_flagged_and_repaired(caplog):
    with caplog.at_level(logging.WARNING, logger="stirap_tomo.tomography"):
        estimate = reconstruct(records_from([0.3, 0.3, 0.8, 0.3]))
    assert not estimate.physical
    assert estimate.cauchy_schwarz_excess == pytest.approx(0.16)
    assert "violates" in caplog.text

    repaired = project_to_physical(estimate)
    assert repaired.physical
    assert repaired.rho_mm + repaired.rho_nn == pytest.approx(0.6)
    assert np.linalg.eigvalsh(repaired.matrix()).min() >= -1e-12
    assert repaired.settings_used == estimate.settings_used


def test_project_to_physical_keeps_physical_estimate():
    estimate = BlockEstimate(rho_mm=0.6, rho_nn=0.4, rho_mn=0.3 - 0.2j, residual=0.0, settings_used=4)
    repaired = project_to_physical(estimate)
    assert_allclose(repaired.matrix(), estimate.matrix(), atol=1e-14)

# ===== SIMULATED MEASUREMENT =====

def test_measurement_transfers_m(adiabatic_pulse, no_decay):
    record = run_measurement(DensityMatrix.pure(ket(M)), ProtocolSetting(alpha=0.0, beta=0.0), adiabatic_pulse, no_decay)
    assert record.calibrated_pa == pytest.approx(1.0, abs=1e-3)
    assert record.calibration_factor == 1.0


def test_measurement_of_decoupled_state(adiabatic_pulse, no_decay):
    setting = ProtocolSetting(alpha=math.pi / 4, beta=0.0)
    rho_d = DensityMatrix.pure(cd_basis(setting.alpha, setting.beta).d)
    record = run_measurement(rho_d, setting, adiabatic_pulse, no_decay, step=2)
    assert record.calibrated_pa <= 1e-3
    assert record.step == 2


@pytest.mark.parametrize("alpha, beta", [(0.0, 0.0), (0.5, 2.0), (math.pi / 4, -math.pi / 2)])
def test_measurement_of_mixed_block(adiabatic_pulse, no_decay, alpha, beta):
    rho = DensityMatrix.from_block(np.eye(2) / 2)
    record = run_measurement(rho, ProtocolSetting(alpha=alpha, beta=beta), adiabatic_pulse, no_decay)
    assert record.calibrated_pa == pytest.approx(0.5, abs=2e-3)


def test_measurement_requires_block_support(adiabatic_pulse, no_decay):
    rho = DensityMatrix(np.diag([0.5, 0.0, 0.0, 0.5]))
    with pytest.raises(SupportError):
        run_measurement(rho, ProtocolSetting(alpha=0.0, beta=0.0), adiabatic_pulse, no_decay)


def test_strong_decay_cannot_be_calibrated(reference_pulse):
    decay = DecayConfig(gamma_e=0.1, gamma_a=5.0)
    with pytest.raises(UnrecoverableAttenuationError):
        calibration_factor(reference_pulse, decay, "final_population", "analytic")
    with pytest.raises(UnrecoverableAttenuationError):
        run_measurement(
            DensityMatrix.pure(ket(M)), ProtocolSetting(alpha=0.0, beta=0.0), reference_pulse, decay, factor=1e-9
        )


def test_simulated_calibration_without_decay(adiabatic_pulse, no_decay):
    assert transfer_efficiency(adiabatic_pulse, no_decay) == pytest.approx(1.0, abs=1e-3)
    assert calibration_factor(adiabatic_pulse, no_decay, calibration="simulated") == pytest.approx(1.0, abs=1e-3)
    assert calibration_factor(adiabatic_pulse, no_decay) == 1.0


def test_fluorescence_calibration_complements_survival(adiabatic_pulse):
    decay = DecayConfig(gamma_a=0.5)
    final = calibration_factor(adiabatic_pulse, decay, "final_population")
    fluorescence = calibration_factor(adiabatic_pulse, decay, "integrated_fluorescence")
    assert final + fluorescence == pytest.approx(1.0)


def test_round_trip_with_simulated_calibration(reference_pulse, no_decay, rng):
    rho = random_density_matrix(rng, "mixed")
    factor = calibration_factor(reference_pulse, no_decay, calibration="simulated")
    records = [
        run_measurement(rho, setting, reference_pulse, no_decay, factor=factor, step=k)
        for k, setting in enumerate(four_step_settings())
    ]
    estimate = reconstruct(records)
    assert_allclose(estimate.matrix(), rho.block, atol=5e-3)


def test_round_trip_with_fluorescence_readout(adiabatic_pulse, rng):
    decay = DecayConfig(gamma_a=0.5)
    rho = random_density_matrix(rng, "pure")
    settings = four_step_settings("integrated_fluorescence")
    factor = calibration_factor(adiabatic_pulse, decay, "integrated_fluorescence")
    records = [
        run_measurement(rho, setting, adiabatic_pulse, decay, factor=factor, step=k)
        for k, setting in enumerate(settings)
    ]
    estimate = reconstruct(records)
    assert_allclose(estimate.matrix(), rho.block, atol=2e-2)


@pytest.mark.slow
@pytest.mark.parametrize("kind", ["pure", "mixed"])
def test_round_trip_on_many_blocks(reference_pulse, adiabatic_pulse, no_decay, rng, kind):
    settings = four_step_settings()
    factor = calibration_factor(reference_pulse, no_decay, calibration="simulated")
    fluorescence = DecayConfig(gamma_a=0.5)
    fl_settings = four_step_settings("integrated_fluorescence")
    fl_factor = calibration_factor(adiabatic_pulse, fluorescence, "integrated_fluorescence")
    for _ in range(25):
        rho = random_density_matrix(rng, kind)
        records = [
            run_measurement(rho, s, reference_pulse, no_decay, factor=factor, step=k) for k, s in enumerate(settings)
        ]
        assert_allclose(reconstruct(records).matrix(), rho.block, atol=5e-3)
        records = [
            run_measurement(rho, s, adiabatic_pulse, fluorescence, factor=fl_factor, step=k)
            for k, s in enumerate(fl_settings)
        ]
        assert_allclose(reconstruct(records).matrix(), rho.block, atol=2e-2)
