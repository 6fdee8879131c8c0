import numpy as np
import pytest

from src.analysis import constraint_residual, general_steady_state_from_ratio, relative_change
from src.coeffs import Drive, build_coefficients
from src.errors import PoleCrossingError
from src.evolve import (Basis, DensityMatrix, EvolveConfig, TlmeTrajectory, evolve_boson_tlme,
                        evolve_qubit_tlme, exact_first_moment, parse_initial_state,
                        weak_excitation_flag)
from src.presets import get_preset
from src.spectral import KernelSampler, SpectralModel
from src.volterra import CouplingMatrix, solve_volterra, trajectory_from_values


def _coefficients(model, detuning=0.0, drive=0.0, step=0.005, t_end=3.0):
    kernel = KernelSampler.single(model)
    traj = solve_volterra(CouplingMatrix.diagonal(detuning), kernel, step, int(round(t_end / step)))
    return build_coefficients(traj, Drive.constant(drive), kernel)


@pytest.mark.unit
class TestDensityMatrix:

    def test_ground_and_excited(self):
        assert DensityMatrix.excited().matrix[0, 0] == 1.0
        assert DensityMatrix.ground().matrix[1, 1] == 1.0

    def test_rejects_bad_trace(self):
        with pytest.raises(ValueError):
            DensityMatrix(np.diag([0.5, 0.4]), Basis.QUBIT)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            DensityMatrix(np.array([[0.5, 0.1], [0.3, 0.5]]), Basis.QUBIT)

    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError):
            DensityMatrix(np.eye(3) / 3, Basis.BOSON_FOCK, (4,))

    def test_coherent_state_amplitude(self):
        state = DensityMatrix.coherent(0.4 - 0.2j, 12)
        lowering = np.diag(np.sqrt(np.arange(1, 12)), 1)
        assert np.trace(lowering @ state.matrix) == pytest.approx(0.4 - 0.2j, abs=1e-6)

    def test_two_mode_vacuum(self):
        state = DensityMatrix.vacuum(3, 4)
        assert state.dim == 12
        assert state.matrix[0, 0] == 1.0

    def test_vacuum_oscillator_and_padding(self):
        state = DensityMatrix.excited().with_vacuum_oscillator(3)
        wider = state.padded(5)
        assert wider.dim == 10
        assert wider.matrix[0, 0] == 1.0
        with pytest.raises(ValueError):
            wider.padded(4)

    def test_state_from_file(self, tmp_path):
        path = tmp_path / "rho.npy"
        np.save(path, np.diag([0.25, 0.75]).astype(complex))
        state = parse_initial_state(str(path), Basis.QUBIT)
        assert state.matrix[1, 1] == pytest.approx(0.75)

    def test_parse_coherent(self):
        state = parse_initial_state("coherent(0.5)", Basis.BOSON_FOCK, (10,))
        assert state.basis is Basis.BOSON_FOCK

    def test_parse_unknown(self):
        with pytest.raises(ValueError):
            parse_initial_state("squeezed", Basis.QUBIT)


@pytest.mark.unit
class TestEvolveConfig:

    def test_min_step_default(self):
        assert EvolveConfig(step=0.1, t_end=1.0).min_step == pytest.approx(0.1 / 1024)

    def test_min_step_above_step(self):
        with pytest.raises(ValueError):
            EvolveConfig(step=0.1, t_end=1.0, min_step=0.2)

    def test_cutoff_from_settings(self, monkeypatch):
        monkeypatch.setenv("TLME_DEFAULT_CUTOFF", "7")
        assert EvolveConfig(step=0.1, t_end=1.0).cutoff == 7

    def test_output_times(self):
        times = EvolveConfig(step=0.25, t_end=1.0).output_times()
        assert times.size == 5
        assert times[-1] == pytest.approx(1.0)


@pytest.mark.physics
class TestBosonEquation:

    def test_vacuum_without_drive_stays_dark(self, detuned):
        track = _coefficients(detuned, detuning=0.5, drive=0.0, t_end=1.0)
        run = evolve_boson_tlme(track, EvolveConfig(step=0.05, t_end=1.0, cutoff=4))
        assert np.max(np.abs(run.lowering)) < 1e-12
        assert np.max(run.number) < 1e-12

    def test_coherent_amplitude_follows_green_function(self, detuned):
        track = _coefficients(detuned, detuning=0.5, drive=0.0, t_end=2.0)
        cfg = EvolveConfig(step=0.05, t_end=2.0, cutoff=10)
        run = evolve_boson_tlme(track, cfg, DensityMatrix.coherent(0.3, 10))
        expected = exact_first_moment(track.trajectory, Drive.zero(), [0.3])[::10, 0]
        assert np.allclose(run.lowering[:, 0], expected, atol=1e-5)

    @pytest.mark.parametrize("preset_name", ["strong-detuned", "thermal"])
    def test_first_moment_is_linear(self, preset_name):
        preset = get_preset(preset_name)
        model = SpectralModel.lorentzian(preset.gamma, preset.linewidth, preset.detuning,
                                         preset.offset, temperature=preset.temperature)
        kernel = KernelSampler.single(model)
        traj = solve_volterra(CouplingMatrix.diagonal(preset.detuning), kernel, 0.005, 600)
        drive = Drive.constant(preset.drive)
        track = build_coefficients(traj, drive, kernel)
        run = evolve_boson_tlme(track, EvolveConfig(step=0.05, t_end=3.0, cutoff=8))
        expected = exact_first_moment(traj, drive, [0.0])[::10, 0]
        assert np.allclose(run.lowering[:, 0], expected, atol=1e-4)
        assert np.max(run.trace_error) < 1e-9
        assert np.min(run.min_eigenvalue) > -1e-8

    def test_rejects_three_modes(self):
        traj = trajectory_from_values([0.0, 0.1], np.stack([np.eye(3)] * 2), np.zeros((2, 3, 3)),
                                      CouplingMatrix.diagonal(0.0, 0.0, 0.0))
        track = build_coefficients(traj, Drive.zero(3))
        with pytest.raises(ValueError):
            evolve_boson_tlme(track, EvolveConfig(step=0.1, t_end=0.1))

    def test_integration_step_must_not_undercut_grid(self, detuned):
        track = _coefficients(detuned, detuning=0.5, step=0.05, t_end=1.0)
        with pytest.raises(ValueError):
            evolve_boson_tlme(track, EvolveConfig(step=0.01, t_end=1.0, cutoff=3))


@pytest.mark.physics
class TestQubitEquation:

    def test_spontaneous_decay_is_green_function_squared(self):
        model = SpectralModel.lorentzian(1.0, 5.0)
        track = _coefficients(model, step=0.01, t_end=4.0)
        cfg = EvolveConfig(step=0.05, t_end=4.0, initial_state="excited")
        run = evolve_qubit_tlme(track, cfg)
        expected = np.abs(track.trajectory.green[::5, 0, 0]) ** 2
        assert np.allclose(run.excited_population, expected, atol=1e-7)

    def test_ground_state_is_stationary_without_drive(self, lorentzian):
        track = _coefficients(lorentzian, step=0.01, t_end=1.0)
        run = evolve_qubit_tlme(track, EvolveConfig(step=0.1, t_end=1.0))
        assert np.allclose(run.sigma_z, -1.0)

    def test_needs_single_subsystem(self):
        traj = trajectory_from_values([0.0, 0.1], np.stack([np.eye(2)] * 2), np.zeros((2, 2, 2)),
                                      CouplingMatrix.diagonal(0.0, 0.0))
        track = build_coefficients(traj, Drive.zero(2))
        with pytest.raises(ValueError):
            evolve_qubit_tlme(track, EvolveConfig(step=0.1, t_end=0.1))

    def test_rejects_thermal_environment(self, thermal_markov):
        track = _coefficients(thermal_markov, step=0.01, t_end=0.5)
        with pytest.raises(ValueError, match="zero-temperature"):
            evolve_qubit_tlme(track, EvolveConfig(step=0.1, t_end=0.5))

    def test_pole_crossing_returns_partial_trajectory(self):
        times = 0.1 * np.arange(21)
        traj = trajectory_from_values(times, 1.0 - times, -np.ones_like(times),
                                      CouplingMatrix.diagonal(0.0))
        track = build_coefficients(traj, Drive.zero())
        cfg = EvolveConfig(step=0.1, t_end=2.0, initial_state="excited")
        with pytest.raises(PoleCrossingError) as excinfo:
            evolve_qubit_tlme(track, cfg)
        partial = excinfo.value.partial
        assert partial is not None
        assert not partial.complete
        assert partial.times[-1] == pytest.approx(0.9)
        assert excinfo.value.exit_code == 3

    def test_weak_excitation_flag(self):
        run = TlmeTrajectory(times=np.array([0.0, 1.0]), basis=Basis.QUBIT,
                             lowering=np.zeros((2, 1)), number=np.zeros((2, 1)),
                             trace_error=np.zeros(2), hermiticity_error=np.zeros(2),
                             min_eigenvalue=np.zeros(2), final_state=np.eye(2) / 2,
                             sigma_z=np.array([-1.0, -0.5]))
        report = weak_excitation_flag(run, threshold=0.1)
        assert report.max_excited_population == pytest.approx(0.25)
        assert report.outside_regime
        assert not weak_excitation_flag(run, threshold=0.5).outside_regime

    @pytest.mark.slow
    def test_driven_steady_state_matches_ratio_formula(self):
        model = SpectralModel.lorentzian(1.0, 5.0)
        kernel = KernelSampler.single(model)
        traj = solve_volterra(CouplingMatrix.diagonal(0.0), kernel, 0.01, 3000)
        drive = Drive.constant(0.3)
        track = build_coefficients(traj, drive, kernel)
        run = evolve_qubit_tlme(track, EvolveConfig(step=0.1, t_end=30.0))
        expected = general_steady_state_from_ratio(traj, drive, kernel)
        assert run.sigma_z[-1] == pytest.approx(expected, abs=1e-4)
        check = constraint_residual(run.sigma_z[-1], run.lowering[-1, 0])
        assert abs(check.residual) < 1e-6


@pytest.mark.physics
@pytest.mark.slow
class TestDrivenBosonWithPoles:

    def test_first_moment_settles(self):
        preset = get_preset("driven-boson-poles")
        model = SpectralModel.lorentzian(preset.gamma, preset.linewidth)
        traj = solve_volterra(CouplingMatrix.diagonal(0.0), KernelSampler.single(model),
                              preset.step, int(round(preset.t_end / preset.step)))
        assert traj.zero_passage_times.size >= 3
        moment = exact_first_moment(traj, Drive.constant(preset.drive), [0.0])
        assert relative_change(traj.times, np.abs(moment[:, 0])) < 1e-3
