import numpy as np
import pytest

from src.analysis import Source, discrepancy_report, sigma_z_infinity_closed_form
from src.coeffs import Drive, build_coefficients
from src.errors import CutoffConvergenceError
from src.evolve import DensityMatrix, EvolveConfig, evolve_qubit_tlme
from src.presets import get_preset
from src.reference import PseudomodeModel, evolve_pseudomode, steady_state_pseudomode
from src.spectral import KernelSampler, SpectralModel
from src.sweep import SteadyStateProblem, SweepSpec, run_sweep
from src.volterra import CouplingMatrix, solve_volterra


@pytest.mark.unit
class TestPseudomodeModel:

    def test_needs_exactly_one_coupling(self):
        with pytest.raises(ValueError):
            PseudomodeModel(linewidth=1.0)
        with pytest.raises(ValueError):
            PseudomodeModel(linewidth=1.0, gamma=1.0, coupling=0.5)

    def test_coupling_from_gamma(self):
        assert PseudomodeModel(linewidth=0.5, gamma=4.0).g == pytest.approx(1.0)

    def test_rejects_small_cutoff(self):
        with pytest.raises(ValueError):
            PseudomodeModel(linewidth=1.0, gamma=1.0, cutoff=1)

    def test_from_spectral(self):
        model = PseudomodeModel.from_spectral(SpectralModel.lorentzian(2.0, 0.5, 0.3, 0.1), drive=0.2, cutoff=6)
        assert model.detuning == 0.3
        assert model.offset == 0.1
        assert model.cutoff == 6

    def test_from_spectral_rejects_flat_and_thermal(self, markov):
        with pytest.raises(ValueError):
            PseudomodeModel.from_spectral(markov)
        with pytest.raises(ValueError):
            PseudomodeModel.from_spectral(SpectralModel.lorentzian(1.0, 1.0, temperature=300.0))

    def test_operators(self):
        model = PseudomodeModel(linewidth=0.5, gamma=1.0, detuning=0.3, offset=0.1, drive=0.2, cutoff=4)
        hamiltonian = model.hamiltonian()
        assert hamiltonian.isherm
        assert hamiltonian.shape == (8, 8)
        assert len(model.collapse_operators()) == 1
        assert model.with_cutoff(6).cutoff == 6

    def test_closed_system_has_no_collapse(self):
        assert PseudomodeModel(coupling=1.0).collapse_operators() == []


@pytest.mark.physics
class TestPseudomodeDynamics:

    def test_vacuum_rabi_oscillation(self):
        model = PseudomodeModel(coupling=0.7, cutoff=3)
        cfg = EvolveConfig(step=0.05, t_end=5.0)
        run = evolve_pseudomode(model, cfg, DensityMatrix.excited())
        assert np.allclose(run.sigma_z, np.cos(2.0 * 0.7 * run.times), atol=1e-6)

    def test_bare_qubit_rabi(self):
        model = PseudomodeModel(coupling=0.0, drive=0.4, cutoff=2)
        run = evolve_pseudomode(model, EvolveConfig(step=0.05, t_end=5.0, initial_state="ground"))
        assert np.allclose(run.sigma_z, -np.cos(2.0 * 0.4 * run.times), atol=1e-6)

    def test_spontaneous_decay_matches_green_function(self, underdamped):
        traj = solve_volterra(CouplingMatrix.diagonal(0.0), KernelSampler.single(underdamped), 0.05, 200)
        model = PseudomodeModel.from_spectral(underdamped, cutoff=2)
        run = evolve_pseudomode(model, EvolveConfig(step=0.05, t_end=10.0, initial_state="excited"))
        expected = 2.0 * np.abs(traj.green[:, 0, 0]) ** 2 - 1.0
        assert np.allclose(run.sigma_z, expected, atol=1e-6)
        assert run.metadata["cutoff_shift"] < 1e-6

    def test_truncation_check(self):
        model = PseudomodeModel(coupling=1.0, linewidth=0.1, drive=1.0, cutoff=2)
        with pytest.raises(CutoffConvergenceError) as excinfo:
            evolve_pseudomode(model, EvolveConfig(step=0.1, t_end=5.0, initial_state="ground"))
        assert excinfo.value.exit_code == 4


@pytest.mark.physics
class TestPseudomodeSteadyState:

    def test_undriven_qubit_relaxes_to_ground(self):
        state = steady_state_pseudomode(PseudomodeModel(linewidth=1.0, gamma=1.0, cutoff=4))
        assert state.sigma_z == pytest.approx(-1.0, abs=1e-9)
        assert abs(state.sigma_minus) < 1e-9
        assert state.method == "direct"

    def test_needs_damping(self):
        with pytest.raises(ValueError):
            steady_state_pseudomode(PseudomodeModel(coupling=1.0))

    def test_weak_drive_matches_closed_form(self):
        state = steady_state_pseudomode(PseudomodeModel(linewidth=5.0, gamma=1.0, drive=0.02, cutoff=4))
        closed = sigma_z_infinity_closed_form(1.0, 5.0, 0.0, 0.02)
        excited = 0.5 * (state.sigma_z + 1.0)
        assert excited == pytest.approx(0.5 * (closed + 1.0), rel=1e-2)

    @pytest.mark.slow
    def test_blockade_sweep_shows_multiphoton_resonances(self):
        preset = get_preset("photon-blockade")
        problem = SteadyStateProblem(gamma=preset.gamma, linewidth=preset.linewidth,
                                     drive=preset.drive, cutoff=preset.cutoff)
        spec = SweepSpec(parameter="detuning", start=preset.sweep_start, stop=preset.sweep_stop,
                         points=preset.sweep_points)
        exact = run_sweep(problem, spec, Source.PSEUDOMODE, workers=0, progress=False)
        closed = run_sweep(problem, spec, Source.CLOSED_FORM, workers=1, progress=False)
        assert exact.converged
        assert exact.maxima(positive_only=True).size >= 3
        assert closed.maxima(positive_only=True).size == 1
        assert exact.max_violation() >= 0.5


def _decay_runs(preset_name):
    """Driven decay from the excited state through the qubit TLME and the pseudomode model."""
    preset = get_preset(preset_name)
    model = SpectralModel.lorentzian(preset.gamma, preset.linewidth, preset.detuning, preset.offset)
    kernel = KernelSampler.single(model)
    steps = int(round(preset.t_end / preset.step))
    trajectory = solve_volterra(CouplingMatrix.diagonal(preset.detuning), kernel, preset.step, steps)
    track = build_coefficients(trajectory, Drive.constant(preset.drive), kernel)
    cfg = EvolveConfig(step=preset.step, t_end=preset.t_end, cutoff=preset.cutoff,
                       initial_state="excited")
    qubit = evolve_qubit_tlme(track, cfg)
    exact = evolve_pseudomode(PseudomodeModel.from_spectral(model, drive=preset.drive,
                                                            cutoff=preset.cutoff), cfg)
    return qubit, exact


@pytest.mark.physics
@pytest.mark.slow
class TestQubitEquationAgainstPseudomode:

    def test_agrees_near_markov_and_fails_far_from_it(self):
        near = discrepancy_report(*_decay_runs("near-markov-decay"))
        far = discrepancy_report(*_decay_runs("non-markov-decay"))
        assert near.max_abs < 0.05
        assert far.max_abs >= 3.0 * near.max_abs
