"""Pytest configuration and shared fixtures for the simulator tests."""

import json

import numpy as np
import pytest

from src.settings import get_settings
from src.spectral import KernelSampler, SpectralModel
from src.volterra import CouplingMatrix, solve_volterra


@pytest.fixture(autouse=True)
def fresh_settings():
    """Settings are cached per process; tests that patch the environment need a clean cache."""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    """Run inside a temporary directory so logs/ and output/ land there."""
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def lorentzian():
    """Gamma = lambda = 1, on resonance."""
    return SpectralModel.lorentzian(1.0, 1.0)


@pytest.fixture
def underdamped():
    """Gamma = 1, lambda = 0.5: V oscillates and passes through zero."""
    return SpectralModel.lorentzian(1.0, 0.5)


@pytest.fixture
def detuned():
    """Pole-free non-Markovian environment (Gamma=4, lambda=0.5, Delta=0.5, delta=1)."""
    return SpectralModel.lorentzian(4.0, 0.5, detuning=0.5, offset=1.0)


@pytest.fixture
def markov():
    return SpectralModel.markovian(1.0)


@pytest.fixture
def thermal_markov():
    return SpectralModel.markovian(1.0, temperature=300.0, omega0=1000.0)


@pytest.fixture
def solve():
    """solve(model, detuning, step, t_end, method) -> GreensTrajectory"""
    def _solve(model, detuning=0.0, step=0.01, t_end=5.0, method="auto"):
        steps = int(round(t_end / step))
        return solve_volterra(CouplingMatrix.diagonal(detuning), KernelSampler.single(model),
                              step, steps, method=method)
    return _solve


@pytest.fixture
def closed_form_green():
    """Closed-form V(t) for a resonant Lorentzian with linewidth < 2 gamma."""
    def _green(times, gamma, linewidth):
        omega = np.sqrt(0.5 * linewidth * gamma - 0.25 * linewidth ** 2)
        envelope = np.exp(-0.5 * linewidth * times)
        return envelope * (np.cos(omega * times) + 0.5 * linewidth / omega * np.sin(omega * times))
    return _green


@pytest.fixture
def spectrum_file(tmp_path):
    """Gaussian spectral density on a fine grid, with comment lines."""
    freqs = np.linspace(-8.0, 8.0, 1601)
    density = np.exp(-0.5 * freqs ** 2) / np.sqrt(2.0 * np.pi)
    path = tmp_path / "spectrum.txt"
    with open(path, "w", encoding="utf-8") as f:
        f.write("# frequency  J(w)\n")
        for w, j in zip(freqs, density):
            f.write(f"{w:.10f} {j:.17g}\n")
    return str(path)


@pytest.fixture
def run_config_file(tmp_path):
    """Write a JSON run configuration and return its path."""
    def _write(data):
        path = tmp_path / "run.json"
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f)
        return str(path)
    return _write
