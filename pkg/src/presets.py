"""Named parameter sets, all in units of Gamma = 1 unless stated.

Every preset records where its numbers come from; ``--list-presets`` prints
that provenance.
"""

from typing import Dict, Optional

from pydantic import BaseModel, Field

from .errors import ConfigurationError


class Preset(BaseModel):
    """Physical and numerical defaults for one named run."""

    name: str
    provenance: str
    spectrum: str = "lorentzian"
    gamma: float = 1.0
    linewidth: float = 1.0
    detuning: float = 0.0
    offset: float = 0.0
    temperature: float = 0.0
    drive: float = 0.0
    step: float = 0.01
    t_end: float = 10.0
    cutoff: int = Field(10, ge=2)
    initial_state: str = "vacuum"
    initial_amplitude: complex = 0.0
    sweep_start: Optional[float] = None
    sweep_stop: Optional[float] = None
    sweep_points: Optional[int] = None
    sweep_source: str = "pseudomode"


def _blockade(name: str, coupling_ratio: float, drive_ratio: float, provenance: str) -> Preset:
    # Gamma = 1 fixes lambda through (Gamma / 2 lambda)^(1/2) = coupling_ratio
    linewidth = 1.0 / (2.0 * coupling_ratio ** 2)
    return Preset(
        name=name, provenance=provenance, linewidth=linewidth, drive=drive_ratio * linewidth,
        step=0.05 / coupling_ratio, t_end=40.0 / linewidth, cutoff=10, initial_state="ground",
        sweep_start=0.0, sweep_stop=130.0 * linewidth, sweep_points=201,
    )


PRESETS: Dict[str, Preset] = {
    preset.name: preset for preset in (
        Preset(name="near-markov-decay",
               provenance="Near-Markov qubit decay: lambda=25, Delta=0.3, Omega=1, delta=0.01, decay "
                          "from the excited state; near-Markov agreement",
               linewidth=25.0, detuning=0.3, offset=0.01, drive=1.0, step=0.002, t_end=10.0,
               cutoff=10, initial_state="excited"),
        Preset(name="non-markov-decay",
               provenance="Non-Markov qubit decay: lambda=0.05, Delta=3.5, Omega=0.4, delta=0.01, decay "
                          "from the excited state; clear discrepancy",
               linewidth=0.05, detuning=3.5, offset=0.01, drive=0.4, step=0.005, t_end=10.0,
               cutoff=10, initial_state="excited"),
        Preset(name="steady-response",
               provenance="Steady-state response: (Gamma/2lambda)^(1/2)=100, Omega/lambda=4, delta=0; "
                          "closed-form steady state versus Delta",
               linewidth=5e-5, drive=2e-4, step=0.05, t_end=1e5, cutoff=10, initial_state="ground",
               sweep_start=-130 * 5e-5, sweep_stop=130 * 5e-5, sweep_points=201,
               sweep_source="closed-form"),
        _blockade("photon-blockade", 100.0, 22.0,
                  "Photon blockade: (Gamma/2lambda)^(1/2)=100, Omega/lambda=22, delta=0; "
                  "pseudomode steady state versus Delta, multi-photon resonances"),
        Preset(name="driven-boson-poles",
               provenance="Driven boson with coefficient poles: (Gamma/2lambda)^(1/2)=5, Delta=delta=0, Omega=lambda, vacuum; "
                          "steady <a(t)> while gamma(t) has periodic poles",
               linewidth=0.02, drive=0.02, step=0.05, t_end=1000.0, cutoff=10,
               initial_state="vacuum"),
        Preset(name="markov", spectrum="markovian",
               provenance="Markov limit: flat spectral density, V(t)=exp(-Gamma t/2)",
               linewidth=0.0, drive=0.5, step=0.01, t_end=20.0, cutoff=10),
        Preset(name="strong-detuned",
               provenance="Pole-free non-Markovian boson run: Gamma=4, lambda=0.5 (g=1), "
                          "Delta=0.5, delta=1",
               gamma=4.0, linewidth=0.5, detuning=0.5, offset=1.0, drive=0.3, step=0.01,
               t_end=20.0, cutoff=12),
        Preset(name="thermal",
               provenance="Finite-temperature boson run: Lorentzian lambda=3, T=300 with omega0=1000",
               linewidth=3.0, temperature=300.0, drive=0.2, step=0.01, t_end=10.0, cutoff=12),
    )
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(PRESETS))
        raise ConfigurationError(f"unknown preset '{name}' (known: {known})", field="preset")


def list_presets() -> Dict[str, str]:
    return {name: preset.provenance for name, preset in PRESETS.items()}
