"""Process-wide simulator defaults and the per-run configuration model.

Values can be overridden with ``TLME_``-prefixed environment variables or a
``.env`` file in the working directory, e.g. ``TLME_OMEGA0=500``.
"""

from functools import lru_cache
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class SimulatorSettings(BaseSettings):
    """Defaults used when a run configuration leaves a value unset."""

    model_config = SettingsConfigDict(env_prefix="TLME_", env_file=".env", extra="ignore")

    # Reference frequency of the Bose factor n(w) = 1/(exp((w + omega0)/T) - 1)
    omega0: float = Field(1000.0, gt=0)
    # eps_sing = singular_factor * max_n |det V_n|
    singular_factor: float = Field(1e-6, gt=0)
    quadrature_tolerance: float = Field(1e-9, gt=0)
    tabulated_tolerance: float = Field(1e-4, gt=0)
    default_cutoff: int = Field(10, ge=2)
    max_cutoff: int = Field(40, ge=2)
    cutoff_step: int = Field(5, ge=1)
    direct_cutoff_limit: int = Field(30, ge=2)
    cutoff_tolerance: float = Field(1e-4, gt=0)
    steady_state_tolerance: float = Field(1e-5, gt=0)
    weak_excitation_threshold: float = Field(0.1, gt=0, le=1)
    violation_floor: float = Field(1e-3, gt=0)
    sweep_workers: int = Field(0, ge=0)
    csv_precision: int = Field(17, ge=6, le=17)
    log_dir: str = "logs"
    output_dir: str = "output"


@lru_cache(maxsize=1)
def get_settings() -> SimulatorSettings:
    """Return the cached settings instance."""
    return SimulatorSettings()


class RunConfig(BaseModel):
    """One command-line run: preset values overlaid by a config file, then by flags."""

    model_config = ConfigDict(extra="forbid")

    command: Literal["kernel", "green", "coeffs", "evolve", "sweep"]
    preset: Optional[str] = None
    spectrum: Literal["lorentzian", "markovian", "tabulated"] = "lorentzian"
    spectrum_file: Optional[str] = None
    gamma: float = Field(1.0, ge=0)
    linewidth: float = Field(1.0, ge=0)
    detuning: float = 0.0
    offset: float = 0.0
    temperature: float = Field(0.0, ge=0)
    drive: float = 0.0
    omega_over_lambda: Optional[float] = None
    step: float = Field(0.01, gt=0)
    t_end: float = Field(10.0, gt=0)
    cutoff: int = Field(10, ge=2)
    tolerance: float = Field(1e-9, gt=0)
    min_step: Optional[float] = Field(None, gt=0)
    initial_state: str = "vacuum"
    initial_amplitude: complex = 0.0
    method: Literal["auto", "general", "expfast"] = "auto"
    engine: Literal["boson-tlme", "qubit-tlme", "pseudomode", "exact-moment"] = "boson-tlme"
    tau: Optional[float] = None
    output_dir: Optional[str] = None
    sweep_parameter: str = "detuning"
    sweep_start: Optional[float] = None
    sweep_stop: Optional[float] = None
    sweep_points: Optional[int] = Field(None, ge=2)
    sweep_source: Literal["closed-form", "ratio", "qubit-tlme", "pseudomode"] = "pseudomode"
    workers: Optional[int] = Field(None, ge=0)
    html: bool = False

    @model_validator(mode="after")
    def _check_spectrum(self):
        if self.spectrum == "tabulated" and not self.spectrum_file:
            raise ValueError("a tabulated spectrum needs spectrum_file")
        if self.spectrum == "lorentzian" and self.linewidth <= 0:
            raise ValueError("a Lorentzian spectrum needs linewidth > 0")
        if self.omega_over_lambda is not None:
            self.drive = self.omega_over_lambda * self.linewidth
        return self

    @property
    def stem(self) -> str:
        return self.preset or "run"

    @property
    def steps(self) -> int:
        return max(1, int(round(self.t_end / self.step)))
