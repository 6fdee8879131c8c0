"""Steady-state sweeps over one parameter, run concurrently and assembled in order."""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator
from tqdm import tqdm

from .analysis import (Source, SteadyStateRecord, general_steady_state_from_ratio, local_maxima,
                       relative_change, sigma_z_infinity_closed_form)
from .coeffs import Drive, build_coefficients
from .errors import NonConvergenceError, SimulationError
from .evolve import DensityMatrix, EvolveConfig, evolve_qubit_tlme
from .reference import PseudomodeModel, steady_state_pseudomode
from .settings import get_settings
from .spectral import KernelSampler, SpectralModel
from .volterra import CouplingMatrix, solve_volterra

logger = logging.getLogger(__name__)

SWEEPABLE = ("detuning", "drive", "offset", "linewidth")


class SweepSpec(BaseModel):
    parameter: str = "detuning"
    start: float
    stop: float
    points: int = Field(ge=2)

    @model_validator(mode="after")
    def _check_range(self):
        if self.parameter not in SWEEPABLE:
            raise ValueError(f"cannot sweep '{self.parameter}' (choose from {', '.join(SWEEPABLE)})")
        if self.start == self.stop:
            raise ValueError("sweep start and stop coincide")
        return self

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)


class SteadyStateProblem(BaseModel):
    """Qubit-with-Lorentzian-environment parameters shared by every sweep point."""

    gamma: float = Field(1.0, ge=0)
    linewidth: float = Field(gt=0)
    detuning: float = 0.0
    offset: float = 0.0
    drive: float = 0.0
    cutoff: int = Field(10, ge=2)
    step: float = Field(0.01, gt=0)
    t_end: float = Field(40.0, gt=0)

    def with_value(self, parameter: str, value: float) -> "SteadyStateProblem":
        return self.model_copy(update={parameter: float(value)})


def _qubit_tlme_point(problem: SteadyStateProblem):
    model = SpectralModel.lorentzian(problem.gamma, problem.linewidth, problem.detuning, problem.offset)
    kernel = KernelSampler.single(model)
    steps = int(np.ceil(problem.t_end / problem.step))
    trajectory = solve_volterra(CouplingMatrix.diagonal(problem.detuning), kernel, problem.step, steps)
    track = build_coefficients(trajectory, Drive.constant(problem.drive), kernel)
    cfg = EvolveConfig(step=problem.step, t_end=problem.t_end)
    run = evolve_qubit_tlme(track, cfg, DensityMatrix.ground())
    tolerance = get_settings().steady_state_tolerance
    drift = relative_change(run.times, run.sigma_z)
    if drift > tolerance:
        raise NonConvergenceError(
            f"qubit TLME has not settled by t={problem.t_end:g}: <sigma_z> still moves by "
            f"{drift:.3g} over the final tenth of the window (tolerance {tolerance:g})")
    return float(run.sigma_z[-1]), complex(run.lowering[-1, 0])


def solve_point(source: Source, problem: SteadyStateProblem, value: float) -> SteadyStateRecord:
    """Steady state at one sweep value; solver failures become unconverged records."""
    try:
        if source is Source.CLOSED_FORM:
            if problem.offset != 0:
                raise ValueError("the closed-form steady state assumes zero offset")
            sigma_z = sigma_z_infinity_closed_form(problem.gamma, problem.linewidth,
                                                   problem.detuning, problem.drive)
            return SteadyStateRecord(value=value, source=source, sigma_z=sigma_z)
        if source is Source.RATIO:
            model = SpectralModel.lorentzian(problem.gamma, problem.linewidth,
                                             problem.detuning, problem.offset)
            kernel = KernelSampler.single(model)
            trajectory = solve_volterra(CouplingMatrix.diagonal(problem.detuning), kernel, problem.step, 1)
            sigma_z = general_steady_state_from_ratio(trajectory, Drive.constant(problem.drive), kernel)
            return SteadyStateRecord(value=value, source=source, sigma_z=sigma_z)
        if source is Source.QUBIT_TLME:
            sigma_z, sigma_minus = _qubit_tlme_point(problem)
            return SteadyStateRecord.from_observables(value, source, sigma_z, sigma_minus)
        model = PseudomodeModel(detuning=problem.detuning, offset=problem.offset,
                                linewidth=problem.linewidth, gamma=problem.gamma,
                                drive=problem.drive, cutoff=problem.cutoff)
        state = steady_state_pseudomode(model)
        return SteadyStateRecord.from_observables(value, source, state.sigma_z, state.sigma_minus,
                                                  cutoff=state.cutoff)
    except (SimulationError, ValueError) as exc:
        logger.warning(f"Sweep point {value:.6g} failed: {exc}")
        return SteadyStateRecord.failed(value, source, str(exc))


def _solve_indexed(job):
    source, problem, parameter, value = job
    return solve_point(source, problem.with_value(parameter, value), float(value))


@dataclass
class SweepResult:
    """Index-ordered steady-state records of one sweep."""

    spec: SweepSpec
    source: Source
    records: List[SteadyStateRecord] = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return np.array([record.value for record in self.records])

    @property
    def sigma_z(self) -> np.ndarray:
        return np.array([record.sigma_z for record in self.records])

    @property
    def converged(self) -> bool:
        return all(record.converged for record in self.records)

    def maxima(self, positive_only: bool = False) -> np.ndarray:
        """Sweep values at the local maxima of <sigma_z>."""
        values, sigma_z = self.values, self.sigma_z
        if positive_only:
            keep = values > 0
            values, sigma_z = values[keep], sigma_z[keep]
        return values[local_maxima(sigma_z)]

    def max_violation(self) -> float:
        violations = np.array([record.normalized_violation for record in self.records])
        violations = violations[np.isfinite(violations)]
        return float(np.max(violations)) if violations.size else float("nan")


def run_sweep(problem: SteadyStateProblem, spec: SweepSpec, source: Source,
              workers: Optional[int] = None, progress: bool = True) -> SweepResult:
    """Solve every sweep point; points run in worker processes when ``workers`` > 1.

    ``workers=None`` reads the settings, where 0 means one worker per CPU.
    """
    if workers is None:
        workers = get_settings().sweep_workers
    if workers == 0:
        workers = os.cpu_count() or 1
    jobs = [(source, problem, spec.parameter, value) for value in spec.values()]
    logger.info(f"Sweeping {spec.parameter} over {spec.points} points "
                f"[{spec.start:.6g}, {spec.stop:.6g}] with source {source.value} ({workers} workers)")

    bar = dict(total=len(jobs), desc=f"Sweep ({source.value})", unit="point", disable=not progress)
    if workers == 1 or source is Source.CLOSED_FORM:
        records = [_solve_indexed(job) for job in tqdm(jobs, **bar)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            records = list(tqdm(executor.map(_solve_indexed, jobs), **bar))

    result = SweepResult(spec=spec, source=source, records=records)
    failed = sum(not record.converged for record in records)
    if failed:
        logger.warning(f"{failed} of {len(records)} sweep points did not converge")
    return result
