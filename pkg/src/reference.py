"""Qubit coupled to a damped oscillator (pseudomode) under a Lindblad equation.

For a Lorentzian environment this model is exact:

    H = Delta s+ s- + (Delta - delta) b^dag b + Omega s+ + Omega^* s-
        + g (s+ b + b^dag s-),          g = sqrt(lambda Gamma / 2)
    L[rho] = lambda (2 b rho b^dag - b^dag b rho - rho b^dag b)

All solves go through qutip; the qubit index 0 is the excited state.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import qutip

from .errors import CutoffConvergenceError, NonConvergenceError, SolverError
from .evolve import Basis, DensityMatrix, EvolveConfig, TlmeTrajectory, parse_initial_state
from .settings import get_settings
from .spectral import SpectralKind, SpectralModel

logger = logging.getLogger(__name__)

POSITIVITY_FLOOR = -1e-8
TRACE_LIMIT = 1e-8
STEADY_CHANGE = 1e-6


@dataclass(frozen=True)
class PseudomodeModel:
    """Parameters of the qubit plus damped-oscillator model."""

    detuning: float = 0.0
    offset: float = 0.0
    linewidth: float = 0.0
    gamma: Optional[float] = None
    coupling: Optional[float] = None
    drive: complex = 0.0
    cutoff: int = 10

    def __post_init__(self):
        if self.linewidth < 0:
            raise ValueError(f"Oscillator damping must be >= 0, got {self.linewidth}")
        if self.cutoff < 2:
            raise ValueError(f"Fock cutoff must be >= 2, got {self.cutoff}")
        if (self.gamma is None) == (self.coupling is None):
            raise ValueError("Give exactly one of gamma or the direct coupling g")
        if self.gamma is not None and self.gamma < 0:
            raise ValueError(f"Gamma must be >= 0, got {self.gamma}")
        if self.coupling is not None and self.coupling < 0:
            raise ValueError(f"Coupling g must be real and >= 0, got {self.coupling}")

    @classmethod
    def from_spectral(cls, model: SpectralModel, drive: complex = 0.0,
                      cutoff: Optional[int] = None) -> "PseudomodeModel":
        if model.kind is not SpectralKind.LORENTZIAN:
            raise ValueError("Only a Lorentzian environment maps onto a single pseudomode")
        if model.temperature > 0:
            raise ValueError("The pseudomode reference is a zero-temperature model")
        return cls(detuning=model.detuning, offset=model.offset, linewidth=model.linewidth,
                   gamma=model.gamma, drive=drive,
                   cutoff=cutoff if cutoff is not None else get_settings().default_cutoff)

    @property
    def g(self) -> float:
        if self.coupling is not None:
            return float(self.coupling)
        return float(np.sqrt(0.5 * self.linewidth * self.gamma))

    def with_cutoff(self, cutoff: int) -> "PseudomodeModel":
        return replace(self, cutoff=cutoff)

    def hamiltonian(self) -> qutip.Qobj:
        sm, b = _operators(self.cutoff)
        return (self.detuning * sm.dag() * sm
                + (self.detuning - self.offset) * b.dag() * b
                + self.drive * sm.dag() + np.conj(self.drive) * sm
                + self.g * (sm.dag() * b + b.dag() * sm))

    def collapse_operators(self):
        if self.linewidth == 0:
            return []
        _, b = _operators(self.cutoff)
        return [np.sqrt(2.0 * self.linewidth) * b]


def _operators(cutoff: int):
    sm = qutip.tensor(qutip.sigmam(), qutip.qeye(cutoff))
    b = qutip.tensor(qutip.qeye(2), qutip.destroy(cutoff))
    return sm, b


def _to_qobj(state: DensityMatrix) -> qutip.Qobj:
    cutoff = state.cutoffs[0]
    return qutip.Qobj(np.asarray(state.matrix), dims=[[2, cutoff], [2, cutoff]])


def _qubit_observables(rho: qutip.Qobj):
    qubit = rho.ptrace(0).full()
    return float(np.real(qubit[0, 0] - qubit[1, 1])), complex(qubit[0, 1])


def _top_population(rho: qutip.Qobj) -> float:
    return float(np.real(rho.ptrace(1).diag()[-1]))


def _initial(model: PseudomodeModel, cfg: EvolveConfig,
             rho0: Optional[DensityMatrix]) -> DensityMatrix:
    if rho0 is None:
        spec = cfg.initial_state if cfg.initial_state != "vacuum" else "ground"
        return parse_initial_state(spec, Basis.QUBIT_X_FOCK, (model.cutoff,))
    if rho0.basis is Basis.QUBIT:
        return rho0.with_vacuum_oscillator(model.cutoff)
    if rho0.basis is not Basis.QUBIT_X_FOCK:
        raise ValueError(f"Pseudomode runs need a qubit or qubit x Fock state, got {rho0.basis.value}")
    return rho0.padded(model.cutoff) if rho0.cutoffs[0] < model.cutoff else rho0


def _run(model: PseudomodeModel, rho0: DensityMatrix, times: np.ndarray,
         tolerance: float) -> TlmeTrajectory:
    options = {"store_states": True, "atol": min(tolerance, 1e-10), "rtol": 1e-10, "nsteps": 100000}
    try:
        result = qutip.mesolve(model.hamiltonian(), _to_qobj(rho0), times,
                               c_ops=model.collapse_operators(), options=options)
    except Exception as exc:
        raise SolverError(f"Pseudomode integration failed: {exc}") from exc

    count = times.size
    sigma_z = np.zeros(count)
    lowering = np.zeros((count, 1), dtype=complex)
    trace_error = np.zeros(count)
    hermiticity = np.zeros(count)
    smallest = np.zeros(count)
    top = 0.0
    for n, state in enumerate(result.states):
        full = state.full()
        sigma_z[n], lowering[n, 0] = _qubit_observables(state)
        trace_error[n] = abs(np.trace(full) - 1.0)
        hermiticity[n] = float(np.max(np.abs(full - full.conj().T)))
        smallest[n] = float(np.linalg.eigvalsh(0.5 * (full + full.conj().T))[0])
        top = max(top, _top_population(state))

    if np.min(smallest) < POSITIVITY_FLOOR:
        where = times[int(np.argmin(smallest))]
        raise SolverError(f"Lindblad state lost positivity at t={where:.6g} "
                          f"(smallest eigenvalue {np.min(smallest):.3g})")
    if np.max(trace_error) > TRACE_LIMIT:
        logger.warning(f"Lindblad trace drift {np.max(trace_error):.3g} exceeds {TRACE_LIMIT:g}")

    return TlmeTrajectory(
        times=times, basis=Basis.QUBIT_X_FOCK, lowering=lowering,
        number=0.5 * (sigma_z[:, None] + 1.0), trace_error=trace_error,
        hermiticity_error=hermiticity, min_eigenvalue=smallest,
        final_state=result.states[-1].full(), sigma_z=sigma_z,
        cutoff_overflow=top > 1e-6, metadata={"cutoff": model.cutoff, "top_population": top},
    )


def evolve_pseudomode(model: PseudomodeModel, cfg: EvolveConfig,
                      rho0: Optional[DensityMatrix] = None,
                      check_cutoff: bool = True) -> TlmeTrajectory:
    """Reduced qubit observables of the pseudomode model over the configured window.

    The run is repeated with the cutoff raised by ``cutoff_step`` and the
    largest shift of <sigma_z> between the two must stay within the cutoff tolerance.
    """
    settings = get_settings()
    times = cfg.output_times()
    state = _initial(model, cfg, rho0)
    trajectory = _run(model, state, times, cfg.tolerance)
    if not check_cutoff:
        return trajectory

    finer = model.with_cutoff(model.cutoff + settings.cutoff_step)
    check = _run(finer, state.padded(finer.cutoff), times, cfg.tolerance)
    shift = float(np.max(np.abs(trajectory.sigma_z - check.sigma_z)))
    trajectory.metadata["cutoff_shift"] = shift
    if shift > settings.cutoff_tolerance:
        raise CutoffConvergenceError(model.cutoff, shift, settings.cutoff_tolerance)
    logger.debug(f"Cutoff {model.cutoff} converged (shift {shift:.3g})")
    return trajectory


@dataclass(frozen=True)
class PseudomodeSteadyState:
    """Stationary reduced qubit observables with truncation diagnostics."""

    sigma_z: float
    sigma_minus: complex
    cutoff: int
    cutoff_shift: float
    top_population: float
    min_eigenvalue: float
    method: str


def _long_time_state(model: PseudomodeModel, horizon_factor: float = 2000.0,
                     chunks: int = 200) -> qutip.Qobj:
    """Integrate from the ground state until <sigma_z> settles over a trailing window."""
    sm, _ = _operators(model.cutoff)
    rho = qutip.tensor(qutip.fock_dm(2, 1), qutip.fock_dm(model.cutoff, 0))
    span = horizon_factor / chunks
    hamiltonian = model.hamiltonian() / model.linewidth
    c_ops = [op / np.sqrt(model.linewidth) for op in model.collapse_operators()]
    previous, _ = _qubit_observables(rho)
    for _ in range(chunks):
        result = qutip.mesolve(hamiltonian, rho, [0.0, span], c_ops=c_ops,
                               options={"atol": 1e-12, "rtol": 1e-10, "nsteps": 100000})
        rho = result.states[-1]
        current, _ = _qubit_observables(rho)
        if abs(current - previous) <= STEADY_CHANGE * max(abs(current), 1e-12):
            return rho
        previous = current
    raise NonConvergenceError(
        f"Pseudomode state still changing after t={horizon_factor / model.linewidth:.6g} "
        f"at cutoff {model.cutoff}"
    )


def _stationary(model: PseudomodeModel):
    """Steady state of the generator rescaled by lambda, by null-space solve or long-time integration."""
    if model.cutoff <= get_settings().direct_cutoff_limit:
        hamiltonian = model.hamiltonian() / model.linewidth
        c_ops = [op / np.sqrt(model.linewidth) for op in model.collapse_operators()]
        try:
            return qutip.steadystate(hamiltonian, c_ops), "direct"
        except Exception as exc:
            raise SolverError(f"Direct steady-state solve failed at cutoff {model.cutoff}: {exc}") from exc
    return _long_time_state(model), "integration"


def steady_state_pseudomode(model: PseudomodeModel) -> PseudomodeSteadyState:
    """Stationary <sigma_z>, <sigma_-> with a cutoff convergence loop.

    The cutoff starts at ``model.cutoff``; while raising it by ``cutoff_step``
    moves either observable by more than the tolerance it keeps growing, up to
    ``max_cutoff``.
    """
    if model.linewidth <= 0:
        raise ValueError("A steady state needs oscillator damping (linewidth > 0)")
    settings = get_settings()
    cutoff = model.cutoff
    current, method = _stationary(model)
    while True:
        finer_model = model.with_cutoff(cutoff + settings.cutoff_step)
        finer, finer_method = _stationary(finer_model)
        sz, sm = _qubit_observables(current)
        sz_f, sm_f = _qubit_observables(finer)
        shift = abs(sz - sz_f) + abs(sm - sm_f)
        if shift <= settings.cutoff_tolerance:
            break
        cutoff += settings.cutoff_step
        if cutoff + settings.cutoff_step > settings.max_cutoff:
            raise CutoffConvergenceError(cutoff, shift, settings.cutoff_tolerance)
        logger.debug(f"Raising pseudomode cutoff to {cutoff} (shift {shift:.3g})")
        current, method = finer, finer_method

    full = current.full()
    smallest = float(np.linalg.eigvalsh(0.5 * (full + full.conj().T))[0])
    if smallest < POSITIVITY_FLOOR:
        raise SolverError(f"Stationary state is not positive (smallest eigenvalue {smallest:.3g})")
    return PseudomodeSteadyState(sigma_z=sz, sigma_minus=sm, cutoff=cutoff, cutoff_shift=shift,
                                 top_population=_top_population(current),
                                 min_eigenvalue=smallest, method=method)
