"""Density-matrix integration of the time-local master equations.

One right-hand side serves the boson equation and the qubit equation; only the
ladder operators differ. Integration is classical RK4 with a step-doubling
error estimate. Steps are halved near coefficient poles down to a minimum step,
after which the run aborts with ``PoleCrossingError`` carrying the partial
trajectory.
"""

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import qutip
from pydantic import BaseModel, Field, model_validator

from .coeffs import CoefficientTrack, Drive, convolve_drive
from .errors import PoleCrossingError
from .settings import get_settings
from .volterra import GreensTrajectory

logger = logging.getLogger(__name__)

TRACE_TOLERANCE = 1e-9
OVERFLOW_FRACTION = 1e-6
NEGATIVITY_WARNING = -1e-8

_COHERENT = re.compile(r"^coherent\((?P<alpha>[^)]+)\)$")


class Basis(str, Enum):
    QUBIT = "qubit"
    BOSON_FOCK = "boson-fock"
    QUBIT_X_FOCK = "qubit-x-fock"


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace density matrix on a tagged truncated basis.

    ``cutoffs`` holds one Fock cutoff per boson mode (BosonFock) or the single
    oscillator cutoff (QubitXFock); it is empty for a bare qubit. Qubit index 0
    is the excited state.
    """

    matrix: np.ndarray
    basis: Basis
    cutoffs: Tuple[int, ...] = ()

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=complex)
        cutoffs = tuple(int(c) for c in self.cutoffs)
        if self.basis is Basis.QUBIT:
            expected = 2
        elif self.basis is Basis.BOSON_FOCK:
            if not cutoffs or any(c < 2 for c in cutoffs):
                raise ValueError("Boson basis needs Fock cutoffs >= 2")
            expected = int(np.prod(cutoffs))
        else:
            if len(cutoffs) != 1 or cutoffs[0] < 2:
                raise ValueError("Qubit x Fock basis needs one oscillator cutoff >= 2")
            expected = 2 * cutoffs[0]
        if matrix.shape != (expected, expected):
            raise ValueError(f"Density matrix must be {expected}x{expected}, got {matrix.shape}")
        if np.max(np.abs(matrix - matrix.conj().T)) > TRACE_TOLERANCE:
            raise ValueError("Density matrix is not Hermitian")
        if abs(np.trace(matrix) - 1.0) > TRACE_TOLERANCE:
            raise ValueError(f"Density matrix trace is {np.trace(matrix).real:.12g}, expected 1")
        matrix = 0.5 * (matrix + matrix.conj().T)
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "cutoffs", cutoffs)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def ground(cls) -> "DensityMatrix":
        return cls(qutip.ket2dm(qutip.basis(2, 1)).full(), Basis.QUBIT)

    @classmethod
    def excited(cls) -> "DensityMatrix":
        return cls(qutip.ket2dm(qutip.basis(2, 0)).full(), Basis.QUBIT)

    @classmethod
    def vacuum(cls, *cutoffs: int) -> "DensityMatrix":
        state = qutip.tensor([qutip.fock_dm(c, 0) for c in cutoffs])
        return cls(state.full(), Basis.BOSON_FOCK, cutoffs)

    @classmethod
    def coherent(cls, alpha: complex, *cutoffs: int) -> "DensityMatrix":
        """Coherent state in the first mode, vacuum in the others, renormalised after truncation."""
        factors = [qutip.coherent_dm(cutoffs[0], alpha)] + [qutip.fock_dm(c, 0) for c in cutoffs[1:]]
        matrix = qutip.tensor(factors).full()
        return cls(matrix / np.trace(matrix), Basis.BOSON_FOCK, cutoffs)

    @classmethod
    def from_file(cls, path, basis: Basis, cutoffs: Sequence[int] = ()) -> "DensityMatrix":
        """Load a matrix saved with ``numpy.save`` (``.npy``) or as complex text."""
        path = Path(path)
        if path.suffix == ".npy":
            matrix = np.load(path)
        else:
            matrix = np.loadtxt(path, dtype=complex, comments="#", ndmin=2)
        return cls(matrix, basis, tuple(cutoffs))

    def with_vacuum_oscillator(self, cutoff: int) -> "DensityMatrix":
        """Embed a qubit state as qubit (x) oscillator vacuum."""
        if self.basis is not Basis.QUBIT:
            raise ValueError("Only a qubit state can be extended by an oscillator vacuum")
        matrix = np.kron(self.matrix, qutip.fock_dm(cutoff, 0).full())
        return DensityMatrix(matrix, Basis.QUBIT_X_FOCK, (cutoff,))

    def padded(self, cutoff: int) -> "DensityMatrix":
        """Same state with the oscillator cutoff raised (zero-padded Fock space)."""
        if self.basis is not Basis.QUBIT_X_FOCK:
            raise ValueError("Padding applies to qubit x Fock states")
        old = self.cutoffs[0]
        if cutoff < old:
            raise ValueError(f"Cannot shrink cutoff {old} to {cutoff}")
        blocks = np.asarray(self.matrix).reshape(2, old, 2, old)
        wide = np.zeros((2, cutoff, 2, cutoff), dtype=complex)
        wide[:, :old, :, :old] = blocks
        return DensityMatrix(wide.reshape(2 * cutoff, 2 * cutoff), Basis.QUBIT_X_FOCK, (cutoff,))


def parse_initial_state(spec: str, basis: Basis, cutoffs: Sequence[int] = ()) -> DensityMatrix:
    """Build an initial state from "ground", "excited", "vacuum", "coherent(alpha)" or a file path."""
    text = spec.strip()
    cutoffs = tuple(cutoffs)
    if basis is Basis.BOSON_FOCK:
        if text == "vacuum":
            return DensityMatrix.vacuum(*cutoffs)
        match = _COHERENT.match(text.replace(" ", ""))
        if match:
            return DensityMatrix.coherent(complex(match.group("alpha")), *cutoffs)
    else:
        qubit = {"ground": DensityMatrix.ground, "excited": DensityMatrix.excited}.get(text)
        if qubit is not None:
            state = qubit()
            return state if basis is Basis.QUBIT else state.with_vacuum_oscillator(cutoffs[0])
    if Path(text).is_file():
        return DensityMatrix.from_file(text, basis, cutoffs)
    raise ValueError(f"Unknown initial state '{spec}' for basis {basis.value}")


class EvolveConfig(BaseModel):
    """Grid, truncation and step control for one density-matrix run."""

    step: float = Field(gt=0)
    t_end: float = Field(gt=0)
    cutoff: int = Field(default_factory=lambda: get_settings().default_cutoff, ge=2)
    tolerance: float = Field(1e-9, gt=0)
    min_step: Optional[float] = Field(None, gt=0)
    initial_state: str = "vacuum"

    @model_validator(mode="after")
    def _check_steps(self):
        if self.min_step is None:
            self.min_step = self.step / 1024.0
        if self.min_step > self.step:
            raise ValueError(f"min_step {self.min_step} exceeds step {self.step}")
        return self

    def output_times(self, limit: Optional[float] = None) -> np.ndarray:
        end = self.t_end if limit is None else min(self.t_end, limit)
        count = int(np.floor(end / self.step + 1e-9))
        return self.step * np.arange(count + 1)


@dataclass
class TlmeTrajectory:
    """Observables sampled along one integration.

    ``lowering`` is <a_j> or <sigma_->; ``number`` is <a_j^dagger a_j> or the
    excited population; ``sigma_z`` is filled for qubit runs only.
    """

    times: np.ndarray
    basis: Basis
    lowering: np.ndarray
    number: np.ndarray
    trace_error: np.ndarray
    hermiticity_error: np.ndarray
    min_eigenvalue: np.ndarray
    final_state: np.ndarray
    sigma_z: Optional[np.ndarray] = None
    cutoff_overflow: bool = False
    rejected_steps: int = 0
    complete: bool = True
    metadata: dict = field(default_factory=dict)

    @property
    def excited_population(self) -> np.ndarray:
        if self.sigma_z is None:
            raise ValueError("Excited population is defined for qubit trajectories only")
        return 0.5 * (self.sigma_z + 1.0)

    def truncated(self, count: int) -> "TlmeTrajectory":
        return TlmeTrajectory(
            times=self.times[:count], basis=self.basis, lowering=self.lowering[:count],
            number=self.number[:count], trace_error=self.trace_error[:count],
            hermiticity_error=self.hermiticity_error[:count],
            min_eigenvalue=self.min_eigenvalue[:count], final_state=self.final_state,
            sigma_z=None if self.sigma_z is None else self.sigma_z[:count],
            cutoff_overflow=self.cutoff_overflow, rejected_steps=self.rejected_steps,
            complete=False, metadata=dict(self.metadata),
        )


def boson_operators(cutoffs: Sequence[int]) -> List[np.ndarray]:
    """Annihilation operators a_j on the tensor-product Fock space."""
    operators = []
    for j in range(len(cutoffs)):
        factors = [qutip.destroy(c) if k == j else qutip.qeye(c) for k, c in enumerate(cutoffs)]
        operators.append(qutip.tensor(factors).full())
    return operators


def tlme_generator(track: CoefficientTrack, lowering: Sequence[np.ndarray],
                   driven: bool = True) -> Callable[[float, np.ndarray], np.ndarray]:
    """Right-hand side drho/dt of the time-local master equation.

    -i[sum xi_j L_j^+ + h.c., rho]
      + sum_jk gamma_jk [L_k rho, L_j^+] + gamma_jk^* [L_j, rho L_k^+]
      + sum_jk lambda_jk ( L_k rho L_j^+ - rho L_k L_j^+ - L_j^+ L_k rho + L_j^+ rho L_k )
    """
    ops = [np.asarray(op) for op in lowering]
    daggers = [op.conj().T for op in ops]
    count = len(ops)

    def rhs(t: float, rho: np.ndarray) -> np.ndarray:
        coeffs = track.at(t)
        out = np.zeros_like(rho)
        if driven:
            hamiltonian = sum(coeffs.xi[j] * daggers[j] + np.conj(coeffs.xi[j]) * ops[j]
                              for j in range(count))
            out -= 1j * (hamiltonian @ rho - rho @ hamiltonian)
        for j in range(count):
            for k in range(count):
                gamma = coeffs.gamma[j, k]
                if gamma != 0:
                    lk_rho = ops[k] @ rho
                    out += gamma * (lk_rho @ daggers[j] - daggers[j] @ lk_rho)
                    rho_ldk = rho @ daggers[k]
                    out += np.conj(gamma) * (ops[j] @ rho_ldk - rho_ldk @ ops[j])
                lam = coeffs.lam[j, k]
                if lam != 0:
                    out += lam * (ops[k] @ rho @ daggers[j] - rho @ ops[k] @ daggers[j]
                                  - daggers[j] @ ops[k] @ rho + daggers[j] @ rho @ ops[k])
        return out

    return rhs


def _rk4_step(rhs, t: float, rho: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(t, rho)
    k2 = rhs(t + 0.5 * h, rho + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, rho + 0.5 * h * k2)
    k4 = rhs(t + h, rho + h * k3)
    return rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _Stepper:
    """RK4 with step doubling; subdivides an output interval until the error is bounded."""

    def __init__(self, rhs, tolerance: float, min_step: float):
        self.rhs = rhs
        self.tolerance = tolerance
        self.min_step = min_step
        self.rejected = 0

    def advance(self, t: float, rho: np.ndarray, h: float) -> np.ndarray:
        target = t + h
        sub = h
        while target - t > 1e-12 * max(1.0, abs(target)):
            sub = min(sub, target - t)
            with np.errstate(over="ignore", invalid="ignore"):
                full = _rk4_step(self.rhs, t, rho, sub)
                half = _rk4_step(self.rhs, t + 0.5 * sub, _rk4_step(self.rhs, t, rho, 0.5 * sub), 0.5 * sub)
                error = float(np.max(np.abs(half - full))) / 15.0
            if np.isfinite(error) and error <= self.tolerance:
                rho = half
                t += sub
                sub = min(2.0 * sub, h)
                continue
            self.rejected += 1
            if 0.5 * sub < self.min_step:
                raise PoleCrossingError(t, error if np.isfinite(error) else np.inf, self.min_step)
            sub *= 0.5
        return rho


def _top_fock_population(rho: np.ndarray, cutoffs: Sequence[int]) -> float:
    populations = np.real(np.diag(rho)).reshape(tuple(cutoffs))
    top = 0.0
    for axis in range(len(cutoffs)):
        top = max(top, float(np.sum(np.take(populations, -1, axis=axis))))
    return top


def _integrate(rhs, rho0: np.ndarray, times: np.ndarray, cfg: EvolveConfig,
               lowering: Sequence[np.ndarray], basis: Basis,
               cutoffs: Sequence[int] = (), sigma_z_op: Optional[np.ndarray] = None) -> TlmeTrajectory:
    count = times.size
    n_ops = len(lowering)
    number_ops = [op.conj().T @ op for op in lowering]
    record = {
        "lowering": np.zeros((count, n_ops), dtype=complex),
        "number": np.zeros((count, n_ops)),
        "trace_error": np.zeros(count),
        "hermiticity_error": np.zeros(count),
        "min_eigenvalue": np.zeros(count),
    }
    sigma_z = np.zeros(count) if sigma_z_op is not None else None
    state = {"overflow": False, "negative": False}

    def observe(n: int, rho: np.ndarray):
        record["lowering"][n] = [np.trace(op @ rho) for op in lowering]
        record["number"][n] = [np.real(np.trace(op @ rho)) for op in number_ops]
        record["trace_error"][n] = abs(np.trace(rho) - 1.0)
        record["hermiticity_error"][n] = float(np.max(np.abs(rho - rho.conj().T)))
        smallest = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
        record["min_eigenvalue"][n] = smallest
        if sigma_z is not None:
            sigma_z[n] = np.real(np.trace(sigma_z_op @ rho))
        if smallest < NEGATIVITY_WARNING and not state["negative"]:
            state["negative"] = True
            logger.warning(f"Density matrix lost positivity at t={times[n]:.6g} "
                           f"(smallest eigenvalue {smallest:.3g})")
        if cutoffs and not state["overflow"]:
            top = _top_fock_population(rho, cutoffs)
            if top > OVERFLOW_FRACTION * abs(np.trace(rho)):
                state["overflow"] = True
                logger.warning(f"Top Fock level holds population {top:.3g} at t={times[n]:.6g}; "
                               f"raise the cutoff")

    def result(n_done: int, rho: np.ndarray, stepper: _Stepper) -> TlmeTrajectory:
        traj = TlmeTrajectory(
            times=times, basis=basis, lowering=record["lowering"], number=record["number"],
            trace_error=record["trace_error"], hermiticity_error=record["hermiticity_error"],
            min_eigenvalue=record["min_eigenvalue"], final_state=rho, sigma_z=sigma_z,
            cutoff_overflow=state["overflow"], rejected_steps=stepper.rejected,
        )
        return traj if n_done == count else traj.truncated(n_done)

    stepper = _Stepper(rhs, cfg.tolerance, cfg.min_step)
    rho = np.array(rho0, dtype=complex)
    observe(0, rho)
    for n in range(1, count):
        try:
            rho = stepper.advance(times[n - 1], rho, times[n] - times[n - 1])
        except PoleCrossingError as exc:
            exc.partial = result(n, rho, stepper)
            logger.error(str(exc))
            raise
        observe(n, rho)

    drift = float(record["trace_error"][-1])
    logger.info(f"Integrated {count - 1} steps ({stepper.rejected} rejected); "
                f"final trace drift {drift:.3g}, smallest eigenvalue "
                f"{float(np.min(record['min_eigenvalue'])):.3g}")
    return result(count, rho, stepper)


def _grid_times(track: CoefficientTrack, cfg: EvolveConfig) -> np.ndarray:
    if cfg.step < track.trajectory.step - 1e-12:
        raise ValueError(f"Coefficient grid step {track.trajectory.step} is coarser than "
                         f"the integration step {cfg.step}")
    if cfg.t_end > track.times[-1] + 1e-9:
        logger.warning(f"Coefficient grid ends at t={track.times[-1]:.6g}; "
                       f"integration stops there instead of t={cfg.t_end:.6g}")
    return cfg.output_times(track.times[-1] + 1e-12)


def evolve_boson_tlme(track: CoefficientTrack, cfg: EvolveConfig,
                      rho0: Optional[DensityMatrix] = None) -> TlmeTrajectory:
    """Integrate the boson time-local master equation for N <= 2 modes."""
    if track.size > 2:
        raise ValueError(f"Boson integration supports at most 2 modes, got {track.size}")
    cutoffs = (cfg.cutoff,) * track.size
    if rho0 is None:
        rho0 = parse_initial_state(cfg.initial_state, Basis.BOSON_FOCK, cutoffs)
    if rho0.basis is not Basis.BOSON_FOCK:
        raise ValueError(f"Boson integration needs a Fock-basis state, got {rho0.basis.value}")
    if len(rho0.cutoffs) != track.size:
        raise ValueError(f"Initial state has {len(rho0.cutoffs)} modes, coefficients {track.size}")
    lowering = boson_operators(rho0.cutoffs)
    rhs = tlme_generator(track, lowering)
    return _integrate(rhs, rho0.matrix, _grid_times(track, cfg), cfg, lowering,
                      Basis.BOSON_FOCK, rho0.cutoffs)


def evolve_qubit_tlme(track: CoefficientTrack, cfg: EvolveConfig,
                      rho0: Optional[DensityMatrix] = None, driven: bool = True) -> TlmeTrajectory:
    """Integrate the qubit time-local master equation.

    With zero drive (or ``driven=False``) this is the spontaneous-emission
    equation. With a drive it is the one-mode boson generator applied to the
    qubit lowering operator, valid only under weak excitation.
    """
    if track.size != 1:
        raise ValueError(f"Qubit integration needs single-subsystem coefficients, got {track.size}")
    if np.any(track.lam != 0):
        raise ValueError("Qubit integration needs a zero-temperature environment")
    if rho0 is None:
        spec = cfg.initial_state if cfg.initial_state != "vacuum" else "ground"
        rho0 = parse_initial_state(spec, Basis.QUBIT)
    if rho0.basis is not Basis.QUBIT:
        raise ValueError(f"Qubit integration needs a qubit state, got {rho0.basis.value}")
    lowering = [qutip.sigmam().full()]
    rhs = tlme_generator(track, lowering, driven=driven)
    return _integrate(rhs, rho0.matrix, _grid_times(track, cfg), cfg, lowering,
                      Basis.QUBIT, sigma_z_op=qutip.sigmaz().full())


def exact_first_moment(trajectory: GreensTrajectory, drive: Drive,
                       initial: Sequence[complex]) -> np.ndarray:
    """<a(t)> = V(t) a0 - i (V * Omega)(t) on the trajectory grid."""
    a0 = np.atleast_1d(np.asarray(initial, dtype=complex))
    if a0.size == 1 and trajectory.size > 1:
        a0 = np.concatenate([a0, np.zeros(trajectory.size - 1, dtype=complex)])
    if a0.size != trajectory.size:
        raise ValueError(f"Initial amplitude has {a0.size} components, system has {trajectory.size}")
    omega = drive.sample(trajectory.times, trajectory.size)
    conv = convolve_drive(trajectory.green, omega, trajectory.step, drive.is_constant)
    return np.einsum("nab,b->na", trajectory.green, a0) - 1j * conv


@dataclass(frozen=True)
class WeakExcitationReport:
    max_excited_population: float
    threshold: float
    outside_regime: bool


def weak_excitation_flag(trajectory: TlmeTrajectory,
                         threshold: Optional[float] = None) -> WeakExcitationReport:
    """Flag qubit runs whose excited population leaves the weak-excitation regime."""
    if threshold is None:
        threshold = get_settings().weak_excitation_threshold
    peak = float(np.max(trajectory.excited_population))
    peak = max(peak, 0.0)
    if peak > threshold:
        logger.warning(f"Excited population reaches {peak:.3g} (> {threshold:g}); "
                       f"the driven qubit equation is outside its weak-excitation regime")
    return WeakExcitationReport(max_excited_population=peak, threshold=threshold,
                                outside_regime=peak > threshold)
