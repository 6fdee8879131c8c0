"""Green's function of the driven boson system.

Solves dV/dt = -i Delta V - int_0^t F(t - t') V(t') dt' with V(0) = I on a
uniform grid, either by product-trapezoidal discretisation (any kernel) or by
embedding exponential kernels into a closed linear ODE system.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import lu_factor, lu_solve

from .errors import KernelMismatchError, SingularStepError, SolverError
from .settings import get_settings
from .spectral import KernelSampler

logger = logging.getLogger(__name__)

# A grid interval is a zero passage of det V when the linearised minimum of
# |det V| on it is below this fraction of the change of det V across it.
PASSAGE_RATIO = 0.05


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """Hermitian N x N matrix of detunings (diagonal) and subsystem couplings."""

    delta: np.ndarray

    def __post_init__(self):
        delta = np.atleast_2d(np.asarray(self.delta, dtype=complex))
        if delta.ndim != 2 or delta.shape[0] != delta.shape[1]:
            raise ValueError(f"Coupling matrix must be square, got shape {delta.shape}")
        if not np.allclose(delta, delta.conj().T, atol=1e-12):
            raise ValueError("Coupling matrix must be Hermitian (Delta_jk^* = Delta_kj)")
        delta.setflags(write=False)
        object.__setattr__(self, "delta", delta)

    @classmethod
    def diagonal(cls, *detunings: float) -> "CouplingMatrix":
        return cls(np.diag(np.asarray(detunings, dtype=complex)))

    @property
    def size(self) -> int:
        return self.delta.shape[0]


@dataclass(frozen=True, eq=False)
class GreensTrajectory:
    """V(t) and dV/dt on the grid t_n = n h, with invertibility diagnostics."""

    times: np.ndarray
    green: np.ndarray
    derivative: np.ndarray
    coupling: CouplingMatrix
    min_abs_det: float
    near_singular_times: np.ndarray
    singular_mask: np.ndarray
    zero_passage_times: np.ndarray
    solver: str
    auxiliary: Optional[np.ndarray] = None

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def steps(self) -> int:
        return self.times.size - 1

    @property
    def size(self) -> int:
        return self.green.shape[1]

    def determinants(self) -> np.ndarray:
        return np.linalg.det(self.green)


def _singularity_diagnostics(times: np.ndarray, green: np.ndarray, factor: float):
    dets = np.linalg.det(green)
    magnitudes = np.abs(dets)
    eps_sing = factor * float(np.max(magnitudes))
    mask = magnitudes < eps_sing

    change = np.diff(dets)
    size2 = np.abs(change) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        s_min = np.where(size2 > 0, -np.real(dets[:-1] * change.conj()) / size2, -1.0)
    inside = (s_min >= 0.0) & (s_min <= 1.0)
    lowest = np.abs(dets[:-1] + np.clip(s_min, 0.0, 1.0) * change)
    passage = inside & ((lowest < eps_sing) | (lowest < PASSAGE_RATIO * np.abs(change)))
    mask[:-1] |= passage
    mask[1:] |= passage

    step = times[1] - times[0]
    passage_times = times[:-1][passage] + s_min[passage] * step
    return float(np.min(magnitudes)), times[mask], mask, passage_times


def _build_trajectory(times, green, derivative, coupling, solver, auxiliary=None):
    min_det, near, mask, passages = _singularity_diagnostics(
        times, green, get_settings().singular_factor
    )
    if passages.size:
        logger.info(f"Green's function passes through zero {passages.size} times "
                    f"(first at t={passages[0]:.6g})")
    for array in (times, green, derivative, mask, near, passages):
        array.setflags(write=False)
    return GreensTrajectory(
        times=times, green=green, derivative=derivative, coupling=coupling,
        min_abs_det=min_det, near_singular_times=near, singular_mask=mask,
        zero_passage_times=passages, solver=solver, auxiliary=auxiliary,
    )


def _validate_grid(coupling: CouplingMatrix, kernel: KernelSampler, step: float, steps: int):
    if step <= 0:
        raise ValueError(f"Step must be positive, got {step}")
    if steps < 1:
        raise ValueError(f"Need at least one step, got {steps}")
    if kernel.size != coupling.size:
        raise ValueError(
            f"Kernel acts on {kernel.size} subsystems but the coupling matrix on {coupling.size}"
        )


def solve_volterra_general(coupling: CouplingMatrix, kernel: KernelSampler,
                           step: float, steps: int) -> GreensTrajectory:
    """Product-trapezoidal convolution with trapezoidal time stepping (second order)."""
    _validate_grid(coupling, kernel, step, steps)
    n_sub = coupling.size
    h = step
    times = h * np.arange(steps + 1)
    kernel_samples = kernel.sample_dissipation(times)
    generator = 1j * coupling.delta + 0.5 * kernel.dissipation_weight
    identity = np.eye(n_sub, dtype=complex)

    step_matrix = identity + 0.5 * h * (generator + 0.5 * h * kernel_samples[0])
    if not np.all(np.isfinite(step_matrix)) or np.linalg.cond(step_matrix) > 1e12:
        raise SingularStepError(0.0, h)
    factors = lu_factor(step_matrix)

    green = np.zeros((steps + 1, n_sub, n_sub), dtype=complex)
    derivative = np.zeros_like(green)
    green[0] = identity
    derivative[0] = -generator

    for n in range(steps):
        history = 0.5 * kernel_samples[n + 1] @ green[0]
        if n >= 1:
            history += np.einsum("kab,kbc->ac", kernel_samples[n:0:-1], green[1:n + 1])
        rhs = green[n] + 0.5 * h * derivative[n] - 0.5 * h * h * history
        green[n + 1] = lu_solve(factors, rhs)
        derivative[n + 1] = (-generator @ green[n + 1]
                             - h * (history + 0.5 * kernel_samples[0] @ green[n + 1]))
        if not np.all(np.isfinite(green[n + 1])):
            raise SingularStepError(times[n + 1], h)

    logger.debug(f"General Volterra solve finished: {steps} steps, h={h:.4g}")
    return _build_trajectory(times, green, derivative, coupling, "general")


def solve_volterra_expfast(coupling: CouplingMatrix, kernel: KernelSampler,
                           step: float, steps: int, rtol: float = 1e-11,
                           atol: float = 1e-13) -> GreensTrajectory:
    """Exact embedding of exponential kernels.

    With F(tau) = sum_a P_a exp(-z_a tau) the auxiliary matrices
    U_a(t) = int_0^t exp(-z_a (t - t')) V(t') dt' close the system
    V' = -i Delta V - sum_a P_a U_a, U_a' = V - z_a U_a, integrated with DOP853.
    """
    _validate_grid(coupling, kernel, step, steps)
    if not kernel.analytic:
        raise KernelMismatchError("Exponential embedding requires Lorentzian or Markovian kernels")
    terms = kernel.exponential_terms()
    n_sub = coupling.size
    n_aux = len(terms)
    block = n_sub * n_sub
    generator = 1j * coupling.delta + 0.5 * kernel.dissipation_weight
    projectors = [projector for projector, _ in terms]
    exponents = [exponent for _, exponent in terms]
    times = step * np.arange(steps + 1)

    def unpack(y):
        return y[:block].reshape(n_sub, n_sub), y[block:].reshape(n_aux, n_sub, n_sub)

    def green_rate(green, aux):
        rate = -generator @ green
        for a in range(n_aux):
            rate -= projectors[a] @ aux[a]
        return rate

    def rhs(_t, y):
        green, aux = unpack(y)
        daux = np.empty_like(aux)
        for a in range(n_aux):
            daux[a] = green - exponents[a] * aux[a]
        return np.concatenate([green_rate(green, aux).ravel(), daux.ravel()])

    y0 = np.concatenate([np.eye(n_sub, dtype=complex).ravel(),
                         np.zeros(n_aux * block, dtype=complex)])
    solution = solve_ivp(rhs, (0.0, times[-1]), y0, method="DOP853", t_eval=times,
                         rtol=rtol, atol=atol)
    if not solution.success:
        raise SolverError(f"Exponential-embedding integration failed: {solution.message}")

    states = solution.y.T
    green = states[:, :block].reshape(times.size, n_sub, n_sub).copy()
    auxiliary = states[:, block:].reshape(times.size, n_aux, n_sub, n_sub).copy()
    green[0] = np.eye(n_sub)
    auxiliary[0] = 0.0
    derivative = np.array([green_rate(green[n], auxiliary[n]) for n in range(times.size)])
    return _build_trajectory(times, green, derivative, coupling, "expfast", auxiliary)


def solve_volterra(coupling: CouplingMatrix, kernel: KernelSampler, step: float,
                   steps: int, method: str = "auto") -> GreensTrajectory:
    """Dispatch to the exponential embedding when possible, else the general solver."""
    if method == "auto":
        method = "expfast" if kernel.analytic else "general"
    if method == "expfast":
        return solve_volterra_expfast(coupling, kernel, step, steps)
    if method == "general":
        return solve_volterra_general(coupling, kernel, step, steps)
    raise ValueError(f"Unknown Volterra method '{method}'")


def laplace_green_at_zero(coupling: CouplingMatrix, kernel: KernelSampler) -> np.ndarray:
    """V^(0) = int_0^inf V(t) dt = (i Delta + F^(0))^-1 for exponential kernels."""
    transform = 1j * coupling.delta + 0.5 * kernel.dissipation_weight
    for projector, exponent in kernel.exponential_terms():
        transform = transform + projector / exponent
    return np.linalg.inv(transform)


def trajectory_from_values(times: Sequence[float], green: np.ndarray, derivative: np.ndarray,
                           coupling: CouplingMatrix, solver: str = "closed-form") -> GreensTrajectory:
    """Wrap externally computed V(t), dV/dt samples (closed forms, test oracles)."""
    times = np.asarray(times, dtype=float)
    green = np.asarray(green, dtype=complex).reshape(times.size, coupling.size, coupling.size)
    derivative = np.asarray(derivative, dtype=complex).reshape(green.shape)
    return _build_trajectory(times.copy(), green.copy(), derivative.copy(), coupling, solver)
