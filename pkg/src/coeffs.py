"""Time-local coefficients gamma(t), xi(t), W(t) and lambda(t).

    gamma(t)  = -[dV/dt] V^-1
    xi(t)     = [gamma(t) + d/dt](V * Omega)(t)
    W(t)      = int_0^t int_0^t V(t - t1) G(t1 - t2) V^dagger(t - t2) dt1 dt2
    lambda(t) = dW/dt + gamma W + W gamma^dagger

All tracks live on the grid of the Green's-function trajectory they are built
from. Off-grid values are rebuilt from locally interpolated smooth primitives
(V, dV/dt, the drive convolutions, W and dW/dt) so that the pole structure of
gamma and xi is reproduced exactly rather than smeared by interpolation.
"""

import logging
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .spectral import KernelSampler
from .volterra import GreensTrajectory

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Drive:
    """Per-subsystem complex drive amplitude Omega_j(t).

    Either constant (``amplitudes``), tabulated (``times`` + ``values``,
    interpolated linearly) or an arbitrary callable returning an N-vector.
    """

    amplitudes: Optional[np.ndarray] = None
    times: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None
    function: Optional[Callable[[float], Sequence[complex]]] = None

    def __post_init__(self):
        given = [self.amplitudes is not None, self.values is not None, self.function is not None]
        if sum(given) != 1:
            raise ValueError("Drive needs exactly one of amplitudes, tabulated values or a function")
        if self.amplitudes is not None:
            amps = np.atleast_1d(np.asarray(self.amplitudes, dtype=complex))
            if not np.all(np.isfinite(amps)):
                raise ValueError("Drive amplitudes must be finite")
            object.__setattr__(self, "amplitudes", amps)
        if self.values is not None:
            times = np.asarray(self.times, dtype=float)
            values = np.asarray(self.values, dtype=complex)
            if values.ndim == 1:
                values = values[:, None]
            if times.ndim != 1 or times.size != values.shape[0] or times.size < 2:
                raise ValueError("Tabulated drive needs matching 1-D times and values")
            if not np.all(np.isfinite(values)):
                raise ValueError("Tabulated drive values must be finite")
            object.__setattr__(self, "times", times)
            object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, *amplitudes: complex) -> "Drive":
        return cls(amplitudes=np.asarray(amplitudes, dtype=complex))

    @classmethod
    def zero(cls, size: int = 1) -> "Drive":
        return cls(amplitudes=np.zeros(size, dtype=complex))

    @classmethod
    def tabulated(cls, times: Sequence[float], values) -> "Drive":
        return cls(times=np.asarray(times), values=np.asarray(values))

    @classmethod
    def from_function(cls, function: Callable[[float], Sequence[complex]]) -> "Drive":
        return cls(function=function)

    @property
    def is_constant(self) -> bool:
        return self.amplitudes is not None

    def at(self, t: float) -> np.ndarray:
        if self.amplitudes is not None:
            return self.amplitudes
        if self.values is not None:
            return np.array([np.interp(t, self.times, col.real) + 1j * np.interp(t, self.times, col.imag)
                             for col in self.values.T])
        value = np.atleast_1d(np.asarray(self.function(t), dtype=complex))
        if not np.all(np.isfinite(value)):
            raise ValueError(f"Drive is not finite at t={t}")
        return value

    def sample(self, times: np.ndarray, size: int) -> np.ndarray:
        if self.amplitudes is not None:
            amps = self.amplitudes
            if amps.size == 1 and size > 1:
                amps = np.concatenate([amps, np.zeros(size - 1, dtype=complex)])
            if amps.size != size:
                raise ValueError(f"Drive has {amps.size} components, system has {size}")
            return np.broadcast_to(amps, (len(times), size)).copy()
        samples = np.array([self.at(t) for t in times])
        if samples.shape[1] != size:
            raise ValueError(f"Drive has {samples.shape[1]} components, system has {size}")
        return samples


class TimeLocalCoefficients(NamedTuple):
    """Coefficients of the time-local master equation at one instant."""

    gamma: np.ndarray
    xi: np.ndarray
    lam: np.ndarray


def _local_cubic(times: np.ndarray, samples: np.ndarray, t: float) -> np.ndarray:
    """Four-point Lagrange interpolation on a uniform grid."""
    count = times.size
    h = times[1] - times[0]
    if count < 4:
        idx = int(np.clip(np.floor((t - times[0]) / h), 0, count - 2))
        x = (t - times[idx]) / h
        return (1.0 - x) * samples[idx] + x * samples[idx + 1]
    idx = int(np.clip(np.floor((t - times[0]) / h), 1, count - 3))
    x = (t - times[idx]) / h
    weights = (
        -x * (x - 1.0) * (x - 2.0) / 6.0,
        (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0,
        -(x + 1.0) * x * (x - 2.0) / 2.0,
        (x + 1.0) * x * (x - 1.0) / 6.0,
    )
    return (weights[0] * samples[idx - 1] + weights[1] * samples[idx]
            + weights[2] * samples[idx + 1] + weights[3] * samples[idx + 2])


def _right_inverse_product(numerator: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """numerator @ inv(matrix) for stacks of square matrices; singular entries become inf."""
    try:
        return np.swapaxes(np.linalg.solve(np.swapaxes(matrix, -1, -2),
                                           np.swapaxes(numerator, -1, -2)), -1, -2)
    except np.linalg.LinAlgError:
        if matrix.ndim == 2:
            return np.full_like(numerator, np.inf)
        return np.array([_right_inverse_product(num, mat) for num, mat in zip(numerator, matrix)])


def gamma_track(trajectory: GreensTrajectory):
    """gamma_n = -dV_n V_n^-1; returns (gamma samples, pole flags).

    Steps near a zero of det V are flagged, not rejected; gamma is stored as computed.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        gamma = -_right_inverse_product(trajectory.derivative, trajectory.green)
    return gamma, trajectory.singular_mask.copy()


def convolve_drive(green: np.ndarray, drive_samples: np.ndarray, step: float, constant: bool) -> np.ndarray:
    """(V * Omega)(t_n) = int_0^t_n V(t_n - s) Omega(s) ds by the trapezoidal rule."""
    if constant:
        integral = cumulative_trapezoid(green, dx=step, axis=0, initial=0)
        return np.einsum("nab,b->na", integral, drive_samples[0])
    count = green.shape[0]
    conv = np.zeros(drive_samples.shape, dtype=complex)
    for n in range(1, count):
        total = np.einsum("jab,jb->a", green[n::-1], drive_samples[:n + 1])
        ends = green[n] @ drive_samples[0] + green[0] @ drive_samples[n]
        conv[n] = step * (total - 0.5 * ends)
    return conv


def xi_track(trajectory: GreensTrajectory, drive: Drive, gamma: np.ndarray):
    """xi_n = gamma_n (V*Omega)_n + Omega(t_n) + (dV*Omega)_n.

    Returns (xi, V*Omega, dV*Omega); d/dt (V*Omega) = Omega + dV*Omega since V(0) = I.
    """
    times = trajectory.times
    omega = drive.sample(times, trajectory.size)
    conv = convolve_drive(trajectory.green, omega, trajectory.step, drive.is_constant)
    dv_conv = convolve_drive(trajectory.derivative, omega, trajectory.step, drive.is_constant)
    with np.errstate(over="ignore", invalid="ignore"):
        xi = np.einsum("nab,nb->na", gamma, conv) + omega + dv_conv
    xi[0] = omega[0]
    return xi, conv, dv_conv


def _hermitian(stack: np.ndarray) -> np.ndarray:
    return 0.5 * (stack + np.conj(np.swapaxes(stack, -1, -2)))


def w_track(trajectory: GreensTrajectory, kernel: KernelSampler):
    """W(t_n) by the double trapezoidal rule, updated incrementally, plus dW/dt.

    With K(s1, s2) = V(s1) G(s2 - s1) V^dagger(s2) the integrand is independent
    of t, so W(t_n) is the trapezoid sum over the square [0, t_n]^2. The new
    row and column contributed by t_n need Y_n = sum_{j<n} c_j V_j G((n-j)h),
    and dW/dt = Z V^dagger + V Z^dagger with Z(t) = int_0^t V(s) G(t - s) ds.
    """
    times = trajectory.times
    green = trajectory.green
    count, n_sub = green.shape[0], trajectory.size
    w = np.zeros((count, n_sub, n_sub), dtype=complex)
    dw = np.zeros_like(w)
    if kernel.zero_temperature:
        return w, dw

    h = trajectory.step
    lags = kernel.sample_noise(times)
    weights = np.full(count, h)
    weights[0] = 0.5 * h
    weighted_green = weights[:, None, None] * green
    green_dag = np.conj(np.swapaxes(green, -1, -2))

    running = 0.25 * h * h * green[0] @ lags[0] @ green_dag[0]
    for n in range(1, count):
        partial = np.einsum("jab,jbc->ac", weighted_green[:n], lags[n:0:-1])
        row = green[n] @ partial.conj().T
        diagonal = green[n] @ lags[0] @ green_dag[n]
        running = running + h * (row + row.conj().T) + h * h * diagonal
        w[n] = running - 0.5 * h * (row + row.conj().T) - 0.75 * h * h * diagonal
        z = partial + 0.5 * h * green[n] @ lags[0]
        dw[n] = z @ green_dag[n] + green[n] @ z.conj().T

    white = kernel.noise_weight
    if np.any(white):
        local = green @ white @ green_dag
        w += cumulative_trapezoid(local, dx=h, axis=0, initial=0)
        dw += local
    return _hermitian(w), _hermitian(dw)


def lambda_track(w: np.ndarray, gamma: np.ndarray, dw: Optional[np.ndarray] = None,
                 step: Optional[float] = None) -> np.ndarray:
    """lambda_n = dW_n + gamma_n W_n + W_n gamma_n^dagger.

    dW/dt comes from ``w_track``; without it centred differences (one-sided at the ends) are used.
    """
    if dw is None:
        if step is None:
            raise ValueError("A step is required to differentiate W numerically")
        dw = np.gradient(w, step, axis=0, edge_order=2)
    gamma_dag = np.conj(np.swapaxes(gamma, -1, -2))
    with np.errstate(over="ignore", invalid="ignore"):
        lam = dw + gamma @ w + w @ gamma_dag
    return _hermitian(lam)


@dataclass(frozen=True, eq=False)
class CoefficientTrack:
    """gamma, xi, W, lambda on the Green's-function grid, with their primitives."""

    trajectory: GreensTrajectory
    drive: Drive
    gamma: np.ndarray
    xi: np.ndarray
    w: np.ndarray
    dw: np.ndarray
    lam: np.ndarray
    conv: np.ndarray
    dv_conv: np.ndarray
    pole_flags: np.ndarray
    zero_temperature: bool = True

    @property
    def times(self) -> np.ndarray:
        return self.trajectory.times

    @property
    def size(self) -> int:
        return self.trajectory.size

    def pole_times(self) -> np.ndarray:
        return self.trajectory.zero_passage_times

    def at(self, t: float) -> TimeLocalCoefficients:
        """Coefficients at an arbitrary time inside the grid."""
        times = self.times
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise ValueError(f"t={t} outside the coefficient grid [{times[0]}, {times[-1]}]")
        green = _local_cubic(times, self.trajectory.green, t)
        derivative = _local_cubic(times, self.trajectory.derivative, t)
        conv = _local_cubic(times, self.conv, t)
        dv_conv = _local_cubic(times, self.dv_conv, t)
        with np.errstate(over="ignore", invalid="ignore"):
            gamma = -_right_inverse_product(derivative, green)
            xi = gamma @ conv + self.drive.at(t)[: self.size] + dv_conv
            if self.zero_temperature:
                lam = np.zeros_like(gamma)
            else:
                w = _local_cubic(times, self.w, t)
                dw = _local_cubic(times, self.dw, t)
                lam = dw + gamma @ w + w @ gamma.conj().T
                lam = 0.5 * (lam + lam.conj().T)
        return TimeLocalCoefficients(gamma, xi, lam)

    def ratio(self) -> np.ndarray:
        """gamma(t)^-1 xi(t) = (V*Omega)(t) + gamma(t)^-1 [Omega(t) + (dV*Omega)(t)]."""
        omega = self.drive.sample(self.times, self.size)
        with np.errstate(over="ignore", invalid="ignore"):
            rhs = (omega + self.dv_conv)[..., None]
            try:
                solved = np.linalg.solve(self.gamma, rhs)[..., 0]
            except np.linalg.LinAlgError:
                solved = np.array([np.linalg.lstsq(g, r, rcond=None)[0][:, 0]
                                   for g, r in zip(self.gamma, rhs)])
        return self.conv + solved


def build_coefficients(trajectory: GreensTrajectory, drive: Drive,
                       kernel: Optional[KernelSampler] = None) -> CoefficientTrack:
    """Assemble every coefficient track from one Green's-function trajectory."""
    gamma, flags = gamma_track(trajectory)
    xi, conv, dv_conv = xi_track(trajectory, drive, gamma)
    zero_temperature = kernel is None or kernel.zero_temperature
    if zero_temperature:
        w = np.zeros_like(gamma)
        dw = np.zeros_like(gamma)
        lam = np.zeros_like(gamma)
    else:
        w, dw = w_track(trajectory, kernel)
        lam = lambda_track(w, gamma, dw)
    if flags.any():
        logger.info(f"Coefficient track has {int(flags.sum())} near-singular steps "
                    f"({trajectory.zero_passage_times.size} poles)")
    for array in (gamma, xi, w, dw, lam, conv, dv_conv, flags):
        array.setflags(write=False)
    return CoefficientTrack(trajectory=trajectory, drive=drive, gamma=gamma, xi=xi, w=w, dw=dw,
                            lam=lam, conv=conv, dv_conv=dv_conv, pole_flags=flags,
                            zero_temperature=zero_temperature)
