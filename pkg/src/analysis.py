"""Steady-state formulas, the Bloch constraint and solver comparisons."""

import logging
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import find_peaks

from .coeffs import Drive, convolve_drive
from .errors import NonConvergenceError, SolverError
from .settings import get_settings
from .spectral import KernelSampler
from .volterra import GreensTrajectory, laplace_green_at_zero

logger = logging.getLogger(__name__)

# |V(t_end)| must fall below this before the convolution is read as its limit
DECAY_THRESHOLD = 1e-6
PEAK_PROMINENCE = 1e-4


class Source(str, Enum):
    CLOSED_FORM = "closed-form"
    RATIO = "ratio"
    QUBIT_TLME = "qubit-tlme"
    PSEUDOMODE = "pseudomode"


@dataclass(frozen=True)
class ConstraintResidual:
    residual: float
    normalized: float


@dataclass(frozen=True)
class SteadyStateRecord:
    """Stationary qubit observables at one sweep value.

    Records of failed points keep ``converged=False`` and NaN observables.
    """

    value: float
    source: Source
    sigma_z: float
    sigma_minus: complex = 0.0
    residual: float = 0.0
    normalized_violation: float = 0.0
    cutoff: Optional[int] = None
    converged: bool = True
    message: str = ""

    def __post_init__(self):
        if self.converged and not -1.0 - 1e-9 <= self.sigma_z <= 1.0 + 1e-9:
            raise ValueError(f"<sigma_z> = {self.sigma_z} outside [-1, 1]")

    @classmethod
    def failed(cls, value: float, source: Source, message: str) -> "SteadyStateRecord":
        return cls(value=value, source=source, sigma_z=float("nan"), sigma_minus=complex("nan"),
                   residual=float("nan"), normalized_violation=float("nan"),
                   converged=False, message=message)

    @classmethod
    def from_observables(cls, value: float, source: Source, sigma_z: float,
                         sigma_minus: complex = 0.0, cutoff: Optional[int] = None) -> "SteadyStateRecord":
        check = constraint_residual(sigma_z, sigma_minus)
        return cls(value=value, source=source, sigma_z=sigma_z, sigma_minus=sigma_minus,
                   residual=check.residual, normalized_violation=check.normalized, cutoff=cutoff)


def sigma_z_infinity_closed_form(gamma: float, linewidth: float, detuning: float,
                                 drive: complex) -> float:
    """-[1 + 2|Omega|^2 (lambda^2 + Delta^2) / ((lambda Gamma/2 - Delta^2)^2 + lambda^2 Delta^2)]^-1 at delta = 0."""
    strength = abs(drive) ** 2
    if strength == 0:
        return -1.0
    inner = (0.5 * linewidth * gamma - detuning ** 2) ** 2 + (linewidth * detuning) ** 2
    if inner == 0:
        return -0.0
    return -1.0 / (1.0 + 2.0 * strength * (linewidth ** 2 + detuning ** 2) / inner)


def asymptotic_convolution(trajectory: GreensTrajectory, drive: Drive,
                           kernel: Optional[KernelSampler] = None) -> np.ndarray:
    """lim_{t->inf} (V * Omega)(t).

    Exponential kernels with a constant drive use the Laplace value V^(0) Omega;
    otherwise the convolution is read at the end of the window once V has decayed.
    """
    if kernel is not None and kernel.analytic and drive.is_constant:
        amplitudes = drive.sample(trajectory.times[:1], trajectory.size)[0]
        return laplace_green_at_zero(trajectory.coupling, kernel) @ amplitudes
    residual = float(np.linalg.norm(trajectory.green[-1], 2))
    if residual > DECAY_THRESHOLD:
        raise NonConvergenceError(
            f"Green's function has not decayed by t={trajectory.times[-1]:.6g} "
            f"(|V| = {residual:.3g} > {DECAY_THRESHOLD:g})"
        )
    omega = drive.sample(trajectory.times, trajectory.size)
    return convolve_drive(trajectory.green, omega, trajectory.step, drive.is_constant)[-1]


def general_steady_state_from_ratio(trajectory: GreensTrajectory, drive: Drive,
                                    kernel: Optional[KernelSampler] = None) -> float:
    """<sigma_z(inf)> = -[1 + 2 |lim (V*Omega)|^2]^-1 for a single qubit."""
    if trajectory.size != 1:
        raise ValueError(f"Steady-state ratio formula is for one subsystem, got {trajectory.size}")
    limit = asymptotic_convolution(trajectory, drive, kernel)[0]
    return -1.0 / (1.0 + 2.0 * abs(limit) ** 2)


def constraint_residual(sigma_z: float, sigma_minus: complex,
                        floor: Optional[float] = None) -> ConstraintResidual:
    """<s_z>(<s_z> + 1) + 2|<s_->|^2 and its value relative to the larger side."""
    if floor is None:
        floor = get_settings().violation_floor
    left = sigma_z * (sigma_z + 1.0)
    right = 2.0 * abs(sigma_minus) ** 2
    residual = left + right
    scale = max(abs(left), right, floor)
    return ConstraintResidual(residual=float(residual), normalized=float(abs(residual) / scale))


@dataclass(frozen=True)
class DiscrepancyMetrics:
    max_abs: float
    l2: float
    steady_state: float

    def to_dict(self) -> dict:
        return asdict(self)


def discrepancy_report(first, second) -> DiscrepancyMetrics:
    """Compare <sigma_z(t)> of two trajectories on the grid of the first."""
    times_a, values_a = np.asarray(first.times), np.asarray(first.sigma_z)
    times_b, values_b = np.asarray(second.times), np.asarray(second.sigma_z)
    if times_b[0] > times_a[0] + 1e-9 or times_b[-1] < times_a[-1] - 1e-9:
        raise ValueError(
            f"Second trajectory covers [{times_b[0]:.6g}, {times_b[-1]:.6g}], "
            f"cannot interpolate onto [{times_a[0]:.6g}, {times_a[-1]:.6g}]"
        )
    diff = values_a - np.interp(times_a, times_b, values_b)
    l2 = float(np.sqrt(trapezoid(diff ** 2, times_a))) if times_a.size > 1 else float(abs(diff[0]))
    return DiscrepancyMetrics(max_abs=float(np.max(np.abs(diff))), l2=l2,
                              steady_state=float(abs(values_a[-1] - values_b[-1])))


@dataclass(frozen=True)
class PoleSpectrum:
    times: np.ndarray
    period: Optional[float] = None
    expected_period: Optional[float] = None

    @property
    def count(self) -> int:
        return int(self.times.size)

    @property
    def relative_error(self) -> Optional[float]:
        if self.period is None or self.expected_period is None:
            return None
        return abs(self.period - self.expected_period) / self.expected_period

    def to_dict(self) -> dict:
        return {"count": self.count, "times": [float(t) for t in self.times],
                "period": self.period, "expected_period": self.expected_period,
                "relative_error": self.relative_error}


def pole_spectrum(trajectory: GreensTrajectory, gamma: Optional[float] = None,
                  linewidth: Optional[float] = None, require_period: bool = False) -> PoleSpectrum:
    """Zero passages of det V and the asymptotic spacing of the gamma(t) poles.

    The spacing is the slope of a straight-line fit of pole time against index
    over the later half of the poles. With ``gamma`` and ``linewidth`` the
    estimate is compared with pi / sqrt(lambda Gamma / 2).
    """
    times = np.asarray(trajectory.zero_passage_times)
    expected = None
    if gamma and linewidth:
        expected = float(np.pi / np.sqrt(0.5 * linewidth * gamma))
    if times.size < 3:
        if require_period:
            raise SolverError(f"Only {times.size} poles in the window; at least 3 are needed "
                              f"for a period estimate")
        return PoleSpectrum(times=times, expected_period=expected)
    tail = times[times.size // 2:] if times.size >= 6 else times
    slope = np.polyfit(np.arange(tail.size), tail, 1)[0]
    return PoleSpectrum(times=times, period=float(slope), expected_period=expected)


def relative_change(times: np.ndarray, values: np.ndarray, fraction: float = 0.1) -> float:
    """Largest |x(t) - x(t_end)| / |x(t_end)| over the final ``fraction`` of the window."""
    times = np.asarray(times)
    values = np.asarray(values)
    start = times[-1] - fraction * (times[-1] - times[0])
    tail = values[times >= start]
    final = values[-1]
    scale = max(float(np.max(np.abs(final))), np.finfo(float).tiny)
    return float(np.max(np.abs(tail - final)) / scale)


def local_maxima(values: np.ndarray, prominence: Optional[float] = None) -> np.ndarray:
    """Indices of strict interior local maxima, ignoring ripples below ``prominence``.

    The default prominence is a small fraction of the value range.
    """
    values = np.asarray(values, dtype=float)
    finite = np.isfinite(values)
    if finite.sum() < 3:
        return np.array([], dtype=int)
    if prominence is None:
        span = float(np.nanmax(values) - np.nanmin(values))
        prominence = PEAK_PROMINENCE * span if span > 0 else None
    filled = np.where(finite, values, np.nanmin(values))
    peaks, _ = find_peaks(filled, prominence=prominence)
    return peaks
