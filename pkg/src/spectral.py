"""Spectral densities and the dissipation/noise kernels they generate.

A subenvironment alpha couples to subsystem j with strength kappa_j, so that
J_alpha,jk(w) = kappa_j kappa_k^* J_alpha(w). The kernels

    F_jk(tau) = sum_alpha int J_alpha,jk(w) exp(-i w tau) dw
    G_jk(tau) = sum_alpha int J_alpha,jk(w) n_alpha(w) exp(-i w tau) dw

are evaluated in closed form for Lorentzian densities and by QUADPACK
Fourier quadrature otherwise. Frequencies are measured from the drive
frequency; omega0 restores the absolute frequency in the Bose factor.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import quad, trapezoid

from .errors import KernelMismatchError, QuadratureError
from .settings import get_settings

logger = logging.getLogger(__name__)

# Lorentzian window half-width in linewidths (and in units of 1/|tau|)
WINDOW_WIDTHS = 50.0
# QUADPACK error estimates are accepted up to this multiple of the requested tolerance
QUADRATURE_SLACK = 100.0


class SpectralKind(str, Enum):
    """Supported families of spectral density."""

    LORENTZIAN = "lorentzian"
    MARKOVIAN = "markovian"
    TABULATED = "tabulated"


@dataclass(frozen=True, eq=False)
class SpectralModel:
    """Spectral density of one subenvironment together with its temperature.

    Lorentzian: J(w) = (gamma/2pi) lambda^2 / ((w - detuning + offset)^2 + lambda^2).
    Markovian: flat J(w) = gamma/2pi, i.e. F(tau) = gamma delta(tau).
    Tabulated: J sampled on ``frequencies`` and interpolated linearly, zero outside.
    """

    kind: SpectralKind
    gamma: float = 0.0
    linewidth: float = 0.0
    detuning: float = 0.0
    offset: float = 0.0
    temperature: float = 0.0
    omega0: Optional[float] = None
    frequencies: Optional[np.ndarray] = None
    density: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SpectralKind(self.kind))
        if self.omega0 is None:
            object.__setattr__(self, "omega0", get_settings().omega0)
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.omega0 <= 0:
            raise ValueError(f"omega0 must be > 0, got {self.omega0}")
        if self.kind is SpectralKind.LORENTZIAN and self.linewidth <= 0:
            raise ValueError(f"Lorentzian linewidth must be > 0, got {self.linewidth}")
        if self.kind is SpectralKind.TABULATED:
            self._validate_table()

    def _validate_table(self):
        if self.frequencies is None or self.density is None:
            raise ValueError("Tabulated spectral density needs frequencies and density")
        freqs = np.asarray(self.frequencies, dtype=float)
        dens = np.asarray(self.density, dtype=float)
        if freqs.ndim != 1 or freqs.shape != dens.shape or freqs.size < 2:
            raise ValueError("Tabulated frequencies and density must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(freqs) <= 0):
            raise ValueError("Tabulated frequencies must be strictly increasing")
        if np.any(dens < 0):
            raise ValueError("Tabulated spectral density must be non-negative")
        if self.temperature > 0 and freqs[0] + self.omega0 <= 0:
            raise ValueError(
                f"Tabulated grid reaches w={freqs[0]:.4g} <= -omega0; the Bose factor has a pole there"
            )
        freqs.setflags(write=False)
        dens.setflags(write=False)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "density", dens)

    @classmethod
    def lorentzian(cls, gamma: float, linewidth: float, detuning: float = 0.0,
                   offset: float = 0.0, temperature: float = 0.0,
                   omega0: Optional[float] = None) -> "SpectralModel":
        return cls(SpectralKind.LORENTZIAN, gamma=gamma, linewidth=linewidth,
                   detuning=detuning, offset=offset, temperature=temperature, omega0=omega0)

    @classmethod
    def markovian(cls, gamma: float, temperature: float = 0.0,
                  omega0: Optional[float] = None) -> "SpectralModel":
        return cls(SpectralKind.MARKOVIAN, gamma=gamma, temperature=temperature, omega0=omega0)

    @classmethod
    def tabulated(cls, frequencies: Sequence[float], density: Sequence[float],
                  temperature: float = 0.0, omega0: Optional[float] = None) -> "SpectralModel":
        return cls(SpectralKind.TABULATED, frequencies=np.array(frequencies, dtype=float),
                   density=np.array(density, dtype=float), temperature=temperature, omega0=omega0)

    @property
    def center(self) -> float:
        """Line center of the Lorentzian, measured from the drive frequency."""
        return self.detuning - self.offset

    @property
    def is_exponential(self) -> bool:
        return self.kind in (SpectralKind.LORENTZIAN, SpectralKind.MARKOVIAN)

    @property
    def decay_exponent(self) -> complex:
        """z such that F(tau) = amplitude * exp(-z tau) for a Lorentzian."""
        return complex(self.linewidth, self.center)

    @property
    def amplitude(self) -> float:
        """F(0) = gamma * lambda / 2 for a Lorentzian."""
        return 0.5 * self.gamma * self.linewidth

    def spectral_density(self, omega):
        omega = np.asarray(omega, dtype=float)
        if self.kind is SpectralKind.LORENTZIAN:
            lw = self.linewidth
            return (self.gamma / (2.0 * np.pi)) * lw ** 2 / ((omega - self.center) ** 2 + lw ** 2)
        if self.kind is SpectralKind.MARKOVIAN:
            return np.full_like(omega, self.gamma / (2.0 * np.pi))
        return np.interp(omega, self.frequencies, self.density, left=0.0, right=0.0)

    def bose_factor(self, omega):
        """n(w) = 1/(exp((w + omega0)/T) - 1); identically zero at T = 0."""
        omega = np.asarray(omega, dtype=float)
        if self.temperature == 0:
            return np.zeros_like(omega)
        return 1.0 / np.expm1((omega + self.omega0) / self.temperature)

    def interpolation_error(self) -> float:
        """Estimated relative error of linear interpolation of a tabulated density."""
        if self.kind is not SpectralKind.TABULATED or self.frequencies.size < 3:
            return 0.0
        h = np.diff(self.frequencies)
        slopes = np.diff(self.density) / h
        curvature = np.abs(np.diff(slopes)) / (0.5 * (h[1:] + h[:-1]))
        bound = np.max(curvature * np.maximum(h[1:], h[:-1]) ** 2 / 8.0)
        scale = max(float(np.max(self.density)), np.finfo(float).tiny)
        return float(bound / scale)


@dataclass(frozen=True, eq=False)
class Subenvironment:
    """A spectral model plus its coupling vector kappa_j to the N subsystems."""

    model: SpectralModel
    couplings: np.ndarray = field(default_factory=lambda: np.ones(1, dtype=complex))

    def __post_init__(self):
        kappa = np.atleast_1d(np.asarray(self.couplings, dtype=complex))
        if kappa.ndim != 1:
            raise ValueError("couplings must be a vector")
        kappa.setflags(write=False)
        object.__setattr__(self, "couplings", kappa)

    @property
    def projector(self) -> np.ndarray:
        """kappa kappa^dagger, the matrix structure of J_alpha,jk."""
        return np.outer(self.couplings, self.couplings.conj())


def _fourier_line(func, center: float, tau: float, tolerance: float) -> Tuple[complex, float]:
    """int f(w) exp(-i w tau) dw over the real line for a real f concentrated near center."""
    if tau == 0:
        value, error = quad(lambda x: func(center + x), -np.inf, np.inf,
                            epsabs=tolerance, epsrel=tolerance, limit=400)
        return complex(value), error
    even = lambda x: func(center + x) + func(center - x)
    odd = lambda x: func(center + x) - func(center - x)
    cos_part, cos_err = quad(even, 0.0, np.inf, weight="cos", wvar=tau, epsabs=tolerance, limlst=200)
    sin_part, sin_err = quad(odd, 0.0, np.inf, weight="sin", wvar=tau, epsabs=tolerance, limlst=200)
    return np.exp(-1j * center * tau) * complex(cos_part, -sin_part), cos_err + sin_err


def _fourier_window(func, center: float, lower: float, upper: float, tau: float,
                    tolerance: float) -> Tuple[complex, float]:
    """int_lower^upper f(w) exp(-i w tau) dw, integrated in x = w - center."""
    a, b = lower - center, upper - center
    if tau == 0:
        value, error = quad(lambda x: func(center + x), a, b,
                            epsabs=tolerance, epsrel=tolerance, limit=400)
        return complex(value), error
    g = lambda x: func(center + x)
    cos_part, cos_err = quad(g, a, b, weight="cos", wvar=tau, epsabs=tolerance, epsrel=tolerance, limit=400)
    sin_part, sin_err = quad(g, a, b, weight="sin", wvar=tau, epsabs=tolerance, epsrel=tolerance, limit=400)
    return np.exp(-1j * center * tau) * complex(cos_part, -sin_part), cos_err + sin_err


def _fourier_tail(func, start: float, tau: float, tolerance: float) -> Tuple[complex, float]:
    """int_start^inf f(w) exp(-i w tau) dw for tau >= 0 and an f that decays beyond start."""
    if tau == 0:
        value, error = quad(func, start, np.inf, epsabs=tolerance, epsrel=tolerance, limit=400)
        return complex(value), error
    g = lambda x: func(start + x)
    cos_part, cos_err = quad(g, 0.0, np.inf, weight="cos", wvar=tau, epsabs=tolerance, limlst=200)
    sin_part, sin_err = quad(g, 0.0, np.inf, weight="sin", wvar=tau, epsabs=tolerance, limlst=200)
    return np.exp(-1j * start * tau) * complex(cos_part, -sin_part), cos_err + sin_err


def _scalar_density(model: SpectralModel):
    return lambda w: float(model.spectral_density(w))


def dissipation_quadrature(model: SpectralModel, tau: float,
                           tolerance: Optional[float] = None) -> Tuple[complex, float]:
    """Numerical Fourier transform of J; returns (F(tau), error estimate)."""
    tol = tolerance if tolerance is not None else get_settings().quadrature_tolerance
    if model.kind is SpectralKind.MARKOVIAN:
        raise KernelMismatchError("A flat spectral density has no regular Fourier transform")
    if model.kind is SpectralKind.LORENTZIAN:
        return _fourier_line(_scalar_density(model), model.center, tau, tol)

    interp_err = model.interpolation_error()
    table_tol = get_settings().tabulated_tolerance
    if interp_err > table_tol:
        raise QuadratureError(
            f"Tabulated grid too coarse: estimated interpolation error {interp_err:.3g} "
            f"exceeds {table_tol:.3g}"
        )
    freqs = model.frequencies
    center = 0.5 * (freqs[0] + freqs[-1])
    return _fourier_window(_scalar_density(model), center, freqs[0], freqs[-1], tau, tol)


def _single_dissipation(model: SpectralModel, tau: float, tolerance: Optional[float]) -> complex:
    if model.kind is SpectralKind.LORENTZIAN:
        return model.amplitude * np.exp(-model.decay_exponent * tau)
    if model.kind is SpectralKind.MARKOVIAN:
        # Regular part only; the delta weight is carried by KernelSampler.dissipation_weight
        return 0j
    value, error = dissipation_quadrature(model, tau, tolerance)
    tol = tolerance if tolerance is not None else get_settings().quadrature_tolerance
    scale = max(1.0, float(trapezoid(model.density, model.frequencies)))
    if error > QUADRATURE_SLACK * tol * scale:
        raise QuadratureError(
            f"Fourier quadrature of tabulated J at tau={tau:.6g}: error {error:.3g} above tolerance"
        )
    return value


def _noise_window(model: SpectralModel, tau: float) -> Tuple[float, float]:
    if model.kind is SpectralKind.TABULATED:
        lower, upper = model.frequencies[0], model.frequencies[-1]
    else:
        half = WINDOW_WIDTHS * model.linewidth
        if tau != 0:
            half = max(half, WINDOW_WIDTHS / abs(tau))
        lower, upper = model.center - half, model.center + half
    floor = -0.5 * model.omega0
    if upper <= floor:
        raise QuadratureError(
            f"Noise window [{lower:.4g}, {upper:.4g}] lies below -omega0/2; raise omega0"
        )
    return max(lower, floor), upper


def _single_noise(model: SpectralModel, tau: float, tolerance: Optional[float]) -> complex:
    if model.temperature == 0 or model.kind is SpectralKind.MARKOVIAN:
        return 0j
    tol = tolerance if tolerance is not None else get_settings().quadrature_tolerance
    lower, upper = _noise_window(model, tau)
    integrand = lambda w: float(model.spectral_density(w) * model.bose_factor(w))
    center = model.center if model.kind is SpectralKind.LORENTZIAN else 0.5 * (lower + upper)
    value, error = _fourier_window(integrand, center, lower, upper, abs(tau), tol)
    if model.kind is SpectralKind.LORENTZIAN:
        # Lorentzian wings outside the window: down to -omega0/2 and up to infinity
        floor = -0.5 * model.omega0
        if lower > floor:
            wing, wing_error = _fourier_window(integrand, center, floor, lower, abs(tau), tol)
            value, error = value + wing, error + wing_error
        wing, wing_error = _fourier_tail(integrand, upper, abs(tau), tol)
        value, error = value + wing, error + wing_error
    scale = max(1.0, abs(value))
    if error > QUADRATURE_SLACK * tol * scale:
        raise QuadratureError(
            f"Noise kernel quadrature at tau={tau:.6g}: error {error:.3g} above tolerance"
        )
    # Real integrand: G(-tau) = G(tau)^*
    return value.conjugate() if tau < 0 else value


class KernelSampler:
    """Evaluates the N x N kernels F(tau) and G(tau) of a set of subenvironments.

    Instantaneous (flat-spectrum) contributions are kept apart as delta
    weights: F(tau) = F_reg(tau) + dissipation_weight * delta(tau) and
    G(tau) = G_reg(tau) + noise_weight * delta(tau). Instances are immutable.
    """

    def __init__(self, subenvironments: Sequence[Subenvironment], size: int = None,
                 tolerance: Optional[float] = None):
        subenvironments = tuple(subenvironments)
        if not subenvironments:
            raise ValueError("At least one subenvironment is required")
        if size is None:
            size = subenvironments[0].couplings.size
        for sub in subenvironments:
            if sub.couplings.size != size:
                raise ValueError(
                    f"Coupling vector of length {sub.couplings.size} does not match {size} subsystems"
                )
        self._subenvironments = subenvironments
        self._size = size
        self._tolerance = tolerance

    @classmethod
    def single(cls, model: SpectralModel, tolerance: Optional[float] = None) -> "KernelSampler":
        return cls([Subenvironment(model)], size=1, tolerance=tolerance)

    @property
    def subenvironments(self) -> Tuple[Subenvironment, ...]:
        return self._subenvironments

    @property
    def size(self) -> int:
        return self._size

    @property
    def analytic(self) -> bool:
        """True when F is available in closed form (no quadrature needed)."""
        return all(sub.model.is_exponential for sub in self._subenvironments)

    @property
    def zero_temperature(self) -> bool:
        return all(sub.model.temperature == 0 for sub in self._subenvironments)

    @property
    def dissipation_weight(self) -> np.ndarray:
        weight = np.zeros((self._size, self._size), dtype=complex)
        for sub in self._subenvironments:
            if sub.model.kind is SpectralKind.MARKOVIAN:
                weight += sub.model.gamma * sub.projector
        return weight

    @property
    def noise_weight(self) -> np.ndarray:
        weight = np.zeros((self._size, self._size), dtype=complex)
        for sub in self._subenvironments:
            model = sub.model
            if model.kind is SpectralKind.MARKOVIAN and model.temperature > 0:
                weight += model.gamma * float(model.bose_factor(0.0)) * sub.projector
        return weight

    def exponential_terms(self) -> List[Tuple[np.ndarray, complex]]:
        """(c_alpha kappa kappa^dagger, z_alpha) pairs with F_reg(tau) = sum c exp(-z tau)."""
        terms = []
        for sub in self._subenvironments:
            model = sub.model
            if model.kind is SpectralKind.TABULATED:
                raise KernelMismatchError("Tabulated spectral densities are not exponential kernels")
            if model.kind is SpectralKind.LORENTZIAN:
                terms.append((model.amplitude * sub.projector, model.decay_exponent))
        return terms

    def dissipation(self, tau: float) -> np.ndarray:
        if tau < 0:
            raise ValueError(f"Dissipation kernel requires tau >= 0, got {tau}")
        total = np.zeros((self._size, self._size), dtype=complex)
        for sub in self._subenvironments:
            total += _single_dissipation(sub.model, tau, self._tolerance) * sub.projector
        return total

    def noise(self, tau: float) -> np.ndarray:
        total = np.zeros((self._size, self._size), dtype=complex)
        if self.zero_temperature:
            return total
        for sub in self._subenvironments:
            total += _single_noise(sub.model, tau, self._tolerance) * sub.projector
        return total

    def sample_dissipation(self, lags: np.ndarray) -> np.ndarray:
        lags = np.asarray(lags, dtype=float)
        if self.analytic:
            samples = np.zeros((lags.size, self._size, self._size), dtype=complex)
            for projector, exponent in self.exponential_terms():
                samples += np.exp(-exponent * lags)[:, None, None] * projector
            return samples
        return np.array([self.dissipation(tau) for tau in lags])

    def sample_noise(self, lags: np.ndarray) -> np.ndarray:
        lags = np.asarray(lags, dtype=float)
        if self.zero_temperature:
            return np.zeros((lags.size, self._size, self._size), dtype=complex)
        return np.array([self.noise(tau) for tau in lags])


ModelOrSampler = Union[SpectralModel, KernelSampler]


def _as_sampler(source: ModelOrSampler) -> KernelSampler:
    if isinstance(source, KernelSampler):
        return source
    return KernelSampler.single(source)


def dissipation_kernel(source: ModelOrSampler, tau: float) -> np.ndarray:
    """F(tau) as an N x N matrix (1 x 1 for a single spectral model)."""
    if tau < 0:
        raise ValueError(f"Dissipation kernel requires tau >= 0, got {tau}")
    return _as_sampler(source).dissipation(tau)


def noise_kernel(source: ModelOrSampler, tau: float) -> np.ndarray:
    """G(tau) as an N x N matrix; tau may be negative."""
    return _as_sampler(source).noise(tau)
