"""Exception hierarchy shared by the solvers and the command-line front end."""


class SimulationError(Exception):
    """Base class for every error raised by the simulator."""

    exit_code = 1


class ConfigurationError(SimulationError):
    """Raised when a run configuration or preset is invalid."""

    exit_code = 2

    def __init__(self, message: str, field: str = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class SpectrumParseError(ConfigurationError):
    """Raised when a tabulated spectral density file cannot be parsed."""
    pass


class SolverError(SimulationError):
    """Raised when a numerical solver cannot produce a result."""

    exit_code = 3


class QuadratureError(SolverError):
    """Raised when a frequency quadrature misses its error tolerance."""
    pass


class SingularStepError(SolverError):
    """Raised when the implicit Volterra step matrix is singular."""

    def __init__(self, time: float, step: float):
        self.time = time
        self.step = step
        super().__init__(
            f"Implicit Volterra step singular at t={time:.6g} (h={step:.3g}); "
            f"reduce the step relative to ||F(0)||"
        )


class PoleCrossingError(SolverError):
    """Raised when the integrator cannot bound the local error near a coefficient pole."""

    def __init__(self, time: float, error: float, min_step: float, partial=None):
        self.time = time
        self.error = error
        self.min_step = min_step
        self.partial = partial
        super().__init__(
            f"Coefficient pole crossing at t={time:.6g}: local error {error:.3g} "
            f"exceeds tolerance at minimum step {min_step:.3g}"
        )


class KernelMismatchError(SolverError):
    """Raised when a solver receives a kernel type it cannot handle."""
    pass


class NonConvergenceError(SimulationError):
    """Raised when an iterative or long-time computation does not settle."""

    exit_code = 4


class CutoffConvergenceError(NonConvergenceError):
    """Raised when an observable still moves after raising the Fock cutoff."""

    def __init__(self, cutoff: int, shift: float, tolerance: float):
        self.cutoff = cutoff
        self.shift = shift
        self.tolerance = tolerance
        super().__init__(
            f"Fock cutoff {cutoff} not converged: observable shift {shift:.3g} "
            f"exceeds tolerance {tolerance:.3g}"
        )
