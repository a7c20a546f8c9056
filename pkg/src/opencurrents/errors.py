"""Exception hierarchy shared by all modules."""


class OpenCurrentsError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(OpenCurrentsError, ValueError):
    pass


class InvalidTruncationError(OpenCurrentsError, ValueError):
    pass


class CapacityError(OpenCurrentsError, ValueError):
    pass


class TruncationTooSmallError(OpenCurrentsError):
    def __init__(self, tail_mass, nmax):
        self.tail_mass = tail_mass
        self.nmax = nmax
        super().__init__(
            f"Fock truncation nmax={nmax} too small: steady-state population "
            f"beyond nmax-5 is {tail_mass:.3e} (limit 1e-8)"
        )


class DegenerateSteadyStateError(OpenCurrentsError):
    pass


class SolverError(OpenCurrentsError):
    def __init__(self, message, residual=None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)


class SpectralError(OpenCurrentsError):
    pass


class PropagationError(OpenCurrentsError):
    pass


class SingularSystemError(OpenCurrentsError):
    pass


class EmptyChannelError(OpenCurrentsError, ValueError):
    pass


class UndefinedTimescaleError(OpenCurrentsError):
    pass


class NoSolutionError(OpenCurrentsError, ValueError):
    pass


class DomainError(OpenCurrentsError, ValueError):
    pass


class ConfigError(OpenCurrentsError, ValueError):
    pass


class FitError(OpenCurrentsError):
    def __init__(self, message, residual_trace=()):
        self.residual_trace = list(residual_trace)
        super().__init__(message)


class SubtractionError(OpenCurrentsError):
    pass


class BracketError(OpenCurrentsError):
    pass


class DependencyError(OpenCurrentsError):
    pass
