"""Exception hierarchy shared by all solver modules."""


class NonlocalFVError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgument(NonlocalFVError, ValueError):
    """Raised for malformed or out-of-range inputs."""


class KernelDomainError(InvalidArgument):
    """Kernel evaluated at its singular point."""


class QuadratureFailure(NonlocalFVError, ArithmeticError):
    """A quadrature rule could not reach the requested tolerance."""


class SolverFailure(NonlocalFVError, RuntimeError):
    """The linear solve of a time step did not converge."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InvariantViolation(NonlocalFVError, RuntimeError):
    """A structural property (positivity, nonnegative mass, ...) was broken."""


class ConfigError(NonlocalFVError, ValueError):
    """Invalid run configuration.  ``problems`` lists every violation found."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
