"""Exception hierarchy shared by the engine and the harness."""


class OneBitRfError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(OneBitRfError, ValueError):
    pass


class ConfigError(InvalidArgumentError):
    """Raised for malformed or inconsistent experiment configurations."""


class NumericalError(OneBitRfError, ArithmeticError):
    """Base class for singularity and domain failures."""


class SingularMatrixError(NumericalError):
    """A matrix that must be invertible is (numerically) rank deficient.

    ``subcarrier`` carries the offending subcarrier index when known.
    """

    def __init__(self, message, subcarrier=None):
        if subcarrier is not None:
            message = f"{message} (subcarrier {subcarrier})"
        super().__init__(message)
        self.subcarrier = subcarrier


class DomainError(NumericalError):
    pass


class DegenerateInputError(NumericalError):
    pass


class UnsupportedModeError(OneBitRfError, ValueError):
    pass
