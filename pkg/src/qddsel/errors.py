"""Exception hierarchy shared by all modules."""


class QddError(Exception):
    """Base class for every error raised by this package."""


class DomainError(QddError, ValueError):
    """An input lies outside the physical domain (e.g. a non-positive resistance)."""


class UnresolvedFieldError(QddError, KeyError):
    """A quantity needed for a computation is missing and cannot be derived."""

    def __init__(self, symbol, motor=None):
        self.symbol = symbol
        self.motor = motor
        where = f" for motor {motor!r}" if motor else ""
        super().__init__(f"unresolved field {symbol}{where}")

    def __str__(self):
        return self.args[0]


class SingularFitError(QddError, ValueError):
    pass


class SegmentTooShortError(QddError, ValueError):
    pass


class InsufficientDataError(QddError, ValueError):
    pass


class UnidentifiableError(QddError, ValueError):
    """No frequency bin survives the band and coherence gates."""


class ConvergenceError(QddError, RuntimeError):
    """Optimizer failed; ``fallback`` holds the stage-1 estimate."""

    def __init__(self, message, fallback=None):
        super().__init__(message)
        self.fallback = fallback


class UndefinedVAFError(QddError, ValueError):
    pass


class NegativeInertiaError(QddError, ValueError):
    """Rotor-installed inertia does not exceed the rotor-removed one."""


class FormatError(QddError, ValueError):
    """A data file is malformed (bad header, NaN samples, irregular timestamps, unknown units)."""
