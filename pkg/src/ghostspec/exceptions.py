"""Exception hierarchy shared by the simulator and the analysis code."""


class GhostSpecError(Exception):
    """Base class for all errors raised by ghostspec."""


class InvalidInputError(GhostSpecError, ValueError):
    pass


class DegenerateProfileError(GhostSpecError, ValueError):
    pass


class OutOfTableError(GhostSpecError, ValueError):
    pass


class UnsortedInputError(GhostSpecError, ValueError):
    pass


class EmptyBandError(GhostSpecError, RuntimeError):
    pass


class GridMismatchError(GhostSpecError, ValueError):
    pass


class NormalizationError(GhostSpecError, ZeroDivisionError):
    """Substrate bin has no positive counts left to divide by."""


class ConvergenceError(GhostSpecError, RuntimeError):
    def __init__(self, message, fit=None):
        super().__init__(message)
        self.fit = fit


class DegenerateDataError(GhostSpecError, ValueError):
    """Spectrum is flat within its own noise; nothing to fit."""


class UnconvergedFitError(GhostSpecError, ValueError):
    pass


class ConfigError(GhostSpecError, ValueError):
    pass
