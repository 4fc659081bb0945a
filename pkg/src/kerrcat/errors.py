"""Exception hierarchy.

Every numerical failure derives from :class:`KerrcatError` so the CLI can
report the error name and exit with the numerical-failure code.
"""


class KerrcatError(Exception):
    """Base class for numerical failures raised by the package."""


class ConfigError(ValueError):
    """Invalid configuration or usage."""


# hilbert
class TruncationTooSmall(KerrcatError):
    pass


class NonFinite(KerrcatError):
    pass


class LayoutMismatch(KerrcatError):
    pass


class InvalidState(KerrcatError):
    pass


# snail
class MinimizationFailed(KerrcatError):
    pass


class MultipleMinima(MinimizationFailed):
    pass


class DerivativeUnstable(KerrcatError):
    pass


class NoSignChange(KerrcatError):
    pass


class FitDiverged(KerrcatError):
    pass


class ReportedWithResidual(KerrcatError):
    """Fit converged but its RMS residual exceeds the requested threshold.

    The fitted result is attached as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


# dynamics
class NonHermitian(KerrcatError):
    pass


class StepTooLarge(KerrcatError):
    pass


class OutOfWindow(KerrcatError):
    pass


# protocols
class ShiftExceedsLinewidth(KerrcatError):
    pass


class PeaksUnresolved(KerrcatError):
    pass


class PoissonFitPoor(KerrcatError):
    pass


class ConditionWindowTooWide(KerrcatError):
    pass


# tomography
class GridMismatch(KerrcatError):
    pass
