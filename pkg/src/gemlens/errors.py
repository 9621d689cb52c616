"""Exception hierarchy shared by all gemlens modules."""


class GemLensError(Exception):
    """Base class for every error raised by gemlens."""


class EdgeLeak(GemLensError):
    """Envelope does not decay at the edges of its time grid."""


class ZeroFocal(GemLensError, ValueError):
    pass


class EmptyList(GemLensError, ValueError):
    pass


class ZeroGradient(GemLensError, ValueError):
    pass


class ZeroChirp(GemLensError, ValueError):
    pass


class InvalidParams(GemLensError, ValueError):
    pass


class CflViolation(GemLensError):
    """Time step too coarse for the configured absorption bandwidth."""


class NonFiniteState(GemLensError):
    pass


class UndersampledSpectrum(GemLensError):
    pass


class NoFwhm(GemLensError):
    pass


class NoPeak(GemLensError):
    pass


class ConfigError(GemLensError):
    """Invalid configuration; carries the source line when known."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
