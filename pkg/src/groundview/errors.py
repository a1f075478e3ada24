"""Exception hierarchy shared by every groundview module."""


class GroundviewError(Exception):
    """Base class for all package errors."""


class DimensionError(GroundviewError, ValueError):
    pass


class OutOfBoundsError(GroundviewError, ValueError):
    def __init__(self, location, extent=None):
        self.location = location
        self.extent = extent
        msg = f"location {location} lies outside the grid extent"
        if extent is not None:
            msg += f" {extent}"
        super().__init__(msg)


class CoverageError(GroundviewError):
    pass


class RetryableFetchError(GroundviewError):
    """Transient network failure; the same request may succeed later."""


class ManifestParseError(GroundviewError, ValueError):
    def __init__(self, path, lineno: int, reason: str):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {reason}")


class DatasetFileError(GroundviewError, FileNotFoundError):
    pass


class InsufficientSamplesError(GroundviewError, ValueError):
    pass


class NotFittedError(GroundviewError, RuntimeError):
    pass


class DependencyError(GroundviewError, ImportError):
    pass


class ConfigError(GroundviewError, ValueError):
    pass


class DegenerateLabelsError(GroundviewError, ValueError):
    pass


class DivergenceError(GroundviewError, FloatingPointError):
    def __init__(self, step: int, d_loss: float, g_loss: float):
        self.step = step
        super().__init__(f"non-finite loss at step {step}: L_D={d_loss}, L_G={g_loss}")
