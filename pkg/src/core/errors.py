# src/core/errors.py


class SteinThinningError(ValueError):
    """Base class for every error raised by the library."""


class DimensionMismatchError(SteinThinningError):
    pass


class KernelParamsError(SteinThinningError):
    pass


class SingularDensityError(SteinThinningError):
    """Raised when a raw density vanishes where the Laplacian operator divides by it."""


class EmptySelectionError(SteinThinningError):
    pass


class UnselectablePoolError(SteinThinningError):
    """No candidate of the pool has a finite objective."""


class SamplerInitError(SteinThinningError):
    pass


class DatasetError(SteinThinningError):
    pass


class ConfigError(SteinThinningError):
    pass
