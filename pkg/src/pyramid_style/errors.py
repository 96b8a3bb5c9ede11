"""Exception hierarchy shared by every module of the package."""


class StyleTransferError(Exception):
    """Base class for all errors raised by pyramid_style."""


class DimensionError(StyleTransferError, ValueError):
    """An image or feature tensor has an incompatible shape."""


class ParameterError(StyleTransferError, ValueError):
    """A scalar argument is outside its supported set."""


class ConfigurationError(StyleTransferError):
    """Models, bundles or configs do not fit together."""


class DataError(StyleTransferError):
    """Input data could not be found or decoded."""


class LoadError(StyleTransferError):
    """A weights archive is missing tensors or holds malformed ones."""


class IntegrityError(StyleTransferError):
    """An archive is truncated or its payload does not match its manifest."""


class IncompatibleBundleError(StyleTransferError):
    """A bundle was written with an unsupported format version."""


class TrainingError(StyleTransferError):
    """Training produced a non-finite loss."""
