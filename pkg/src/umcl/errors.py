"""Exception hierarchy for the umcl package."""


class UmclError(Exception):
    """Base class for all errors raised by this package."""


class LengthMismatch(UmclError):
    """Two signals that must share a length do not."""


class ZeroVariance(UmclError):
    """A variance denominator (or in-band spectral power) fell below epsilon."""


class ZeroNorm(UmclError):
    """A vector norm denominator fell below epsilon."""


class EmptyBand(UmclError):
    """The spectral search band contains no FFT bins."""


class ShapeMismatch(UmclError):
    """Two arrays that must share a shape do not."""


class DimMismatch(UmclError):
    """A feature dimension does not match the expected parameter dimension."""


class MissingModality(UmclError):
    """A required modality feature was absent and policy is 'error'."""


class EmptyBatch(UmclError):
    """An operation received an empty batch."""


class EmptyInput(UmclError):
    """An operation received empty input."""


class SingleClass(UmclError):
    """A ranking metric needs both classes present."""


class NonFinite(UmclError):
    """A loss component is NaN or infinite."""


class NonFiniteLoss(NonFinite):
    """A training-step loss term is NaN or infinite; message names the term."""


class IndivisibleShape(UmclError):
    """Spatial dimensions are not divisible by the downsample factor."""


class TooFewFrames(UmclError):
    """A frame-sampling ratio would leave fewer than two frames."""


class InsufficientClassSamples(UmclError):
    """A dataset cannot fill one balanced batch."""


class UnknownKind(UmclError):
    """An unrecognized prompt kind was requested."""


class InvalidSpec(UmclError):
    """A dataset or run specification is invalid."""


class ConfigError(UmclError):
    """A configuration file or value is invalid."""


class FileFormatError(UmclError):
    """A binary artifact (feature or checkpoint file) is corrupt or mismatched."""
