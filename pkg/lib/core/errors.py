class EsaError(Exception):
    """
    Base class for every error raised by the ESA-ReID library.
    """


class InvalidProbabilityMapError(EsaError, ValueError):
    """Probabilities outside [0, 1] or pixels that do not sum to one."""


class ShapeMismatchError(EsaError, ValueError):
    """Tensors that must share spatial or channel dimensions do not."""


class InvalidThresholdError(EsaError, ValueError):
    """Entropy threshold outside the open interval (0, 1)."""


class NoComparableRegionsError(EsaError, ArithmeticError):
    """
    Two descriptors share no visible region and no unconfident mass, so
    the extended distance has a vanishing denominator.
    """


class LabelRangeError(EsaError, ValueError):
    """Identity or part label outside its valid range."""


class BatchCompositionError(EsaError, ValueError):
    """Batch violates the P identities x K images precondition."""


class UnknownVariantError(EsaError, ValueError):
    """Ablation variant name is not recognised."""


class DivergenceError(EsaError, FloatingPointError):
    """Training loss became NaN or infinite."""


class DescriptorFormatError(EsaError, ValueError):
    """Descriptor file header or records are malformed."""


class CheckpointFormatError(EsaError, ValueError):
    """Checkpoint container is malformed or has an unknown version."""


class NoGalleryMatchError(EsaError, ValueError):
    """A probe identity has no counterpart in the gallery."""


class DegeneratePoolError(EsaError, ValueError):
    """Pair pool holds only positives or only negatives."""


class ConfigError(EsaError, ValueError):
    """Configuration file or override is invalid."""


class DatasetError(EsaError, OSError):
    """Dataset directory cannot be written or read."""
