"""Exception types shared across the probsaint package."""


class ProbSaintError(Exception):
    """Base class for all package errors."""


class ShapeError(ProbSaintError):
    """Tensor operands have incompatible shapes."""


class UsageError(ProbSaintError):
    """API misuse, e.g. backward on a non-scalar."""


class ConfigurationError(ProbSaintError):
    """Invalid configuration value or schema."""


class VocabularyError(ProbSaintError):
    """Embedding or vocabulary index out of range."""


class EncodingError(ProbSaintError):
    """Row batch could not be encoded at all."""


class TrainingError(ProbSaintError):
    """Training diverged or produced non-finite values."""


class ModelError(ProbSaintError):
    """Non-finite activations or inconsistent model state."""


class CheckpointError(ProbSaintError):
    """Checkpoint file is malformed or incomplete."""


class IntegrityError(CheckpointError):
    """Checkpoint payload does not match its stored checksum."""


class UnsupportedVersionError(CheckpointError):
    """Checkpoint was written by a newer format version."""


class GenerationError(ProbSaintError):
    """Synthetic market spec produced invalid rows."""


class OracleError(ProbSaintError):
    """Row cannot be scored by the generative oracle."""


class NormalizationError(ProbSaintError):
    """Sweep normalization is undefined (zero anchor price)."""
