"""Exception hierarchy shared across the package.

Everything raised on purpose derives from ErpvisError so the CLI can map
domain failures to a single exit code.
"""


class ErpvisError(Exception):
    """Base class for all erpvis errors."""


class ConfigError(ErpvisError):
    """Invalid configuration object (bad counts, non-finite values)."""


class ParameterError(ErpvisError):
    """Invalid argument to an operation (bad cutoff, factor, epsilon)."""


class FormatError(ErpvisError):
    """Corrupt or inconsistent on-disk container or checkpoint."""


class DomainError(ErpvisError):
    """Input outside an operation's mathematical domain."""


class PartitionError(ErpvisError):
    """Trial set cannot be partitioned as requested."""


class SplitError(ErpvisError):
    """Train/test split cannot be realized for some group."""


class DimensionError(ErpvisError):
    """Tensor shape does not match what the model expects."""


class ConsistencyError(ErpvisError):
    """A forward trace does not belong to the model it is used with."""


class TrainingError(ErpvisError):
    """Training diverged or was handed unusable data."""


class EvaluationError(ErpvisError):
    """Evaluation inputs do not match the model's label space."""
