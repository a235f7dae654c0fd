"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration/contract/data errors
exit with 1, numeric faults with 2.
"""


class CladError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(CladError):
    """A spec or run configuration is invalid (bad class count, size, keys...)."""


class ContractViolation(CladError):
    """A documented precondition was broken by the caller."""


class InvariantViolation(CladError):
    """A dataset or structure invariant does not hold (bad variant semantics...)."""


class NumericFault(CladError):
    """A non-finite value appeared in a forward pass, gradient, or update."""


class UndefinedMetric(CladError):
    """A metric was requested on inputs where it has no value (empty set...)."""


class DatasetLoadError(CladError):
    """Base class for dataset directory loading failures."""


class ManifestError(DatasetLoadError):
    """manifest.json is missing, unparsable, or structurally wrong."""


class MissingFileError(DatasetLoadError):
    """The manifest references an image or mask file that does not exist."""


class ChecksumError(DatasetLoadError):
    """A stored file does not match its recorded checksum."""


class CheckpointError(CladError):
    """A model checkpoint file is malformed or truncated."""
