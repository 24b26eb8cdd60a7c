"""Exception hierarchy.

Everything raised for bad input derives from ``ValueError`` so the ability
manager and the CLI treat it as a validation failure.
"""


class CyhmmError(ValueError):
    """Base class for all engine errors"""


class ConfigError(CyhmmError):
    """Configuration schema or invariant violation"""


class DatasetError(CyhmmError):
    """Invalid dataset content"""


class MalformedHeader(DatasetError):
    pass


class NonNumericCell(DatasetError):
    pass


class NonConsecutiveTime(DatasetError):
    pass


class BinaryDomain(DatasetError):
    """Observed binary value outside {0, 1}"""


class MixedKind(DatasetError):
    pass


class KindMismatch(DatasetError):
    """Operation called on a dataset of the wrong feature kind"""


class WindowError(CyhmmError):
    pass


class DimensionMismatch(CyhmmError):
    pass


class PartiallyMissingBinaryRow(CyhmmError):
    """Binary row with some but not all cells missing; run the missing rule first"""


class FitError(CyhmmError):
    pass


class EmptyDataset(FitError):
    pass


class NaNLoglik(FitError):
    pass


class ClusteringError(CyhmmError):
    pass


class BaselineError(CyhmmError):
    pass
