"""
Error hierarchy for the INS²ANE toolkit
Each family carries the exit code the CLI reports for it
"""

from typing import Any, Optional


class InsaneError(Exception):
    """Base class for every error raised by the toolkit"""

    exit_code: int = 1


# Configuration / contract errors (exit 2)


class ConfigError(InsaneError):
    """Invalid configuration or violated precondition"""

    exit_code = 2


class ParameterError(ConfigError):
    """A model or scorer parameter is out of range"""


class InputError(ConfigError):
    """Input data is unusable (non-finite values, wrong shape)"""


class DimensionError(ConfigError):
    """Array dimensions do not agree"""


class InsufficientPointsError(ConfigError):
    """Too few points for the requested computation"""


class EmptyCandidatesError(ConfigError):
    """The grid is smaller than the patch, so nothing can be acquired"""


class MarginError(ConfigError):
    """A patch centred at this location would leave the image"""

    def __init__(self, loc: Any, side: int):
        self.loc = loc
        self.side = side
        super().__init__(
            f"Patch of side {side} centred at {tuple(loc)} extends past the image "
            f"(margin {(side - 1) // 2})"
        )


class BoundsError(ConfigError):
    """A location lies outside the grid"""


class ContractError(ConfigError):
    """A caller broke an API contract (e.g. empty measured set)"""


class ExhaustionError(ConfigError):
    """Every candidate has already been measured"""


class DegenerateRangeError(ConfigError):
    """Ground truth has zero range, so a normalized error is undefined"""


# I/O errors (exit 3)


class DatasetIOError(InsaneError):
    """Reading or writing a dataset or export failed"""

    exit_code = 3

    def __init__(self, message: str, path: Optional[Any] = None):
        self.path = path
        super().__init__(f"{message} ({path})" if path is not None else message)


class DatasetNotFoundError(DatasetIOError):
    """A manifest or array file is missing"""


class ManifestError(DatasetIOError):
    """The manifest is unreadable or has an unsupported version"""


class DatasetSizeError(DatasetIOError):
    """An array file does not match the manifest dimensions"""

    def __init__(self, path: Any, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"Size mismatch: expected {expected} bytes, found {actual} bytes", path
        )


class NonFiniteDataError(DatasetIOError):
    """A stored array contains NaN or infinity"""


class ExportError(DatasetIOError):
    """A map or trace could not be exported"""


# Resource caps (exit 4)


class ResourceCapError(InsaneError):
    """A computation would exceed a configured resource cap"""

    exit_code = 4


# Numerical failures (exit 5)


class NumericalError(InsaneError):
    """A numerical routine failed"""

    exit_code = 5


class CholeskyError(NumericalError):
    """Kernel matrix stayed indefinite after jitter escalation"""


class ConvergenceError(NumericalError):
    """An iterative solver hit its iteration cap"""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3e})")


class ExperimentAbortedError(NumericalError):
    """An experiment stopped mid-run; the partial trace is attached"""

    def __init__(self, message: str, trace: Any):
        self.trace = trace
        super().__init__(message)
