"""
Exception hierarchy shared by every stage. The CLI maps the three branches to exit codes:
ValidationError -> 2, ArtifactError -> 3, anything else -> 4.
"""

from typing import Optional, Tuple


class IntentPoolError(Exception):
    """Base class for all intentpool failures."""

    exit_code: int = 4


class ValidationError(IntentPoolError, ValueError):
    exit_code = 2


class TrajectoryParseError(ValidationError):
    def __init__(self, message: str, line_number: Optional[int] = None, path: Optional[str] = None):
        self.line_number = line_number
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line_number is not None:
            where += f":{line_number}"
        super().__init__(f"{where}: {message}" if where else message)


class ConfigError(ValidationError):
    pass


class ClusterMetricError(ValidationError):
    def __init__(self, message: str, pair: Optional[Tuple[int, int]] = None):
        self.pair = pair
        super().__init__(message)


class BisimulationError(ValidationError):
    def __init__(self, message: str, pair: Optional[Tuple] = None):
        self.pair = pair
        super().__init__(message)


class UnknownIntentError(ValidationError, KeyError):
    def __str__(self):
        return ValueError.__str__(self)


class IllegalActionError(ValidationError):
    pass


class UnknownOpponentError(ValidationError, KeyError):
    def __str__(self):
        return ValueError.__str__(self)


class UnknownUtteranceError(ValidationError, KeyError):
    def __str__(self):
        return ValueError.__str__(self)


class ArtifactError(IntentPoolError):
    exit_code = 3


class ArtifactChecksumError(ArtifactError):
    def __init__(self, path, expected: str, actual: str):
        self.path = str(path)
        self.expected = expected
        self.actual = actual
        super().__init__(f"Checksum mismatch for {self.path}: expected {expected[:12]}, got {actual[:12]}")


class MatrixFormatError(ArtifactError):
    pass


class MatrixChecksumError(ArtifactError):
    pass


class ComputationError(IntentPoolError, RuntimeError):
    exit_code = 4


class EmbeddingServiceError(ComputationError):
    pass


class TrainingDivergedError(ComputationError):
    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class DegenerateGeneratorError(ComputationError):
    def __init__(self, message: str, errors: Optional[dict] = None):
        self.errors = errors or {}
        super().__init__(message)
