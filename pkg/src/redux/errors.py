"""Exception hierarchy shared by all stages."""


class ReduxError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 3


class ParameterError(ReduxError, ValueError):
    exit_code = 2


class ConfigurationError(ReduxError):
    exit_code = 2


class MeshError(ReduxError):
    pass


class NumericError(ReduxError):
    pass


class LinearAlgebraError(NumericError):
    pass


class RankError(NumericError):
    pass


class IllConditioningError(NumericError):
    pass


class TrainingError(NumericError):
    pass


class ArtifactError(ReduxError):
    """Missing artifact or hash mismatch."""

    exit_code = 2


class NonConvergenceError(ReduxError):
    exit_code = 4

    def __init__(self, message, last_increment_norm=float("nan"), iterations=0):
        super().__init__(message)
        self.last_increment_norm = last_increment_norm
        self.iterations = iterations
