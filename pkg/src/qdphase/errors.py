"""Exception types mapped to CLI exit codes (config=2, data=3, estimator=4)."""


class QdphaseError(Exception):
    """Base class for toolkit errors."""

    exit_code = 1


class ConfigError(QdphaseError):
    """Invalid or unparseable experiment configuration."""

    exit_code = 2


class DataFormatError(QdphaseError):
    """Malformed input data file (bad schema, negative counts, ...)."""

    exit_code = 3


class EstimatorError(QdphaseError):
    """An estimator cannot produce a result (empty selection, failed fit, ...)."""

    exit_code = 4
