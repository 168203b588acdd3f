class CodemixError(Exception):
    pass


class ValidationError(CodemixError, ValueError):
    """Bad input data or arguments. The CLI maps this to exit code 1."""


class ConfigurationError(ValidationError):
    pass


class TrainingError(CodemixError, RuntimeError):
    """Optimization failed (e.g. the loss went non-finite)."""
