"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Shapes or widths are incompatible. Message names both shapes."""


class ContractError(ValueError):
    """A documented precondition was violated."""


class NumericError(ArithmeticError):
    """Non-finite values encountered where finite numbers are required."""


class FormatVersionError(ValueError):
    """Persisted file carries an unsupported format version."""


class ParseError(ValueError):
    """Persisted file is malformed. Message names the offending line."""


class UndefinedDirectionError(ValueError):
    """A direction-based metric was asked about a (near-)zero vector."""


class DegenerateTestError(ValueError):
    """Statistical test is undefined for the given samples (zero variance)."""


class ConfigError(ValueError):
    """Run configuration is invalid or inconsistent."""


class TrainingError(RuntimeError):
    """Training aborted; message carries epoch/batch/parameter diagnostics."""
