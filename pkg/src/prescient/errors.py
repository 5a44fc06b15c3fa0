"""Exception hierarchy shared across the package."""


class PrescientError(Exception):
    """Base class for all package errors."""


class ShapeError(PrescientError):
    """Operands do not conform for an operation."""

    def __init__(self, op: str, *shapes, detail: str = ""):
        self.op = op
        self.shapes = shapes
        msg = f"{op}: incompatible shapes {' vs '.join(str(tuple(s)) for s in shapes)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NumericError(PrescientError):
    """Non-finite values or other numeric breakdown."""


class ConfigError(PrescientError):
    """Invalid configuration value."""


class DataError(PrescientError):
    """Malformed or inconsistent input data."""
