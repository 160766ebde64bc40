"""Exception types shared across the package."""


class LexbertError(Exception):
    """Base class for all package errors."""


class ShapeError(LexbertError, ValueError):
    """Operand shapes are incompatible."""


class NumericError(LexbertError, ArithmeticError):
    """A NaN or otherwise invalid number reached a kernel."""


class ContractError(LexbertError, ValueError):
    """A caller violated a documented precondition."""


class FormatError(LexbertError, ValueError):
    """An input file does not follow its declared format."""


class ConfigError(LexbertError, ValueError):
    """Configuration is inconsistent or incomplete."""


class IntegrityError(LexbertError, ValueError):
    """A checkpoint file is truncated or corrupted."""


class DataError(LexbertError, ValueError):
    """A data row holds a value outside its declared range."""


class TrainingDiverged(LexbertError, FloatingPointError):
    """A loss became NaN or infinite during training."""
