"""Exception types shared across the library."""


class ParameterError(ValueError):
    """A hyperparameter or configuration value is out of its legal range."""


class InputError(ValueError):
    """Input data violates an operation's preconditions."""


class UsageError(RuntimeError):
    """The API was called in a way its contract forbids."""


class NumericError(ArithmeticError):
    """An operation produced non-finite values (overflow / divergence)."""


class TrainingError(RuntimeError):
    """Training diverged.  Carries the epoch index where it happened."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
