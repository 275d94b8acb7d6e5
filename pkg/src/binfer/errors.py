"""Exception types shared across the package."""


class BinferError(Exception):
    """Base class for every error this package raises deliberately."""


class ValidationError(BinferError):
    """A value violates a documented invariant or precondition."""


class FormatError(BinferError):
    """A model container file is malformed, truncated or of the wrong version."""


class UnsupportedPaddingError(ValidationError):
    """Zero-padding was requested on the binary datapath.

    The packed engine has no bit pattern for 0; zero-padded convolutions are
    only available through the signed reference path (``binfer.oracle``).
    """


class ScheduleInfeasibleError(BinferError):
    """At least one layer cannot meet the cycle budget."""

    def __init__(self, message: str, layers: tuple = ()):
        super().__init__(message)
        self.layers = tuple(layers)
