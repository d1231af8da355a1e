"""Exception types shared across the package."""


class FormatError(ValueError):
    """Malformed file header or unknown file layout."""


class UnsupportedFormatError(FormatError):
    """Well-formed file using a feature this package does not handle."""


class TruncatedFileError(OSError):
    """File ended before the declared payload was read."""


class BoundsError(ValueError):
    """A pixel modification would leave the 8-bit range."""


class PayloadError(ValueError):
    """Message too long for single-layered embedding."""


class NumericError(ArithmeticError):
    """Non-finite value appeared in a forward or backward pass."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class InfeasibleSyndromeError(RuntimeError):
    """The trellis found no path satisfying the syndrome (degenerate code)."""
