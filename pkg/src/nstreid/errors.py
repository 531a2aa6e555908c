"""Exception types shared across the package.

The CLI maps these onto exit codes: ValidationError -> 1,
NumericalError -> 2, FormatError and OSError -> 3.
"""


class ValidationError(ValueError):
    """Bad user input: manifests, configs, shapes, labels, arguments."""


class NumericalError(ArithmeticError):
    """NaN/Inf or divergence produced where a finite result is required."""


class FormatError(ValueError):
    """A binary or text file does not match its declared format."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class TruncatedFileError(FormatError):
    """File ended before the declared payload was complete."""


class UnsupportedFormatError(FormatError):
    """Recognized but unsupported variant (e.g. ASCII PPM, 16-bit maxval)."""
