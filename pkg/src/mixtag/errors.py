"""Exception hierarchy shared across the toolkit.

Grouped by the stage that raises them; the CLI maps groups to exit codes
(config -> 2, data -> 3, numerical -> 4).
"""


class MixtagError(Exception):
    """Base class for all toolkit errors."""


# -- configuration --------------------------------------------------------

class ConfigError(MixtagError):
    """Malformed or contradictory configuration input."""


# -- dataset ingestion -----------------------------------------------------

class DataError(MixtagError):
    """Base class for dataset / file-content errors."""


class ParseError(DataError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DuplicateId(DataError):
    def __init__(self, chunk_id):
        super().__init__(f"duplicate chunk_id {chunk_id!r}")
        self.chunk_id = chunk_id


class BadLabel(DataError):
    def __init__(self, char, row=None):
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"unknown label character {char!r}{where}")
        self.char = char
        self.row = row


class FormatMismatch(DataError):
    """Audio file is not PCM16 mono at the expected sample rate."""


class IoError(DataError):
    """File could not be read or written."""


class TooFewItems(DataError):
    """Fewer manifest entries than requested folds."""


# -- numerics / shapes -----------------------------------------------------

class ShapeError(MixtagError):
    """Array shape incompatible with the operation's contract."""


class BadSize(MixtagError):
    """Scalar size argument out of range."""


class BadRange(MixtagError):
    """Invalid frequency range."""


class EmptyInput(MixtagError):
    """Operation requires at least one element."""


class BadAlpha(MixtagError):
    """Beta concentration must be strictly positive."""


class EmptyBatch(MixtagError):
    """Augmentation requires a non-empty batch."""


class DegenerateClass(MixtagError):
    """EER undefined: a class has no positives or no negatives."""

    def __init__(self, class_index, message=None):
        super().__init__(message or f"class {class_index} has a single label value")
        self.class_index = class_index


class NonFiniteGradient(MixtagError):
    """A gradient turned NaN or infinite; the epoch is aborted."""


class NonFiniteLoss(MixtagError):
    """Training or validation loss turned NaN or infinite."""
