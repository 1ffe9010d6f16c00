"""Exception types shared across the captioning engine."""


class AudiocapError(Exception):
    """Base class for all engine errors."""


class DimensionError(AudiocapError):
    """Vector dimensions do not agree."""


class DegenerateVectorError(AudiocapError):
    """An all-zero vector was passed where a direction is required."""


class EmptyInputError(AudiocapError):
    """An operation received an empty input it cannot handle."""


class IoError(AudiocapError):
    """A file could not be read or written."""


class ParseError(AudiocapError):
    """A fixture or data file is malformed.

    Carries the 1-based line number when the format is line-oriented.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateIdError(AudiocapError):
    """Two records share an identifier that must be unique."""


class EmptyKeywordListError(AudiocapError):
    """A keyword source produced no usable entries."""


class MissingReferenceError(AudiocapError):
    """A candidate caption has no reference set to score against."""


class InsufficientCorpusError(AudiocapError):
    """The metric needs more clips than the corpus provides."""


class MissingClipError(AudiocapError, KeyError):
    """A fixture matcher was asked for an audio clip it does not hold."""


class MissingContextError(AudiocapError, KeyError):
    """A fixture language model has no table entry for a context."""
