"""Exception types shared across the pipeline."""


class CaptError(Exception):
    """Base class for all errors raised by this package."""


class DataFormatError(CaptError):
    """A file or byte stream does not conform to its documented format."""


class DomainError(CaptError):
    """An argument is outside the operation's domain (bad phoneme, bad
    position, dimension mismatch, ...)."""


class CoverageError(CaptError):
    """Training data does not cover a required phoneme."""


class NoPathError(CaptError):
    """Decoding pruned every path; a larger beam may help."""


class UnsupportedConstructError(CaptError):
    """A grammar file uses syntax outside the supported subset."""


class ReconciliationError(CaptError):
    """Feature files and transcripts do not cover the same utterances."""


class DegenerateDataError(CaptError):
    """A training set cannot be fit (e.g. only one class present)."""
