"""Custom exception classes for the application."""


class IdPipeError(Exception):
    """Base exception for all idpipe errors."""

    pass


class DimensionError(IdPipeError):
    """Raised when raster data does not match its declared dimensions."""

    pass


class KernelError(IdPipeError):
    """Raised for kernels with even or empty dimensions."""

    pass


class ParameterError(IdPipeError):
    """Raised for out-of-range operation parameters."""

    pass


class GeometryError(IdPipeError):
    """Raised for degenerate point sets and boxes outside the image."""

    pass


class SizeError(IdPipeError):
    """Raised when an image is too small for the requested operation."""

    pass


class NoTextError(IdPipeError):
    """Raised when the block estimator finds fewer than 3 text pixels."""

    pass


class NoCardError(IdPipeError):
    """Raised when auto-cropping cannot find any card contour."""

    pass


class AdapterError(IdPipeError):
    """Raised when an external detector exits non-zero or prints garbage."""

    def __init__(self, message: str, stderr: str = "") -> None:
        super().__init__(message)
        self.stderr = stderr


class AdapterTimeoutError(AdapterError):
    """Raised when an external detector does not finish in time."""

    pass


class AlphabetError(IdPipeError):
    """Raised for characters outside the MRZ alphabet [A-Z0-9<]."""

    pass


class MrzParseError(IdPipeError):
    """Raised for structurally invalid MRZ input (line count, length, alphabet)."""

    pass


class UnsupportedMrzFormatError(MrzParseError):
    """Raised for recognised but unsupported MRZ classes (TD1, TD2)."""

    pass


class ReaderError(IdPipeError):
    """Raised by a glyph reader given an empty glyph box."""

    pass


class SpecError(IdPipeError):
    """Raised for synthetic card specs that cannot be rendered."""

    pass


class ImageReadError(IdPipeError):
    """Raised when an input image cannot be read or decoded."""

    pass


class StoreError(IdPipeError):
    """Raised when the record store cannot be written."""

    pass


class DuplicateRecordError(StoreError):
    """Raised when a record id is already present in the store."""

    pass


class EmptyReportError(IdPipeError):
    """Raised when a timing report is requested for no records."""

    pass


class StageError(IdPipeError):
    """Raised when a pipeline stage fails structurally; carries the stage name."""

    def __init__(self, stage: str, message: str) -> None:
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
