"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class CroprowError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateInputError(CroprowError, ValueError):
    pass


class NoIntersectionError(CroprowError, ValueError):
    pass


class InsufficientOverlapError(CroprowError, ValueError):
    def __init__(self, count: int, message: str | None = None):
        self.count = count
        super().__init__(message or f"only {count} valid rows shared by both lines (need >= 2)")


class InvalidLabelError(CroprowError, ValueError):
    def __init__(self, value: int, index: int, taxonomy: str):
        self.value = value
        self.index = index
        super().__init__(f"label {value} at pixel index {index} is not a valid {taxonomy} id")


class TaxonomyMismatchError(CroprowError, ValueError):
    pass


class DimensionMismatchError(CroprowError, ValueError):
    pass


class DetectionFailure(CroprowError):
    """Fewer than two boundary lines could be found; ``partial`` holds what was found."""

    def __init__(self, partial, message: str | None = None):
        self.partial = list(partial)
        super().__init__(message or f"boundary detection found {len(self.partial)} line(s), need 2")


class FormatError(CroprowError, ValueError):
    pass


class ManifestError(CroprowError):
    pass


class MissingFileError(ManifestError, FileNotFoundError):
    pass


class DuplicateIdError(ManifestError, ValueError):
    pass


class UnknownSplitError(ManifestError, ValueError):
    pass
