"""Exception types shared across the package."""


class BspForestError(Exception):
    """Base class for all package-specific errors."""


class GeometryError(BspForestError, ValueError):
    """Invalid geometric input (empty point set, unsplittable region, ...)."""


class ConfigError(BspForestError, ValueError):
    """Invalid run configuration; the message names the offending field."""


class ModelFormatError(BspForestError, ValueError):
    """Model file cannot be decoded (bad magic, version mismatch, truncation)."""


class IngestError(BspForestError, ValueError):
    """CSV ingestion failure (missing file, non-numeric cells, bad label column)."""
