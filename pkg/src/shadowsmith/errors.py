"""Exception types shared across the package."""


class ShadowsmithError(Exception):
    """Base class for all package-specific errors."""


class DatasetError(ShadowsmithError):
    """Dataset loading or validation failed (bad file, bad annotation)."""


class MaskDecodeError(DatasetError):
    """A segmentation record could not be decoded into a binary mask."""


class ConfigError(ShadowsmithError):
    """Invalid user-supplied configuration (ranges, paths, flags)."""
