"""Exception hierarchy shared across the package.

The service layer maps these onto HTTP status codes, so raising the
right subclass matters more than the message text.
"""


class VoxelDBError(Exception):
    """Base class for all voxeldb errors."""


class BadRequestError(VoxelDBError):
    """Malformed input: bad URL grammar, bad ranges, unknown query field."""


class NotFoundError(VoxelDBError):
    """Unknown project, dataset, object id, or resolution level."""


class BoundsError(VoxelDBError):
    """Region lies (entirely) outside the dataset extent."""


class AlignmentError(VoxelDBError):
    """Block is not a power-of-two aligned cube in grid units."""


class CoordinateRangeError(VoxelDBError):
    """Grid coordinate exceeds the per-dimension bit budget."""


class ReadOnlyError(VoxelDBError):
    """Write attempted on a read-only or propagation-locked project."""


class ConfigError(VoxelDBError):
    """Inconsistent dataset/project/placement configuration."""


class IntegrityError(VoxelDBError):
    """Stored payload failed to decode or verify."""


class StorageError(VoxelDBError):
    """Backend I/O failure."""


class ConflictError(VoxelDBError):
    """Duplicate token or discipline unsupported by the project."""


class MigrationError(VoxelDBError):
    """Copy verification failed; source left intact."""
