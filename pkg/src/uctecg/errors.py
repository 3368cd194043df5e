"""Exception hierarchy shared by all subpackages."""


class UctecgError(Exception):
    """Base class for every error raised by this package."""


class DataError(UctecgError):
    """A corpus file could not be parsed or violates the record contract."""

    def __init__(self, message, row=None, path=None):
        self.row = row
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        prefix = f"{':'.join(where)}: " if where else ""
        super().__init__(prefix + message)


class SplitError(UctecgError):
    """A train/test partition cannot be formed."""


class ConfigError(UctecgError, ValueError):
    """A configuration object has inconsistent or out-of-range fields."""


class ShapeError(UctecgError, ValueError):
    """A tensor reached a layer with the wrong shape."""

    def __init__(self, message, layer_index=None):
        self.layer_index = layer_index
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)


class TrainingError(UctecgError, RuntimeError):
    """Training diverged (non-finite loss)."""

    def __init__(self, message, epoch=None, batch=None):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"{message} (epoch {epoch}, batch {batch})")


class CheckpointError(UctecgError):
    """A checkpoint is corrupt, truncated, or written by an unknown format version."""
