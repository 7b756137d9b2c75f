"""Exception types raised across the package."""


class StylerError(Exception):
    """Base class for all package errors."""


class ShapeError(StylerError, ValueError):
    """A tensor does not have the shape an operation requires."""


class SizeError(StylerError, ValueError):
    """Spatial size violates the multiple-of-8 rule or a minimum size."""


class UnknownLayerError(StylerError, KeyError):
    """A loss-network layer name that does not exist in the truncated network."""


class DataError(StylerError):
    """Missing or unreadable input data."""


class CheckpointError(StylerError):
    """A checkpoint is malformed or incompatible with the compiled-in architecture."""


class DivergenceError(StylerError):
    """Training produced a non-finite loss."""

    def __init__(self, iteration: int, losses: dict):
        self.iteration = iteration
        self.losses = losses
        super().__init__(f"non-finite loss at iteration {iteration}: {losses}")


class ConfigError(StylerError):
    """Invalid configuration key or value."""
