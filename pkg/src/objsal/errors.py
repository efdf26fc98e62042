"""Exception types shared across the toolkit."""


class ObjsalError(Exception):
    """Base class for all toolkit errors."""


class ZeroMassError(ObjsalError):
    """An all-zero map was given where positive total mass is required."""


class BoundsError(ObjsalError):
    """A fixation point lies outside the target image bounds."""


class ShapeError(ObjsalError):
    """Grids that must share a shape do not."""


class DegenerateInputError(ObjsalError):
    """Input is degenerate for the requested metric (e.g. zero variance)."""


class EmptyFixationsError(ObjsalError):
    """An operation requiring at least one fixation received none."""


class ConfigError(ObjsalError):
    """Invalid or incomplete configuration."""


class FormatError(ObjsalError):
    """A file does not conform to its expected on-disk format."""


class EmptyDatasetError(ObjsalError):
    """Dataset scanning found no evaluable frames."""


class GraphError(ObjsalError):
    """An object graph is structurally invalid."""
