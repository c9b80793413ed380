"""Exception hierarchy shared across the package.

Everything raised on bad input derives from :class:`InputError` so callers
(and the CLI) can distinguish "your data is wrong" from genuine runtime
failures.
"""


class RelotrackError(Exception):
    """Base class for all errors raised by this package."""


class InputError(RelotrackError):
    """Bad input data or configuration. CLI maps these to exit code 1."""


class SchemaError(InputError):
    """A structured document is malformed. Messages carry a field path."""


class ParseError(InputError):
    """A file could not be decoded at all. Messages carry a line number
    where one applies."""


class ValidationError(InputError):
    """Well-formed data that violates an invariant."""


class PlacementError(InputError):
    """Two objects on the same surface overlap in plan view."""


class UnknownInstanceError(InputError):
    """A change references an instance id that does not exist, or adds one
    that already does."""


class RandomizationError(InputError):
    """No non-overlapping placement was found within the attempt budget."""


class CollisionError(InputError):
    """A route action would move the agent into a non-walkable cell."""


class SaturationError(InputError):
    """A head tilt beyond the supported pitch range."""


class ProtocolError(InputError):
    """Two capture logs are not comparable (different route or camera)."""


class CoverageError(InputError):
    """Ground truth does not cover an object present in a report."""
