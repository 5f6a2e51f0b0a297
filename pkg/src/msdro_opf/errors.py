"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid or inconsistent user-supplied data."""


class UnsupportedError(ValueError):
    """A parameter combination with no implemented formula."""


class SizeError(ValueError):
    """A problem instance exceeds a configured size cap."""


class ModeError(ValueError):
    """An operation was called on data in the wrong mode (e.g. ragged lengths)."""


class TopologyError(ValueError):
    """The network graph does not admit the requested computation."""


class ExtractionError(RuntimeError):
    """A solution is missing the primal or dual values required here."""
