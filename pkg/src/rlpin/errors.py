"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """A game or scenario violates a modelling hypothesis (e.g. a non-positive utility)."""


class MeasurementError(ValueError):
    """A speed measurement cannot be turned into a valid reinforcement signal."""


class GameTooLargeError(ValueError):
    """The game exceeds the exhaustive-enumeration budget; sample instead."""


class ScenarioError(ValueError):
    """A scenario document is malformed.

    Attributes:
        field: dotted path of the offending field (``"threads[2].demand"``).
        constraint: human readable description of what was expected.
    """

    def __init__(self, field: str, constraint: str, line: int | None = None):
        self.field = field
        self.constraint = constraint
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{field}: {constraint}{where}")
