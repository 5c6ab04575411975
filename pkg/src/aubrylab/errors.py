"""Exception hierarchy shared by all aubrylab modules."""


class AubryLabError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(AubryLabError, ValueError):
    """An input failed a declared precondition."""


class LoopStructureError(AubryLabError, ValueError):
    """A discrete loop's nodes and displacements are inconsistent."""


class DomainError(AubryLabError, ValueError):
    """A numeric argument lies outside the domain of an operation."""


class DegenerateTimeError(AubryLabError, ValueError):
    """Per-edge optimal times are undefined (zero critical level, moving edge)."""


class NegativeCycleAtCritical(AubryLabError):
    """A negative cycle survived at the supposed critical level.

    Raised by potential computations; callers retry with a slightly larger
    level (see ``aubry.mane_potential_retry``).
    """

    def __init__(self, alpha, cycle_cost):
        super().__init__(
            f"negative cycle (cost {cycle_cost:.3e}) at level {alpha!r}"
        )
        self.alpha = alpha
        self.cycle_cost = cycle_cost


class MissingSeedError(AubryLabError, KeyError):
    """A potential was requested from a node that is not a seed."""


class NoSeparationError(AubryLabError):
    """Two measures cannot be told apart by the projected pairing."""


class DegenerateMeasureError(AubryLabError):
    """A measure charges the zero section where this is not allowed."""


class ConstraintViolation(AubryLabError, ValueError):
    """A conformal perturbation does not keep 1 + 2u positive."""


class ConfigError(AubryLabError):
    """Configuration text could not be parsed or validated.

    ``field`` names the offending key (dotted path) for validation errors;
    ``line``/``column`` locate syntax errors.
    """

    def __init__(self, message, field=None, line=None, column=None):
        super().__init__(message)
        self.field = field
        self.line = line
        self.column = column

    def as_record(self):
        return {
            "error": "config",
            "message": str(self),
            "field": self.field,
            "line": self.line,
            "column": self.column,
        }
