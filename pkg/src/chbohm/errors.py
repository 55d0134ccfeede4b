"""Exception types shared across the package."""


class ChBohmError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(ChBohmError, ValueError):
    pass


class NotNormalized(ChBohmError, ValueError):
    pass


class TimeLabelUnknown(ChBohmError, KeyError):
    pass


class NonOrthogonalSet(ChBohmError, ValueError):
    pass


class InconsistentFamily(ChBohmError):
    """Raised when probabilities are requested from a family that fails the
    consistency condition."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ZeroProbabilityCondition(ChBohmError, ZeroDivisionError):
    pass


class NodeRegion(ChBohmError, ArithmeticError):
    """Guidance quantity requested where the density is below the floor."""


class NodeEncountered(ChBohmError):
    """Step control could not keep a trajectory away from a node."""


class ScenarioParseError(ChBohmError, ValueError):
    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + where)
        self.line = line
        self.column = column
