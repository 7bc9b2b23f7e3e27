"""Exception hierarchy shared by every rblab module."""


class RblabError(Exception):
    """Base class; ``tag`` is the machine-readable name surfaced by the CLI."""

    @property
    def tag(self) -> str:
        return type(self).__name__


class RangeError(RblabError, ValueError):
    pass


class SchemaError(RblabError, ValueError):
    pass


class DiagonalEvaluation(RblabError, ValueError):
    pass


class ResourceLimit(RblabError):
    pass


class EmbeddingFailure(RblabError):
    pass


class NumericalBlowup(RblabError, ArithmeticError):
    pass


class IncompatibleGrid(RblabError, ValueError):
    pass


class OddSampleSize(RblabError, ValueError):
    pass


class DegeneratePath(RblabError, ValueError):
    pass


class DegenerateRegressor(RblabError, ArithmeticError):
    pass


class DegenerateDiffusion(RblabError, ArithmeticError):
    pass


class InsufficientResolution(RblabError, ValueError):
    pass


class MissingCalibration(RblabError, LookupError):
    pass


class InsufficientPoints(RblabError, ValueError):
    pass


class DegenerateSample(RblabError, ValueError):
    pass


class EmptyCell(RblabError, ValueError):
    pass


class OutputExists(RblabError):
    """Refusing to write into a non-empty output directory."""
