"""Exception hierarchy shared by every module."""


class GraphSparseError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class ShapeError(GraphSparseError, ValueError):
    pass


class DataError(GraphSparseError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RankError(GraphSparseError, ValueError):
    def __init__(self, message, rank=None):
        self.rank = rank
        super().__init__(message)


class InversionError(GraphSparseError, ValueError):
    pass


class SingularityError(GraphSparseError, ZeroDivisionError):
    pass


class DivergenceError(GraphSparseError, FloatingPointError):
    pass


class EvaluationError(GraphSparseError, FloatingPointError):
    pass


class CheckpointError(GraphSparseError, ValueError):
    pass


class InsufficientDataError(GraphSparseError, ValueError):
    pass


class DomainError(GraphSparseError, ValueError):
    pass
