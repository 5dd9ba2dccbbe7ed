"""Exception hierarchy shared by every gridsurge subsystem."""


class GridSurgeError(Exception):
    """Base class; ``kind`` is the machine-readable tag used by the CLI."""

    kind = "Error"


class ModelError(GridSurgeError):
    kind = "ModelError"


class DanglingReference(ModelError):
    kind = "DanglingReference"


class DisconnectedGraph(ModelError):
    kind = "DisconnectedGraph"


class NonPositiveImpedance(ModelError):
    kind = "NonPositiveImpedance"


class NoConvergence(GridSurgeError):
    kind = "NoConvergence"


class UnknownTarget(GridSurgeError):
    kind = "UnknownTarget"


class FrameError(GridSurgeError):
    kind = "FrameError"


class PayloadTooLong(FrameError):
    kind = "PayloadTooLong"


class BadSync(FrameError):
    kind = "BadSync"


class ChecksumError(FrameError):
    kind = "ChecksumError"


class TruncatedFrame(FrameError):
    kind = "TruncatedFrame"


class UnknownFunction(FrameError):
    kind = "UnknownFunction"


class QueueOverflow(GridSurgeError):
    kind = "QueueOverflow"


class UnknownLink(GridSurgeError):
    kind = "UnknownLink"


class UnknownPoint(GridSurgeError):
    kind = "UnknownPoint"


class InvalidScenario(GridSurgeError):
    kind = "InvalidScenario"


class ParseError(InvalidScenario):
    """Syntax error in a scenario file, with 1-based line/column."""

    kind = "ParseError"

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class ValidationError(InvalidScenario):
    """Semantic error; ``key`` is the dotted path of the offending entry."""

    kind = "ValidationError"

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class EmptySeries(GridSurgeError):
    kind = "EmptySeries"


class ShapeMismatch(GridSurgeError):
    kind = "ShapeMismatch"
