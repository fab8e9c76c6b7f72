class IarcError(Exception):
    """Base class for every error raised by the task-switching code."""


class ConfigurationError(IarcError, ValueError):
    """Invalid task/model/train configuration or mismatched dimensions."""


class ShapeMismatchError(IarcError, ValueError):
    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        listed = " vs ".join(str(s) for s in self.shapes)
        super().__init__(f"{op}: incompatible shapes {listed}")


class OracleError(IarcError, ValueError):
    """The oracle was asked for a symbol it has no rule for."""


class StreamTooShortError(IarcError, ValueError):
    pass


class CheckpointError(IarcError, ValueError):
    pass


class NumericalError(IarcError, ArithmeticError):
    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")
