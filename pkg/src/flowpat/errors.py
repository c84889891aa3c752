"""Exception hierarchy shared by every flowpat module."""


class FlowpatError(Exception):
    """Base class for all toolkit errors."""


class DataError(FlowpatError, ValueError):
    """Invalid dataset content, label, split specification or scheme."""


class ModelFormatError(FlowpatError, ValueError):
    """A model file is malformed, truncated or of the wrong version."""


class ShapeError(FlowpatError, ValueError):
    """Array dimensions disagree with the network topology."""


class TrainingDivergedError(FlowpatError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch}: loss = {loss}")


class ModelShapeError(ModelFormatError, ShapeError):
    """A model file's numbers disagree with its declared layer sizes."""
