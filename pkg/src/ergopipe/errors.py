"""Exception types shared across the toolkit."""


class ErgoError(Exception):
    """Base class for all toolkit errors."""


class CaptureFormatError(ErgoError):
    """Capture CSV is malformed (header, row shape, or cell contents)."""


class TimeSequenceError(ErgoError):
    """Frame indices or time stamps are not strictly increasing."""


class MarkerLookupError(ErgoError):
    """A requested marker label is not present."""


class InsufficientDataError(ErgoError):
    """Too few present samples for the requested operation."""


class OrderingError(ErgoError):
    """Operation requires gap-free input (run fill_gaps first)."""


class ParameterError(ErgoError):
    """Parameter outside its documented range."""


class DomainError(ErgoError):
    """Value outside the mathematical domain of the model."""


class AlignmentError(ErgoError):
    """Two series that must share one time grid do not."""


class GridError(ErgoError):
    """Time grid is not uniform, or too short for the stencil."""


class DegenerateGeometryError(ErgoError):
    """Calibration produced a zero-length segment."""


class DegenerateInputError(ErgoError):
    """A direction vector needed by the solver has zero norm."""


class GeometryMismatchError(ErgoError):
    """Marker-derived segment length too far from the calibrated length."""


class StateError(ErgoError):
    """Operation conflicts with the current world state."""


class SimulationDivergedError(ErgoError):
    """A rigid body reached a non-finite state."""


class PlotError(ErgoError):
    """A series cannot be plotted."""


class StageError(ErgoError):
    """Pipeline stage failure, tagged with the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
