"""Exception hierarchy. The CLI maps these onto exit codes."""


class OpbenchError(Exception):
    pass


class ShapeError(OpbenchError, ValueError):
    pass


class RangeError(OpbenchError, ValueError):
    pass


class CapacityError(OpbenchError, ValueError):
    pass


class DegenerateError(OpbenchError, ValueError):
    """A metric or loss is undefined for the given data (zero variance, zero norm, ...)."""


class NumericError(OpbenchError, ArithmeticError):
    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class FactorizationError(NumericError):
    pass


class DivergenceError(NumericError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class BlowUpError(NumericError):
    pass


class StabilityError(NumericError):
    pass


class StorageError(OpbenchError, OSError):
    pass


class CheckpointError(StorageError):
    pass


class DatasetFormatError(StorageError):
    pass


class TruncatedFileError(DatasetFormatError):
    pass


class ChecksumError(DatasetFormatError):
    pass
