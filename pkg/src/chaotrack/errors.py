"""Exception hierarchy. ``exit_code`` is what the CLI returns for each class."""


class ChaoTrackError(Exception):
    exit_code = 1


class DataError(ChaoTrackError):
    """Bad input data: parse failures, duplicate ids, shape mismatches."""

    exit_code = 3


class ShapeError(DataError, ValueError):
    pass


class GridFormatError(DataError):
    pass


class NonFiniteError(ChaoTrackError, ArithmeticError):
    exit_code = 4


class TrainingDivergedError(NonFiniteError):
    def __init__(self, epoch: int, batch: int, detail: str = ""):
        self.epoch = epoch
        self.batch = batch
        msg = f"non-finite loss at epoch {epoch}, batch {batch}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class FormatVersionError(ChaoTrackError):
    exit_code = 5
