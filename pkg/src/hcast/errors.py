class HcastError(Exception):
    """Base class for all errors raised by hcast."""


class DataError(HcastError):
    """Bad or insufficient input data."""


class ConfigError(HcastError):
    """Invalid configuration or incompatible request."""


class NumericalError(HcastError):
    """A computation produced non-finite values."""


class TrainingDiverged(NumericalError):
    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
