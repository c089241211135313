"""Decomposition, linear-variant selection and conditional-GAN refinement
for multi-horizon time-series forecasting."""
from .errors import ConfigError, DataError, HcastError, NumericalError, TrainingDiverged
from .kernels import backend

__version__ = "0.1.0"

__all__ = ["ConfigError", "DataError", "HcastError", "NumericalError", "TrainingDiverged", "backend",
           "__version__"]
