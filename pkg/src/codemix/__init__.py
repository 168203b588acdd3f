"""Code-mixed tweet mining, cleaning, NB-SVM polarity classification and ensembling."""

from codemix.errors import CodemixError, ConfigurationError, TrainingError, ValidationError
from codemix.labels import LABELS

__version__ = "0.1.0"

__all__ = [
    "LABELS",
    "CodemixError",
    "ConfigurationError",
    "TrainingError",
    "ValidationError",
]
