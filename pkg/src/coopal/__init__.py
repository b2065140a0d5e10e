"""Cooperative active learning among networked weak labelers."""

from .core import Label, Mode, Sample, ValidationError, label_from_index
from .integration import Method

__version__ = "0.1.0"

__all__ = ["Label", "Mode", "Sample", "ValidationError", "label_from_index", "Method", "__version__"]
