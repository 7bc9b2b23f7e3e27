"""Rosenblatt-noise SDE simulation and parameter estimation."""
from .errors import RblabError
from .paths import SamplePath

__version__ = "0.1.0"
__all__ = ["RblabError", "SamplePath", "__version__"]
