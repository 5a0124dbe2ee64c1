"""CIPIC MATLAB release to portable HRTF dataset converter."""

from .convert import ConversionError, ConversionReport, convert

__all__ = ["ConversionError", "ConversionReport", "convert"]
__version__ = "0.1.0"
