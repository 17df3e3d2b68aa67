"""Audio-to-audio performance alignment and annotation-precision analysis."""

__version__ = "0.1.0"
