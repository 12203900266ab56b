"""Frequency-specific speech test factory driven by ASR confusion patterns."""

__version__ = "0.1.0"
