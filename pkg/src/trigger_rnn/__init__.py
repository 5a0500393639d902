"""Biomedical event trigger identification with a bidirectional RNN."""

__version__ = "0.1.0"
