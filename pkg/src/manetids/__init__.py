"""Simulated MANET flooding-attack detection with a small feedforward network."""

__version__ = "0.1.0"
