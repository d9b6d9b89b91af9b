"""Lifelong differentially private continual learning."""

__version__ = "0.1.0"
