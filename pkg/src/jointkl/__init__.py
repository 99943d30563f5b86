"""Scoring agents by the quality of their joint predictive distributions."""

__version__ = "0.1.0"
