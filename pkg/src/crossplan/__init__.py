"""Deterministic simulator and planners for a signal-free four-way intersection."""

__version__ = "0.1.0"
