"""Behavioral user fingerprinting from mouse movements, gaze, and browser statistics."""

__version__ = "0.1.0"
