"""Focal-body extraction from a spherical mirror and force-field shrink-wrapping."""

__version__ = "0.1.0"
