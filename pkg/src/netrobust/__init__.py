"""Hierarchical worst-case gain analysis of networks of uncertain LTI subsystems."""

__version__ = "0.1.0"
