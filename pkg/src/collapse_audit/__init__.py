"""Audit whether an advisor's allocation decisions collapse onto a few client attributes."""

__version__ = "0.1.0"
