"""Exception types for the plotting package."""

from __future__ import annotations


class PlotsError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(PlotsError):
    """An input table does not match its documented column schema."""
