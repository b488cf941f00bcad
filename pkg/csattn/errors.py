"""
csattn/errors.py

Exception hierarchy shared by the library and the CLI.

Everything raised on purpose derives from CSAttnError so the CLI can map it
to exit code 1 without swallowing programming errors.
"""

from __future__ import annotations


class CSAttnError(Exception):
    """Base class for all library errors."""


class ShapeError(CSAttnError, ValueError):
    """Extents, ranks or channel counts do not agree."""


class NonFiniteError(CSAttnError, FloatingPointError):
    """An operation produced (or was fed) NaN or Inf."""


class ConfigError(CSAttnError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class CheckpointError(CSAttnError):
    """Checkpoint file is malformed, corrupted or does not match the network."""


class DatasetError(CSAttnError):
    """Image pairs are missing, unmatched, undecodable or too small."""
