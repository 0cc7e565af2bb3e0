"""Shared exception types.

``FormatError`` covers malformed data files (embeddings, splits, regions,
detections, models); ``ConfigError`` covers run-configuration problems.  Both
carry messages that name the offending line when one exists, so CLI users can
fix files without reading code.
"""

from __future__ import annotations

__all__ = ["DescRegError", "FormatError", "ConfigError"]


class DescRegError(Exception):
    """Base class for package-specific failures."""


class FormatError(DescRegError, ValueError):
    """A data file does not follow its declared format."""


class ConfigError(DescRegError, ValueError):
    """A run configuration is malformed or inconsistent."""
