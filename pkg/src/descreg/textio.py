"""Helpers for the line-based text formats used across the package."""

from __future__ import annotations

from collections.abc import Iterable

import numpy as np

from .errors import FormatError

__all__ = ["format_real", "format_vector", "parse_real", "parse_vector", "split_lines", "require_header"]


def format_real(x: float) -> str:
    # repr of a Python float is the shortest string that round-trips exactly,
    # which keeps serialize(parse(text)) byte-identical for canonical files.
    return repr(float(x))


def format_vector(values: Iterable[float]) -> str:
    return " ".join(format_real(v) for v in values)


def parse_real(token: str, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise FormatError(f"line {lineno}: expected a real number, got {token!r}") from None


def parse_vector(text: str, lineno: int, expected_dim: int | None = None) -> np.ndarray:
    tokens = text.split()
    if expected_dim is not None and len(tokens) != expected_dim:
        raise FormatError(
            f"line {lineno}: expected {expected_dim} components, got {len(tokens)}"
        )
    values = np.array([parse_real(t, lineno) for t in tokens], dtype=float)
    if not np.all(np.isfinite(values)):
        raise FormatError(f"line {lineno}: vector components must be finite")
    return values


def split_lines(text: str) -> list[str]:
    """Split a file's contents into lines, dropping one trailing empty line."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def require_header(lines: list[str], expected: str) -> None:
    if not lines:
        raise FormatError(f"line 1: empty input, expected header {expected!r}")
    if lines[0] != expected:
        raise FormatError(f"line 1: expected header {expected!r}, got {lines[0]!r}")
