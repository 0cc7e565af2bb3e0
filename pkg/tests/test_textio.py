import numpy as np
import pytest

from descreg.errors import FormatError
from descreg.textio import (
    format_real,
    format_vector,
    parse_real,
    parse_vector,
    require_header,
    split_lines,
)


def test_format_real_round_trips_doubles():
    rng = np.random.default_rng(0)
    for _ in range(200):
        x = float(rng.normal() * 10.0 ** rng.integers(-12, 12))
        assert float(format_real(x)) == x


def test_format_vector_space_separated():
    assert format_vector([1.0, 2.5]) == "1.0 2.5"


def test_parse_real_rejects_junk():
    with pytest.raises(FormatError):
        parse_real("twelve", lineno=3)


def test_parse_vector_dimension_check():
    v = parse_vector("1 2 3", lineno=1)
    assert v.shape == (3,)
    with pytest.raises(FormatError):
        parse_vector("1 2 3", lineno=1, expected_dim=2)


def test_parse_vector_rejects_non_finite():
    with pytest.raises(FormatError):
        parse_vector("1 nan", lineno=1)
    with pytest.raises(FormatError):
        parse_vector("inf 2", lineno=1)


def test_split_lines_strips_trailing_blank():
    assert split_lines("a\nb\n") == ["a", "b"]
    assert split_lines("a\nb") == ["a", "b"]


def test_require_header():
    require_header(["hdr v1", "x"], "hdr v1")
    with pytest.raises(FormatError):
        require_header(["wrong", "x"], "hdr v1")
    with pytest.raises(FormatError):
        require_header([], "hdr v1")
