"""
Tests for field, cone, CSV and JSON files
"""

import json

import numpy as np
import pandas as pd
import pytest

from lagflow.core.cone import ConeSpec
from lagflow.core.exceptions import UsageError
from lagflow.core.grid import ScalarField
from lagflow.services.kernels import SymMatrix
from lagflow.utils.io import (
    FIELD_HEADER,
    encode_numbers,
    format_number,
    parse_cone_text,
    read_cone,
    read_field,
    write_cone,
    write_field,
    write_frame,
    write_json,
)


def test_field_file_is_exact(grid, rng, tmp_path):
    field = ScalarField(grid, rng.standard_normal(grid.shape))
    path = write_field(field, tmp_path / "nested" / "u.field")
    lines = path.read_text().splitlines()
    assert lines[0] == FIELD_HEADER
    assert lines[1].startswith("dim=2 m=33 R=")
    assert len(lines) == 2 + 33 * 33
    loaded = read_field(path)
    assert loaded.grid == grid
    np.testing.assert_array_equal(loaded.values, field.values)


def test_field_file_with_wrong_count(grid, tmp_path):
    path = tmp_path / "short.field"
    path.write_text(f"{FIELD_HEADER}\ndim=2 m=33 R=4\n0.0\n")
    with pytest.raises(UsageError):
        read_field(path)


def test_field_file_header(tmp_path):
    path = tmp_path / "bad.field"
    path.write_text("hello\n")
    with pytest.raises(UsageError):
        read_field(path)


def test_missing_file(tmp_path):
    with pytest.raises(UsageError):
        read_field(tmp_path / "nope.field")


def test_cone_text():
    cone = parse_cone_text(
        """
        lagflow-cone v1
        # x1 >= 0
        +1 0  0.5 0.0 0.3
        -1 0 -0.5 0.0 0.3
        """
    )
    assert cone == ConeSpec.two_sector(0.5, 0.3)


def test_cone_file(tmp_path):
    cone = ConeSpec.quadratic(SymMatrix.diag([0.25, -0.1, 0.4]))
    assert read_cone(write_cone(cone, tmp_path / "c.cone")) == cone


@pytest.mark.parametrize(
    "text",
    [
        "",
        "lagflow-cone v1\n",
        "lagflow-cone v1\n1 0 0.5\n",
        "lagflow-cone v1\n1 0.5\n0 0 0.1 0.0 0.2\n",
        "lagflow-cone v1\n2 0 0.5 0.0 0.3\n",
        "lagflow-cone v1\n1 1 a 0.0 0.3\n",
    ],
)
def test_malformed_cone_text(text):
    with pytest.raises(UsageError):
        parse_cone_text(text)


def test_number_format():
    assert format_number(0.1) == "1.0000000000000001e-01"
    assert float(format_number(np.pi)) == np.pi


def test_frame_uses_full_precision(tmp_path):
    frame = pd.DataFrame({"step": [0, 1], "value": [1.0 / 3.0, float("nan")]})
    path = write_frame(frame, tmp_path / "t.csv")
    text = path.read_bytes().decode()
    assert "\r" not in text
    assert text.splitlines() == ["step,value", "0,3.3333333333333331e-01", "1,nan"]


def test_json_encodes_numbers_as_strings(tmp_path):
    payload = {"b": np.float64(0.5), "a": [1, np.int64(2), True, None], "c": {"d": 0.25}}
    assert encode_numbers(payload) == {
        "b": "5.0000000000000000e-01",
        "a": [1, 2, True, None],
        "c": {"d": "2.5000000000000000e-01"},
    }
    path = write_json(payload, tmp_path / "p.json")
    assert list(json.loads(path.read_text())) == ["a", "b", "c"]
