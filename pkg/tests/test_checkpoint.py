import numpy as np
import pytest

from regionwalk.checkpoint import read_vsck, write_vsck
from regionwalk.errors import FormatError, PayloadLengthError


def test_round_trip_bitwise(tmp_path):
    path = tmp_path / "x.vsck"
    records = {
        "a": np.arange(6.0).reshape(2, 3),
        "meta.step": np.array([[7.0]]),
        "z.weights": np.random.default_rng(0).standard_normal((4, 4)),
    }
    write_vsck(path, "lr=0.1\nseed=3", records)
    config, back = read_vsck(path)
    assert config == "lr=0.1\nseed=3"
    assert set(back) == set(records)
    for name in records:
        assert back[name].dtype == np.float64
        assert np.array_equal(back[name], records[name])


def test_empty_config_ok(tmp_path):
    path = tmp_path / "x.vsck"
    write_vsck(path, "", {"a": np.zeros((1, 1))})
    config, back = read_vsck(path)
    assert config == ""
    assert np.array_equal(back["a"], [[0.0]])


def test_rejects_non_2d_record(tmp_path):
    with pytest.raises(FormatError):
        write_vsck(tmp_path / "x.vsck", "", {"a": np.zeros(3)})


def test_bad_magic(tmp_path):
    path = tmp_path / "x.vsck"
    path.write_bytes(b"WHAT" + b"\x00" * 16)
    with pytest.raises(FormatError, match="magic"):
        read_vsck(path)


def test_truncation_names_failing_field(tmp_path):
    path = tmp_path / "x.vsck"
    write_vsck(path, "k=v", {"weights": np.ones((3, 3))})
    raw = path.read_bytes()
    for cut in (3, 10, len(raw) - 4):
        path.write_bytes(raw[:cut])
        with pytest.raises(PayloadLengthError, match="truncated"):
            read_vsck(path)


def test_unicode_config_round_trips(tmp_path):
    path = tmp_path / "x.vsck"
    write_vsck(path, "note=étude", {"a": np.zeros((1, 1))})
    config, _ = read_vsck(path)
    assert config == "note=étude"
