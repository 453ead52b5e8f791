import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from pqcluster import container, tables

finite = st.floats(allow_nan=False, allow_infinity=False)


def test_container_layout():
    blob = container.dumps({"format": "x"}, {"a": np.array([1.0, 2.0]), "b": np.arange(3, dtype=np.int32)})
    (n,) = struct.unpack("<I", blob[:4])
    assert blob[4 + n:] == struct.pack("<2d", 1.0, 2.0) + struct.pack("<3i", 0, 1, 2)


def test_container_big_endian_input_written_little_endian():
    arr = np.array([1.5, -2.0], dtype=">f8")
    header, arrays = container.loads(container.dumps({}, {"a": arr}))
    np.testing.assert_array_equal(arrays["a"], [1.5, -2.0])
    assert arrays["a"].dtype == np.float64


@given(arrays(st.sampled_from([np.float32, np.float64, np.int64]),
              st.tuples(st.integers(0, 4), st.integers(1, 5)), elements=st.integers(-1000, 1000)))
def test_container_round_trip(arr):
    header, arrays = container.loads(container.dumps({"k": [1, "v"]}, {"x": arr}))
    assert header == {"k": [1, "v"]}
    np.testing.assert_array_equal(arrays["x"], arr)
    assert arrays["x"].dtype == arr.dtype and arrays["x"].shape == arr.shape


def test_container_corruption():
    blob = container.dumps({}, {"a": np.zeros(4)})
    with pytest.raises(ValueError):
        container.loads(blob[:-1])
    with pytest.raises(ValueError):
        container.loads(blob + b"\0")
    with pytest.raises(ValueError):
        container.loads(b"\1")


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 4)), elements=finite))
def test_matrix_csv_round_trip(tmp_path_factory, M):
    path = tmp_path_factory.mktemp("csv") / "m.csv"
    ids = [f"r,{i}" for i in range(len(M))]  # ids needing quotes
    tables.write_matrix(path, ids, M)
    back_ids, back, extra = tables.read_matrix(path)
    assert back_ids == ids and extra == {}
    np.testing.assert_array_equal(back, M)
    assert tables.read_features(path)[0] == ids


def test_csv_is_crlf_with_header(tmp_path):
    p = tmp_path / "a.csv"
    tables.write_assignments(p, ["a", "b"], [0, 2])
    assert p.read_bytes() == b"id,cluster\r\na,0\r\nb,2\r\n"
    ids, a = tables.read_assignments(p)
    assert ids == ["a", "b"] and a.tolist() == [0, 2]


def test_centers_and_curve_round_trip(tmp_path):
    C = np.array([[0.1, 1e-300], [-3.0, 2.5]])
    tables.write_centers(tmp_path / "c.csv", C)
    np.testing.assert_array_equal(tables.read_centers(tmp_path / "c.csv"), C)
    tables.write_curve(tmp_path / "e.csv", [2, 3], [10.5, 4.25])
    assert tables.read_curve(tmp_path / "e.csv") == ([2, 3], [10.5, 4.25])


def test_read_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x,cluster\r\n")
    with pytest.raises(ValueError):
        tables.read_assignments(p)
    p.write_text("")
    with pytest.raises(ValueError):
        tables.read_matrix(p)
