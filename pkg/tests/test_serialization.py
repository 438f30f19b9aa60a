"""Header+payload array files: bit-exact round trips and damage detection."""

import numpy as np
import pytest

from satsr.serialization import PayloadError, read_payload, write_payload


def _sample_arrays():
    rng = np.random.default_rng(3)
    return [
        ("grid_f4", rng.standard_normal((5, 4)).astype("<f4")),
        ("vec_i8", np.arange(-3, 3, dtype="<i8")),
        ("scalar_f8", np.float64(2.5)),
        ("bytes_u1", np.frombuffer(b"\x00\x01\xfe\xff", dtype="<u1").copy()),
        ("counter_u8", np.array([0, 2**63], dtype="<u8")),
    ]


def test_round_trip_bit_exact(tmp_path):
    path = tmp_path / "p.bin"
    meta = {"kind": "unit-test", "n": 5}
    write_payload(path, meta, _sample_arrays())
    meta_back, arrays = read_payload(path)
    assert meta_back == meta
    for name, arr in _sample_arrays():
        back = arrays[name]
        assert back.dtype == np.asarray(arr).dtype
        assert back.shape == np.shape(arr)
        assert np.array_equal(back, arr)


def test_zero_dim_array_stays_zero_dim(tmp_path):
    path = tmp_path / "p.bin"
    write_payload(path, {}, [("s", np.float32(1.25))])
    _, arrays = read_payload(path)
    assert arrays["s"].shape == ()
    assert arrays["s"] == np.float32(1.25)


def test_big_endian_input_round_trips(tmp_path):
    path = tmp_path / "p.bin"
    arr = np.array([1.0, 2.0, 3.0], dtype=">f8")
    write_payload(path, {}, [("x", arr)])
    _, arrays = read_payload(path)
    assert arrays["x"].dtype == np.dtype("<f8")
    assert np.array_equal(arrays["x"], arr.astype("<f8"))


def test_unsupported_dtype_rejected(tmp_path):
    with pytest.raises(PayloadError):
        write_payload(tmp_path / "p.bin", {},
                      [("x", np.zeros(3, dtype=np.float16))])


def test_truncated_payload_detected(tmp_path):
    path = tmp_path / "p.bin"
    write_payload(path, {}, _sample_arrays())
    raw = path.read_bytes()
    path.write_bytes(raw[:-3])
    with pytest.raises(PayloadError, match="truncated"):
        read_payload(path)


def test_trailing_bytes_detected(tmp_path):
    path = tmp_path / "p.bin"
    write_payload(path, {}, _sample_arrays())
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(PayloadError, match="trailing"):
        read_payload(path)


def test_missing_header_line(tmp_path):
    path = tmp_path / "p.bin"
    path.write_bytes(b"no newline here")
    with pytest.raises(PayloadError, match="header"):
        read_payload(path)


def test_garbage_header_json(tmp_path):
    path = tmp_path / "p.bin"
    path.write_bytes(b"{not json\n")
    with pytest.raises(PayloadError):
        read_payload(path)


def test_header_missing_keys(tmp_path):
    path = tmp_path / "p.bin"
    path.write_bytes(b'{"meta": {}}\n')
    with pytest.raises(PayloadError):
        read_payload(path)
