"""Sample container files: round trips, invariant validation, and the
error taxonomy for damaged files."""

import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satsr.container import (CONTAINER_EXT, FORMAT_NAME, FORMAT_VERSION,
                             MalformedHeaderError, SamplePair,
                             SchemaMismatchError, TruncatedPayloadError,
                             read_sample, write_sample)
from satsr.synth import SynthConfig, synth_scene


def _tiny(seed=0, lr_size=4):
    return synth_scene(seed, SynthConfig(lr_size=lr_size))


def _assert_equal(a: SamplePair, b: SamplePair):
    assert a.sample_id == b.sample_id
    assert a.month == b.month
    assert a.acquisition_gap_days == b.acquisition_gap_days
    for name in ("lr", "hr", "dem", "landcover", "sar"):
        x, y = getattr(a, name), getattr(b, name)
        assert x.dtype == y.dtype, name
        assert np.array_equal(x, y), name


def test_round_trip_bit_exact(tmp_path):
    sample = _tiny(11)
    path = tmp_path / f"s{CONTAINER_EXT}"
    write_sample(path, sample)
    _assert_equal(read_sample(path), sample)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), lr_size=st.sampled_from([2, 3, 4, 8]))
def test_round_trip_any_seed_and_size(tmp_path_factory, seed, lr_size):
    sample = _tiny(seed, lr_size)
    path = tmp_path_factory.mktemp("rt") / f"s{CONTAINER_EXT}"
    write_sample(path, sample)
    _assert_equal(read_sample(path), sample)


def test_write_is_deterministic(tmp_path):
    sample = _tiny(5)
    p1, p2 = tmp_path / "a.lssr", tmp_path / "b.lssr"
    write_sample(p1, sample)
    write_sample(p2, sample)
    assert p1.read_bytes() == p2.read_bytes()


# -- invariant validation ------------------------------------------------


def test_validate_accepts_generated_sample():
    _tiny(3).validate()


@pytest.mark.parametrize("mutate,phrase", [
    (lambda s: dataclasses.replace(s, sample_id=""), "sample_id"),
    (lambda s: dataclasses.replace(s, hr=s.hr[:-1]), "hr"),
    (lambda s: dataclasses.replace(s, lr=s.lr.astype(np.float64)), "float"),
    (lambda s: dataclasses.replace(s, lr=s.lr + np.float32(2.0)), "reflectance"),
    (lambda s: dataclasses.replace(s, hr=np.full_like(s.hr, np.nan)), "finite"),
    (lambda s: dataclasses.replace(
        s, landcover=np.full_like(s.landcover, 9)), "landcover"),
    (lambda s: dataclasses.replace(
        s, landcover=s.landcover.astype(np.int64)), "uint8"),
    (lambda s: dataclasses.replace(s, sar=s.sar + np.float32(100.0)), "sar"),
    (lambda s: dataclasses.replace(s, dem=s.dem[:-1]), "dem"),
    (lambda s: dataclasses.replace(s, month=13), "month"),
    (lambda s: dataclasses.replace(s, month=0), "month"),
    (lambda s: dataclasses.replace(s, acquisition_gap_days=8), "gap"),
])
def test_validate_rejects_bad_samples(mutate, phrase):
    with pytest.raises(ValueError, match=phrase):
        mutate(_tiny(1)).validate()


def test_write_refuses_invalid_sample(tmp_path):
    bad = dataclasses.replace(_tiny(1), month=0)
    with pytest.raises(ValueError):
        write_sample(tmp_path / "x.lssr", bad)


# -- read error taxonomy -------------------------------------------------


def _written(tmp_path):
    path = tmp_path / f"s{CONTAINER_EXT}"
    write_sample(path, _tiny(2))
    return path


def _header_and_body(path):
    raw = path.read_bytes()
    nl = raw.find(b"\n")
    return json.loads(raw[:nl].decode()), raw[nl + 1:]


def _rewrite(path, header, body):
    path.write_bytes(json.dumps(header, separators=(",", ":")).encode()
                     + b"\n" + body)


def test_no_newline_is_malformed(tmp_path):
    path = _written(tmp_path)
    path.write_bytes(b"just bytes, no header")
    with pytest.raises(MalformedHeaderError):
        read_sample(path)


def test_invalid_json_is_malformed(tmp_path):
    path = _written(tmp_path)
    body = _header_and_body(path)[1]
    path.write_bytes(b"{broken\n" + body)
    with pytest.raises(MalformedHeaderError):
        read_sample(path)


def test_non_object_header_is_malformed(tmp_path):
    path = _written(tmp_path)
    body = _header_and_body(path)[1]
    path.write_bytes(b"[1,2]\n" + body)
    with pytest.raises(MalformedHeaderError):
        read_sample(path)


def test_missing_field_is_malformed(tmp_path):
    path = _written(tmp_path)
    header, body = _header_and_body(path)
    del header["month"]
    _rewrite(path, header, body)
    with pytest.raises(MalformedHeaderError, match="month"):
        read_sample(path)


def test_wrong_format_name_is_schema_mismatch(tmp_path):
    path = _written(tmp_path)
    header, body = _header_and_body(path)
    header["format"] = "something-else"
    _rewrite(path, header, body)
    with pytest.raises(SchemaMismatchError):
        read_sample(path)


def test_wrong_version_is_schema_mismatch(tmp_path):
    path = _written(tmp_path)
    header, body = _header_and_body(path)
    header["version"] = FORMAT_VERSION + 1
    _rewrite(path, header, body)
    with pytest.raises(SchemaMismatchError):
        read_sample(path)


def test_wrong_array_count_is_schema_mismatch(tmp_path):
    path = _written(tmp_path)
    header, body = _header_and_body(path)
    header["arrays"] = header["arrays"][:-1]
    _rewrite(path, header, body)
    with pytest.raises(SchemaMismatchError):
        read_sample(path)


def test_wrong_dtype_is_schema_mismatch(tmp_path):
    path = _written(tmp_path)
    header, body = _header_and_body(path)
    header["arrays"][0]["dtype"] = "<u1"
    _rewrite(path, header, body)
    with pytest.raises(SchemaMismatchError):
        read_sample(path)


def test_inconsistent_shape_is_schema_mismatch(tmp_path):
    path = _written(tmp_path)
    header, body = _header_and_body(path)
    # hr shape no longer matches 3x the declared lr grid
    header["arrays"][1]["shape"][0] += 3
    _rewrite(path, header, body)
    with pytest.raises(SchemaMismatchError):
        read_sample(path)


def test_truncated_body(tmp_path):
    path = _written(tmp_path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-10])
    with pytest.raises(TruncatedPayloadError):
        read_sample(path)


def test_trailing_bytes_is_schema_mismatch(tmp_path):
    path = _written(tmp_path)
    path.write_bytes(path.read_bytes() + b"\x00\x00")
    with pytest.raises(SchemaMismatchError, match="trailing"):
        read_sample(path)


def test_header_declares_format(tmp_path):
    path = _written(tmp_path)
    header, _ = _header_and_body(path)
    assert header["format"] == FORMAT_NAME
    assert header["version"] == FORMAT_VERSION
    assert header["byte_order"] == "little"
