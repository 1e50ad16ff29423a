import json
import struct
import zipfile

import numpy as np
import pytest

from saminv.errors import LoadError
from saminv.samb import decode_array, encode_array, read_samb, write_samb


def test_round_trip_bit_exact(tmp_path, rng):
    arrays = {
        "a": rng.standard_normal((3, 5, 7)).astype(np.float32),
        "b/nested": rng.standard_normal(11).astype(np.float32),
        "scalarish": np.float32(rng.standard_normal((1,))),
    }
    meta = {"kind": "test", "note": "round trip"}
    path = tmp_path / "t.samb"
    write_samb(path, meta, arrays)
    meta2, arrays2 = read_samb(path)
    assert meta2 == meta
    assert set(arrays2) == set(arrays)
    for k in arrays:
        assert arrays2[k].dtype == np.float32
        assert np.array_equal(arrays2[k], np.asarray(arrays[k], np.float32))


def test_round_trip_nan_and_inf(tmp_path):
    a = np.array([np.nan, np.inf, -np.inf, -0.0, 1e-44], dtype=np.float32)
    path = tmp_path / "n.samb"
    write_samb(path, {"kind": "test"}, {"a": a})
    _, out = read_samb(path)
    # bit-level equality, not value equality (NaN != NaN)
    assert out["a"].tobytes() == a.tobytes()


def test_header_layout():
    arr = np.arange(6, dtype=np.float32).reshape(2, 3)
    blob = encode_array(arr)
    magic, version, dtype, rank, pad = struct.unpack("<4sBBBB", blob[:8])
    assert magic == b"SAMB"
    assert (version, dtype, rank, pad) == (1, 1, 2, 0)
    dims = struct.unpack("<2I", blob[16:24])
    assert dims == (2, 3)
    assert blob[24:] == arr.tobytes()
    assert len(blob) == 16 + 8 + arr.size * 4


def test_decode_rejects_bad_magic():
    arr = np.zeros(3, dtype=np.float32)
    blob = bytearray(encode_array(arr))
    blob[:4] = b"XXXX"
    with pytest.raises(LoadError):
        decode_array(bytes(blob))


def test_decode_rejects_truncated_payload():
    blob = encode_array(np.zeros(4, dtype=np.float32))
    with pytest.raises(LoadError):
        decode_array(blob[:-4])


def test_read_missing_file_names_it(tmp_path):
    with pytest.raises(LoadError, match="nope.samb"):
        read_samb(tmp_path / "nope.samb")


def test_read_rejects_non_zip(tmp_path):
    p = tmp_path / "junk.samb"
    p.write_bytes(b"this is not an archive")
    with pytest.raises(LoadError):
        read_samb(p)


def test_extra_json_entries(tmp_path):
    p = tmp_path / "x.samb"
    write_samb(p, {"kind": "test"}, {"a": np.zeros(2, np.float32)},
               extra_json={"side.json": {"k": [1, 2]}})
    with zipfile.ZipFile(p) as zf:
        side = json.loads(zf.read("side.json"))
    assert side == {"k": [1, 2]}


def test_write_is_atomic(tmp_path):
    p = tmp_path / "a.samb"
    write_samb(p, {"kind": "test"}, {"a": np.ones(4, np.float32)})
    before = p.read_bytes()
    with pytest.raises(Exception):
        # non-serializable meta fails before the rename, old file survives
        write_samb(p, {"kind": object()}, {"a": np.zeros(4, np.float32)})
    assert p.read_bytes() == before
