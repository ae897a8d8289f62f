import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from zscos.errors import FormatError
from zscos.io import (decode_checkpoint, decode_tensor, encode_checkpoint, encode_tensor, read_mask,
                      read_pgm, read_ppm, read_tensor, write_checkpoint, write_pgm, write_ppm,
                      write_tensor)


def test_tensor_2x3_f32_bit_exact(tmp_path):
    a = np.arange(6, dtype=np.float32).reshape(2, 3) / 7
    write_tensor(tmp_path / "a.mft", a)
    b = read_tensor(tmp_path / "a.mft")
    assert b.dtype == np.float32 and b.shape == (2, 3)
    assert a.tobytes() == b.tobytes()


def test_tensor_header_layout():
    raw = encode_tensor(np.zeros((2, 5), dtype=np.float64))
    assert raw[:4] == b"MFT1"
    assert struct.unpack("<BBH", raw[4:8]) == (1, 2, 0)
    assert struct.unpack("<2Q", raw[8:24]) == (2, 5)
    assert len(raw) == 24 + 80


@settings(max_examples=50, deadline=None)
@given(arrays(st.sampled_from([np.float32, np.float64]), array_shapes(min_dims=1, max_dims=4, max_side=5),
              elements=st.floats(-1e6, 1e6, width=32)))
def test_tensor_write_read_write_identical(a):
    raw = encode_tensor(a)
    assert encode_tensor(decode_tensor(raw)) == raw


@pytest.mark.parametrize("mutate,offset", [
    (lambda r: b"XXXX" + r[4:], 0),
    (lambda r: r[:4] + b"\x07" + r[5:], 4),
    (lambda r: r[:5] + b"\x00" + r[6:], 5),
    (lambda r: r[:-3], 24),
])
def test_tensor_errors_carry_offset(mutate, offset):
    raw = encode_tensor(np.ones((2, 2), dtype=np.float32))
    with pytest.raises(FormatError, match=f"offset {offset}"):
        decode_tensor(mutate(raw))


def test_tensor_trailing_bytes():
    with pytest.raises(FormatError, match="trailing"):
        decode_tensor(encode_tensor(np.ones(2)) + b"\x00")


def test_unsupported_dtype():
    with pytest.raises(FormatError):
        encode_tensor(np.ones(3, dtype=np.int32))


def test_checkpoint_round_trip_identical(tmp_path):
    rng = np.random.default_rng(0)
    entries = [("encoder.block0.attn.q.W", rng.standard_normal((4, 4)), False),
               ("decoder.out.b", rng.standard_normal(1).astype(np.float32), True),
               ("naïve.ünïcode", np.array([3.0]), True)]
    path = tmp_path / "m.ckpt"
    write_checkpoint(path, entries)
    first = path.read_bytes()
    back = decode_checkpoint(first)
    assert [(n, t) for n, _, t in back] == [(n, t) for n, _, t in entries]
    for (_, a, _), (_, b, _) in zip(entries, back):
        assert a.tobytes() == b.tobytes() and a.dtype == b.dtype
    assert encode_checkpoint(back) == first
    assert not (tmp_path / "m.ckpt.tmp").exists()


def test_checkpoint_rejects_duplicates_and_bad_magic():
    with pytest.raises(FormatError):
        encode_checkpoint([("a", np.ones(1), True), ("a", np.ones(1), True)])
    with pytest.raises(FormatError, match="magic"):
        decode_checkpoint(b"NOPE" + b"\x00" * 8)
    raw = encode_checkpoint([("a", np.ones(2), True)])
    with pytest.raises(FormatError, match="truncated"):
        decode_checkpoint(raw[:-1])


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2 ** 32 - 1))
def test_ppm_pgm_lossless_at_8_bits(tmp_path_factory, h, w, seed):
    d = tmp_path_factory.mktemp("img")
    rng = np.random.default_rng(seed)
    rgb = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
    write_ppm(d / "a.ppm", rgb)
    back = read_ppm(d / "a.ppm")
    np.testing.assert_array_equal(np.round(back * 255).astype(np.uint8), rgb)
    write_ppm(d / "b.ppm", back)
    assert (d / "a.ppm").read_bytes() == (d / "b.ppm").read_bytes()
    gray = rng.integers(0, 256, (h, w), dtype=np.uint8)
    write_pgm(d / "g.pgm", gray)
    np.testing.assert_array_equal(read_pgm(d / "g.pgm"), gray)


def test_pgm_float_input_and_mask(tmp_path):
    write_pgm(tmp_path / "m.pgm", np.array([[0.0, 0.4], [0.6, 1.0]]))
    np.testing.assert_array_equal(read_pgm(tmp_path / "m.pgm"), [[0, 102], [153, 255]])
    np.testing.assert_array_equal(read_mask(tmp_path / "m.pgm"), [[False, False], [True, True]])


def test_netpbm_header_with_comment(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
    np.testing.assert_array_equal(read_pgm(tmp_path / "c.pgm"), [[0, 255]])


@pytest.mark.parametrize("content", [b"P6\n2 2\n255\n\x00", b"P5\n2 2\n65535\n" + b"\x00" * 8, b"P3\n1 1\n255\n"])
def test_netpbm_errors(tmp_path, content):
    (tmp_path / "bad.ppm").write_bytes(content)
    with pytest.raises(FormatError):
        read_ppm(tmp_path / "bad.ppm") if content.startswith((b"P6", b"P3")) else read_pgm(tmp_path / "bad.ppm")
