"""Binary tensor container, checkpoint container, and binary netpbm (P6/P5) images.

All integers are little-endian.

Tensor container ("MFT1"):
    magic[4] | dtype u8 (0=f32, 1=f64) | rank u8 | reserved u16 = 0
    | extents u64 x rank | payload (row-major IEEE-754)

Checkpoint ("MFC1"):
    magic[4] | count u32 | count x (name_len u16 | utf-8 name | trainable u8 | tensor container)
"""
from __future__ import annotations

import os
import struct
from typing import BinaryIO, Iterable

import numpy as np

from .errors import FormatError

TENSOR_MAGIC = b"MFT1"
CKPT_MAGIC = b"MFC1"
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class _Reader:
    def __init__(self, buf: bytes, source: str):
        self.buf = buf
        self.pos = 0
        self.source = source

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"{self.source}: truncated {what} at byte offset {self.pos}: "
                              f"need {n} bytes, {len(self.buf) - self.pos} available")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out


def encode_tensor(array: np.ndarray) -> bytes:
    arr = np.asarray(array)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    code = _CODES.get(arr.dtype)
    if code is None:
        raise FormatError(f"unsupported dtype {arr.dtype}; use float32 or float64")
    if arr.ndim > 255 or 0 in arr.shape:
        raise FormatError(f"cannot store shape {arr.shape}")
    header = TENSOR_MAGIC + struct.pack("<BBH", code, arr.ndim, 0)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()


def _decode_tensor(r: _Reader) -> np.ndarray:
    start = r.pos
    magic = r.take(4, "magic")
    if magic != TENSOR_MAGIC:
        raise FormatError(f"{r.source}: bad tensor magic {magic!r} at byte offset {start}")
    code, rank, reserved = struct.unpack("<BBH", r.take(4, "header"))
    if code not in _DTYPES:
        raise FormatError(f"{r.source}: unknown dtype code {code} at byte offset {start + 4}")
    if rank == 0:
        raise FormatError(f"{r.source}: rank 0 is not allowed (byte offset {start + 5})")
    if reserved != 0:
        raise FormatError(f"{r.source}: reserved bytes must be zero (byte offset {start + 6})")
    shape = struct.unpack(f"<{rank}Q", r.take(8 * rank, "extents"))
    if 0 in shape:
        raise FormatError(f"{r.source}: zero extent in shape {shape}")
    dt = _DTYPES[code]
    count = int(np.prod(shape))
    payload = r.take(count * dt.itemsize, "payload")
    return np.frombuffer(payload, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))


def decode_tensor(buf: bytes, source: str = "<bytes>") -> np.ndarray:
    r = _Reader(buf, source)
    arr = _decode_tensor(r)
    if r.pos != len(buf):
        raise FormatError(f"{source}: {len(buf) - r.pos} trailing bytes after offset {r.pos}")
    return arr


def write_tensor(path, array: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_tensor(array))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_tensor(fh.read(), str(path))


# -- checkpoints ----------------------------------------------------------
def encode_checkpoint(entries: Iterable[tuple]) -> bytes:
    """entries: (name, array, trainable) triples, written in the given order."""
    entries = list(entries)
    names = [e[0] for e in entries]
    if len(set(names)) != len(names):
        raise FormatError("checkpoint names must be unique")
    out = [CKPT_MAGIC, struct.pack("<I", len(entries))]
    for name, array, trainable in entries:
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise FormatError(f"parameter name too long: {name[:40]}...")
        out += [struct.pack("<H", len(raw)), raw, struct.pack("<B", 1 if trainable else 0),
                encode_tensor(array)]
    return b"".join(out)


def decode_checkpoint(buf: bytes, source: str = "<bytes>") -> list:
    r = _Reader(buf, source)
    magic = r.take(4, "magic")
    if magic != CKPT_MAGIC:
        raise FormatError(f"{source}: bad checkpoint magic {magic!r} at byte offset 0")
    (count,) = struct.unpack("<I", r.take(4, "entry count"))
    entries, seen = [], set()
    for _ in range(count):
        (n,) = struct.unpack("<H", r.take(2, "name length"))
        at = r.pos
        try:
            name = r.take(n, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"{source}: invalid UTF-8 name at byte offset {at}") from None
        if name in seen:
            raise FormatError(f"{source}: duplicate entry {name!r} at byte offset {at}")
        seen.add(name)
        flag_at = r.pos
        (flag,) = struct.unpack("<B", r.take(1, "trainable flag"))
        if flag > 1:
            raise FormatError(f"{source}: trainable flag must be 0/1 at byte offset {flag_at}")
        entries.append((name, _decode_tensor(r), bool(flag)))
    if r.pos != len(buf):
        raise FormatError(f"{source}: {len(buf) - r.pos} trailing bytes after offset {r.pos}")
    return entries


def write_checkpoint(path, entries) -> None:
    data = encode_checkpoint(entries)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def read_checkpoint(path) -> list:
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read(), str(path))


# -- netpbm ---------------------------------------------------------------
def _read_header(fh: BinaryIO, source: str, magic: bytes):
    def token():
        out = b""
        while True:
            ch = fh.read(1)
            if not ch:
                if out:
                    return out
                raise FormatError(f"{source}: truncated netpbm header")
            if ch == b"#":
                fh.readline()
                if out:
                    return out
                continue
            if ch.isspace():
                if out:
                    return out
                continue
            out += ch

    got = fh.read(2)
    if got != magic:
        raise FormatError(f"{source}: expected {magic.decode()} header, got {got!r}")
    try:
        width, height, maxval = int(token()), int(token()), int(token())
    except ValueError:
        raise FormatError(f"{source}: malformed netpbm header") from None
    if width <= 0 or height <= 0 or maxval != 255:
        raise FormatError(f"{source}: need positive size and maxval 255, got "
                          f"{width}x{height} maxval {maxval}")
    return width, height


def _read_payload(fh, n, source):
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"{source}: truncated payload, need {n} bytes, got {len(data)}")
    return np.frombuffer(data, dtype=np.uint8)


def read_ppm(path) -> np.ndarray:
    """Binary P6 -> float64 (H, W, 3) in [0, 1]."""
    with open(path, "rb") as fh:
        w, h = _read_header(fh, str(path), b"P6")
        px = _read_payload(fh, w * h * 3, str(path))
    return px.reshape(h, w, 3) / 255.0


def write_ppm(path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise FormatError(f"PPM needs (H, W, 3), got {img.shape}")
    px = img if img.dtype == np.uint8 else np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(px.tobytes())


def read_pgm(path) -> np.ndarray:
    """Binary P5 -> uint8 (H, W)."""
    with open(path, "rb") as fh:
        w, h = _read_header(fh, str(path), b"P5")
        px = _read_payload(fh, w * h, str(path))
    return px.reshape(h, w).copy()


def write_pgm(path, gray: np.ndarray) -> None:
    """uint8 (H, W) or floats in [0, 1] (scaled by 255 and rounded)."""
    g = np.asarray(gray)
    if g.ndim != 2:
        raise FormatError(f"PGM needs (H, W), got {g.shape}")
    px = g if g.dtype == np.uint8 else np.round(np.clip(g, 0, 1) * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{g.shape[1]} {g.shape[0]}\n255\n".encode("ascii"))
        fh.write(px.tobytes())


def read_mask(path) -> np.ndarray:
    return read_pgm(path) > 127
