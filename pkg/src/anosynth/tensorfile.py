"""Bit-exact file formats.

TensorFile (single tensor):
    magic   4 bytes  b"AFT1"
    rank    uint32 little-endian
    dims    rank * uint32 little-endian
    payload prod(dims) * float32 little-endian, row-major

Bundle (named tensors, e.g. model parameters):
    magic   4 bytes  b"AFB1"
    kind    uint32 length + that many UTF-8 bytes (names the payload type)
    count   uint32
    entries count * (uint32 name length, name bytes, TensorFile record)

Masks travel as binary 8-bit PGM ("P5") or as TensorFiles; in both cases a
pixel counts as foreground iff its value is strictly greater than 127.
"""
import struct

import numpy as np

MAGIC_TENSOR = b"AFT1"
MAGIC_BUNDLE = b"AFB1"


class TensorFormatError(ValueError):
    """Malformed tensor/bundle/PGM file."""


def _encode_tensor(x) -> bytes:
    x = np.asarray(x, dtype="<f4")
    if not x.flags["C_CONTIGUOUS"]:  # ascontiguousarray would promote 0-d to 1-d
        x = np.ascontiguousarray(x)
    head = MAGIC_TENSOR + struct.pack("<I", x.ndim)
    head += struct.pack(f"<{x.ndim}I", *x.shape)
    return head + x.tobytes()


def _decode_tensor(buf: bytes, off: int = 0):
    if buf[off:off + 4] != MAGIC_TENSOR:
        raise TensorFormatError(f"bad tensor magic {buf[off:off + 4]!r}")
    off += 4
    (rank,) = struct.unpack_from("<I", buf, off)
    off += 4
    dims = struct.unpack_from(f"<{rank}I", buf, off)
    off += 4 * rank
    n = int(np.prod(dims, dtype=np.int64)) if rank else 1
    end = off + 4 * n
    if end > len(buf):
        raise TensorFormatError(
            f"truncated payload: need {4 * n} bytes, have {len(buf) - off}")
    x = np.frombuffer(buf[off:end], dtype="<f4").reshape(dims)
    return x.copy(), end


def save_tensor(path, x):
    with open(path, "wb") as f:
        f.write(_encode_tensor(x))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        buf = f.read()
    x, end = _decode_tensor(buf)
    if end != len(buf):
        raise TensorFormatError(f"{len(buf) - end} trailing bytes after payload")
    return x


def save_bundle(path, kind: str, tensors: dict):
    kb = kind.encode("utf-8")
    out = [MAGIC_BUNDLE, struct.pack("<I", len(kb)), kb,
           struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        nb = name.encode("utf-8")
        out += [struct.pack("<I", len(nb)), nb, _encode_tensor(arr)]
    with open(path, "wb") as f:
        f.write(b"".join(out))


def load_bundle(path):
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:4] != MAGIC_BUNDLE:
        raise TensorFormatError(f"bad bundle magic {buf[:4]!r}")
    off = 4
    (klen,) = struct.unpack_from("<I", buf, off)
    off += 4
    kind = buf[off:off + klen].decode("utf-8")
    off += klen
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", buf, off)
        off += 4
        name = buf[off:off + nlen].decode("utf-8")
        off += nlen
        tensors[name], off = _decode_tensor(buf, off)
    if off != len(buf):
        raise TensorFormatError(f"{len(buf) - off} trailing bytes in bundle")
    return kind, tensors


def _read_pgm(buf: bytes):
    # P5, then three whitespace/comment-separated ints, one whitespace, raster
    if buf[:2] != b"P5":
        raise TensorFormatError(f"not a binary PGM: magic {buf[:2]!r}")
    pos = 2
    vals = []
    while len(vals) < 3:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        try:
            vals.append(int(buf[start:pos]))
        except ValueError:
            raise TensorFormatError(f"bad PGM header token {buf[start:pos]!r}")
    pos += 1  # single whitespace after maxval
    w, h, maxval = vals
    if not (0 < maxval <= 255):
        raise TensorFormatError(f"unsupported PGM depth maxval={maxval}")
    need = w * h
    raster = buf[pos:pos + need]
    if len(raster) != need:
        raise TensorFormatError(f"PGM raster truncated: need {need}, have {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w)


def load_mask(path) -> np.ndarray:
    """Binary H x W mask from a PGM or TensorFile; value > 127 is foreground."""
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:2] == b"P5":
        vals = _read_pgm(buf)
    elif buf[:4] == MAGIC_TENSOR:
        vals, end = _decode_tensor(buf)
        if end != len(buf):
            raise TensorFormatError("trailing bytes after mask tensor")
        if vals.ndim != 2:
            raise TensorFormatError(f"mask tensor must be 2-D, got shape {vals.shape}")
    else:
        raise TensorFormatError(f"unrecognized mask format, magic {buf[:4]!r}")
    return (vals > 127).astype(np.uint8)


def save_mask(path, M):
    """Write a binary mask as an 8-bit PGM (0 / 255)."""
    M = np.asarray(M)
    if M.ndim != 2:
        raise TensorFormatError(f"mask must be 2-D, got shape {M.shape}")
    h, w = M.shape
    raster = np.where(M > 0, 255, 0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(raster.tobytes())
