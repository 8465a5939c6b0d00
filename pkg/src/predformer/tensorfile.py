"""``.pfts`` binary tensor files.

Layout (little-endian, no padding)::

    b"PFTS" | u16 version | u8 dtype (0=f32, 1=f64) | u8 ndim | ndim x u32 dims | payload
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .tensor import Tensor

MAGIC = b"PFTS"
VERSION = 1
EXTENSION = ".pfts"
_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_HEAD = struct.Struct("<4sHBB")


class TensorFileError(ValueError):
    code = 1


class BadMagicError(TensorFileError):
    code = 2


class TruncatedError(TensorFileError):
    code = 3


class VersionMismatchError(TensorFileError):
    code = 4


class InvalidDimsError(TensorFileError):
    code = 5


class UnsupportedDtypeError(TensorFileError):
    code = 6


def _code_of(dtype) -> int:
    dt = np.dtype(dtype)
    for code, d in _CODES.items():
        if d == dt.newbyteorder("<"):
            return code
    raise UnsupportedDtypeError(f"only float32/float64 can be stored, got {dt}")


def encode(arr) -> bytes:
    a = arr.data if isinstance(arr, Tensor) else np.asarray(arr)
    code = _code_of(a.dtype)
    if a.ndim < 1 or a.ndim > 255:
        raise InvalidDimsError(f"ndim must be in [1, 255], got {a.ndim}")
    if any(d < 1 or d >= 2**32 for d in a.shape):
        raise InvalidDimsError(f"every axis must be in [1, 2^32), got {a.shape}")
    head = _HEAD.pack(MAGIC, VERSION, code, a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    return head + np.ascontiguousarray(a, dtype=_CODES[code]).tobytes()


def decode(buf: bytes | memoryview, offset: int = 0) -> tuple[np.ndarray, int]:
    """Parse one tensor starting at ``offset``; returns ``(array, end_offset)``."""
    buf = memoryview(buf)
    if len(buf) - offset < _HEAD.size:
        raise TruncatedError("header is truncated")
    magic, version, code, ndim = _HEAD.unpack_from(buf, offset)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {bytes(magic)!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionMismatchError(f"file version {version}, reader supports {VERSION}")
    if code not in _CODES:
        raise UnsupportedDtypeError(f"unknown dtype code {code}")
    pos = offset + _HEAD.size
    if len(buf) - pos < 4 * ndim:
        raise TruncatedError("dims are truncated")
    dims = struct.unpack_from(f"<{ndim}I", buf, pos)
    if ndim < 1 or any(d < 1 for d in dims):
        raise InvalidDimsError(f"invalid dims {dims}")
    pos += 4 * ndim
    dt = _CODES[code]
    nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
    if len(buf) - pos < nbytes:
        raise TruncatedError(f"payload is truncated: need {nbytes} bytes, have {len(buf) - pos}")
    arr = np.frombuffer(buf[pos:pos + nbytes], dtype=dt).reshape(dims)
    return arr.astype(dt.newbyteorder("="), copy=True), pos + nbytes


def save_tensor(path, t) -> None:
    data = encode(t)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load_tensor(path) -> Tensor:
    with open(path, "rb") as fh:
        buf = fh.read()
    arr, end = decode(buf)
    if end != len(buf):
        raise TensorFileError(f"{len(buf) - end} trailing bytes after payload")
    return Tensor(arr)
