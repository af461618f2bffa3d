"""Byte formats for ciphertexts and raw ring-element arrays.

Ciphertext: a fixed 28-byte little-endian header (magic ``CKKS``, format
version, ring dimension, level, scale, noise estimate) followed by the
``c0`` then ``c1`` limbs as int64, so a ciphertext at level ``l`` takes
``28 + 2*(l+1)*N*8`` bytes.

Ring arrays (key shares, decryption shares): magic ``RARR``, version,
number of axes, the shape as uint32 values, then int64 data.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import InputError
from .scheme import Ciphertext

CT_MAGIC = b"CKKS"
ARR_MAGIC = b"RARR"
VERSION = 1

_CT_HEADER = struct.Struct("<4sHIHdd")
_ARR_HEADER = struct.Struct("<4sHB")

CT_HEADER_BYTES = _CT_HEADER.size


def ciphertext_size(level: int, ring_dim: int) -> int:
    return CT_HEADER_BYTES + 2 * (level + 1) * ring_dim * 8


def ciphertext_to_bytes(ct: Ciphertext) -> bytes:
    n = ct.c0.shape[1]
    header = _CT_HEADER.pack(CT_MAGIC, VERSION, n, ct.level, ct.scale, ct.noise)
    body = np.concatenate([ct.c0, ct.c1]).astype("<i8", copy=False).tobytes()
    return header + body


def ciphertext_from_bytes(data: bytes) -> Ciphertext:
    if len(data) < CT_HEADER_BYTES:
        raise InputError("truncated ciphertext header")
    magic, version, n, level, scale, noise = _CT_HEADER.unpack_from(data)
    if magic != CT_MAGIC or version != VERSION:
        raise InputError(f"not a version-{VERSION} ciphertext")
    if len(data) != ciphertext_size(level, n):
        raise InputError("ciphertext length does not match header")
    body = np.frombuffer(data, dtype="<i8", offset=CT_HEADER_BYTES).astype(np.int64)
    body = body.reshape(2, level + 1, n)
    return Ciphertext(body[0].copy(), body[1].copy(), level, scale, noise)


def array_size(shape) -> int:
    return _ARR_HEADER.size + 4 * len(shape) + int(np.prod(shape)) * 8


def array_to_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype=np.int64)
    header = _ARR_HEADER.pack(ARR_MAGIC, VERSION, arr.ndim)
    shape = struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + shape + arr.astype("<i8", copy=False).tobytes()


def array_from_bytes(data: bytes) -> np.ndarray:
    if len(data) < _ARR_HEADER.size:
        raise InputError("truncated array header")
    magic, version, ndim = _ARR_HEADER.unpack_from(data)
    if magic != ARR_MAGIC or version != VERSION:
        raise InputError(f"not a version-{VERSION} ring array")
    shape = struct.unpack_from(f"<{ndim}I", data, _ARR_HEADER.size)
    if len(data) != array_size(shape):
        raise InputError("array length does not match header")
    offset = _ARR_HEADER.size + 4 * ndim
    return np.frombuffer(data, dtype="<i8", offset=offset).astype(np.int64).reshape(shape)
