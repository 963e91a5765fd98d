"""Binary serialization for speaker models.

Two little-endian formats, each with a 4-byte magic:

  UBM1: magic, uint32 K, uint32 D, then float64 weights (K), means (K*D,
        row-major), variances (K*D, row-major).
  TMAT1: magic, uint32 K, uint32 D, uint32 R, then float64 loadings
        (K*D*R, row-major).

Truncated payloads, trailing bytes, and unknown magics raise
DataFormatError so callers can distinguish corrupt model files from
genuine I/O failures.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import DataFormatError
from .total_variability import TMatrix
from .ubm import Ubm

UBM_MAGIC = b"UBM1"
TMAT_MAGIC = b"TMAT"

_UBM_HEADER = struct.Struct("<II")
_TMAT_HEADER = struct.Struct("<III")


def write_ubm(path: str | Path, ubm: Ubm) -> None:
    k, d = ubm.means.shape
    blob = bytearray()
    blob += UBM_MAGIC
    blob += _UBM_HEADER.pack(k, d)
    blob += np.ascontiguousarray(ubm.weights, dtype="<f8").tobytes()
    blob += np.ascontiguousarray(ubm.means, dtype="<f8").tobytes()
    blob += np.ascontiguousarray(ubm.variances, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


def read_ubm(path: str | Path) -> Ubm:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != UBM_MAGIC:
        raise DataFormatError(f"{path}: not a UBM1 file")
    off = 4
    if len(raw) < off + _UBM_HEADER.size:
        raise DataFormatError(f"{path}: truncated UBM1 header")
    k, d = _UBM_HEADER.unpack_from(raw, off)
    off += _UBM_HEADER.size
    if k < 1 or d < 1:
        raise DataFormatError(f"{path}: bad UBM1 dimensions K={k} D={d}")
    expect = 8 * (k + 2 * k * d)
    if len(raw) - off != expect:
        raise DataFormatError(
            f"{path}: UBM1 payload is {len(raw) - off} bytes, expected {expect}")
    weights = np.frombuffer(raw, dtype="<f8", count=k, offset=off).copy()
    off += 8 * k
    means = np.frombuffer(raw, dtype="<f8", count=k * d, offset=off).reshape(k, d).copy()
    off += 8 * k * d
    variances = np.frombuffer(raw, dtype="<f8", count=k * d, offset=off).reshape(k, d).copy()
    return Ubm(weights=weights, means=means, variances=variances)


def write_tmatrix(path: str | Path, tmat: TMatrix) -> None:
    k, d, r = tmat.t.shape
    blob = bytearray()
    blob += TMAT_MAGIC
    blob += _TMAT_HEADER.pack(k, d, r)
    blob += np.ascontiguousarray(tmat.t, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


def read_tmatrix(path: str | Path) -> TMatrix:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != TMAT_MAGIC:
        raise DataFormatError(f"{path}: not a TMAT file")
    off = 4
    if len(raw) < off + _TMAT_HEADER.size:
        raise DataFormatError(f"{path}: truncated TMAT header")
    k, d, r = _TMAT_HEADER.unpack_from(raw, off)
    off += _TMAT_HEADER.size
    if k < 1 or d < 1 or r < 1:
        raise DataFormatError(f"{path}: bad TMAT dimensions K={k} D={d} R={r}")
    expect = 8 * k * d * r
    if len(raw) - off != expect:
        raise DataFormatError(
            f"{path}: TMAT payload is {len(raw) - off} bytes, expected {expect}")
    t = np.frombuffer(raw, dtype="<f8", count=k * d * r, offset=off).reshape(k, d, r).copy()
    return TMatrix(t)
