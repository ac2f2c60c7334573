"""Raw float32 field files and PGM previews.

Raw field layout: magic "PATK", version u32, ndim u32, dims u32 x ndim, then
float32 payload, everything little-endian, payload in C (row-major) order.
"""

import struct
from pathlib import Path

import numpy as np

from ..errors import DataFormatError

MAGIC = b"PATK"
VERSION = 1
_MAX_NDIM = 8


def write_raw_field(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.ndim < 1 or arr.ndim > _MAX_NDIM:
        raise DataFormatError(f"unsupported ndim {arr.ndim}")
    payload = np.ascontiguousarray(arr, dtype="<f4")
    header = MAGIC + struct.pack("<II", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + payload.tobytes())


def read_raw_field(path) -> np.ndarray:
    """Read a raw field file back as a float32 array."""
    buf = Path(path).read_bytes()
    if len(buf) < 12:
        raise DataFormatError("truncated raw field file (no header)")
    if buf[:4] != MAGIC:
        raise DataFormatError(f"bad magic {buf[:4]!r}")
    version, ndim = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise DataFormatError(f"unsupported version {version}")
    if not 1 <= ndim <= _MAX_NDIM:
        raise DataFormatError(f"bad ndim {ndim}")
    if len(buf) < 12 + 4 * ndim:
        raise DataFormatError("truncated raw field file (incomplete dims)")
    dims = struct.unpack_from(f"<{ndim}I", buf, 12)
    want = 4 * int(np.prod(dims))
    payload = buf[12 + 4 * ndim :]
    if len(payload) != want:
        raise DataFormatError(f"payload length {len(payload)} != expected {want}")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


def write_pgm(path, arr: np.ndarray) -> None:
    """8-bit binary P5 preview, min-max normalized; axis 1 is drawn upward."""
    a = np.asarray(arr, dtype=float)
    if a.ndim != 2:
        raise DataFormatError("pgm preview needs a 2-D array")
    lo = float(a.min())
    hi = float(a.max())
    if hi > lo:
        q = np.round((a - lo) * (255.0 / (hi - lo))).astype(np.uint8)
    else:
        q = np.zeros(a.shape, dtype=np.uint8)
    img = q.T[::-1]  # rows run top to bottom, so flip the y axis
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.tobytes())
