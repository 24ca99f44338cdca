"""Binary checkpoint codec for named float32 parameter arrays.

Layout (all integers little endian):

    magic   5 bytes  b"WLRN1"
    version 1 byte   currently 1
    then per array, until EOF:
        u32 name length, name utf-8 bytes,
        u32 rank, u32 per dimension,
        float32 raw data, C order

Arrays are written in registry order so a file is byte-reproducible for a
given parameter set, and loaded back into an ordered name -> array mapping.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"WLRN1"
VERSION = 1


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    """Write named arrays; values are cast to float32."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<B", VERSION)
    for name, arr in arrays.items():
        # asarray keeps rank 0 intact (ascontiguousarray would promote to 1-d)
        arr = np.asarray(arr, dtype=np.float32)
        encoded = name.encode("utf-8")
        blob += struct.pack("<I", len(encoded))
        blob += encoded
        blob += struct.pack("<I", arr.ndim)
        for dim in arr.shape:
            blob += struct.pack("<I", dim)
        blob += arr.tobytes()
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(bytes(blob))
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    """Read a checkpoint back into an ordered name -> float32 array dict."""
    raw = Path(path).read_bytes()
    if len(raw) < 6 or raw[:5] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint file (bad magic)")
    if raw[5] != VERSION:
        raise ValueError(f"unsupported checkpoint version {raw[5]}")
    out: dict[str, np.ndarray] = {}
    pos = 6
    total = len(raw)

    def need(n: int, what: str):
        if pos + n > total:
            raise ValueError(f"truncated checkpoint: unexpected EOF in {what}")

    while pos < total:
        need(4, "name length")
        (name_len,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        need(name_len, "name")
        name = raw[pos:pos + name_len].decode("utf-8")
        pos += name_len
        need(4, "rank")
        (rank,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        need(4 * rank, "shape")
        shape = struct.unpack_from(f"<{rank}I", raw, pos) if rank else ()
        pos += 4 * rank
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        need(4 * count, f"data of {name!r}")
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=pos).reshape(shape)
        pos += 4 * count
        if name in out:
            raise ValueError(f"duplicate parameter {name!r} in checkpoint")
        out[name] = arr.copy()
    return out
