"""EFCK binary checkpoint files: named float64 arrays.

Layout (all integers little-endian)::

    b"EFCK" | version u16 | count u32 |
    count x ( name_len u16 | name utf-8 | rank u8 | dims u32 x rank | payload f64 x prod(dims) )
"""

from __future__ import annotations

import os
import struct
from typing import Mapping

import numpy as np

MAGIC = b"EFCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(entries: Mapping[str, np.ndarray]) -> bytes:
    """Serialise ``entries`` sorted by name, so equal contents give equal bytes."""
    parts = [MAGIC, struct.pack("<HI", VERSION, len(entries))]
    for name in sorted(entries):
        # np.ascontiguousarray would promote 0-d arrays to 1-d
        arr = np.array(entries[name], dtype="<f8", order="C")
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise CheckpointError(f"entry name too long: {name[:40]}...")
        if arr.ndim > 0xFF:
            raise CheckpointError(f"entry {name!r} has too many dimensions")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> dict[str, np.ndarray]:
    if buf[:4] != MAGIC:
        raise CheckpointError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    try:
        version, count = struct.unpack_from("<HI", buf, 4)
    except struct.error as exc:
        raise CheckpointError("truncated header") from exc
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 10
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            n = int(np.prod(dims, dtype=np.int64))
            if pos + 8 * n > len(buf):
                raise CheckpointError(f"payload of {name!r} truncated")
            out[name] = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).reshape(dims).astype(
                np.float64
            )
            pos += 8 * n
    except struct.error as exc:
        raise CheckpointError("truncated entry table") from exc
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes after last entry")
    return out


def save(path: str | os.PathLike, entries: Mapping[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(entries))


def load(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return loads(fh.read())
