"""Binary tensor container shared by checkpoints and codebook files.

Layout (all integers unsigned 64-bit little-endian)::

    b"LADCKPT1" | n_entries | per entry:
        name_len | utf-8 name | rank | extent * rank | float64-le * prod(extents)
"""

from __future__ import annotations

import hashlib
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

MAGIC = b"LADCKPT1"


class CheckpointFormatError(ValueError):
    pass


def dumps(entries: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<Q", len(entries))]
    for name, arr in entries.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f8")
        parts.append(struct.pack("<Q", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<Q", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def loads(blob: bytes) -> OrderedDict[str, np.ndarray]:
    if blob[:8] != MAGIC:
        raise CheckpointFormatError(f"bad magic {blob[:8]!r}; expected {MAGIC!r}")
    pos = 8

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise CheckpointFormatError("truncated tensor container")
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<Q", take(8))
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    for _ in range(count):
        (nlen,) = struct.unpack("<Q", take(8))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<Q", take(8))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank)) if rank else ()
        size = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
        out[name] = arr
    if pos != len(blob):
        raise CheckpointFormatError("trailing bytes after last entry")
    return out


def save(path: str | Path, entries: dict[str, np.ndarray]) -> str:
    """Write ``entries`` and return the sha256 digest of the file."""
    blob = dumps(entries)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load(path: str | Path) -> OrderedDict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
