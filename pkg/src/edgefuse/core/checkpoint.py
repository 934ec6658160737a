"""TGVM checkpoint format (little-endian).

    magic    b"TGVM"
    version  u32 (= 1)
    repeated until EOF:
        name_len u32, name utf-8 bytes, ndim u32, dims u32[ndim],
        float32 payload (prod(dims) values)
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"TGVM"
VERSION = 1
HEADER = struct.Struct("<4sI")


class CheckpointError(ValueError):
    pass


def save_checkpoint(tensors: dict[str, np.ndarray]) -> bytes:
    parts = [HEADER.pack(MAGIC, VERSION)]
    for name, arr in tensors.items():
        if not name:
            raise CheckpointError("tensor names must be non-empty")
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        if arr.dtype != np.float32:
            arr = arr.astype(np.float32)
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def load_checkpoint(buf: bytes) -> dict[str, np.ndarray]:
    if len(buf) < HEADER.size:
        raise CheckpointError("corrupt checkpoint: truncated header")
    magic, version = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise CheckpointError(f"corrupt checkpoint: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = HEADER.size
    out: dict[str, np.ndarray] = {}
    n = len(buf)
    while off < n:
        name = f"<entry {len(out)}>"
        try:
            (nlen,) = struct.unpack_from("<I", buf, off)
            off += 4
            if off + nlen > n:
                raise struct.error("name")
            name = buf[off:off + nlen].decode("utf-8")
            off += nlen
            (ndim,) = struct.unpack_from("<I", buf, off)
            off += 4
            dims = struct.unpack_from(f"<{ndim}I", buf, off)
            off += 4 * ndim
        except (struct.error, UnicodeDecodeError) as exc:
            raise CheckpointError(f"corrupt checkpoint: truncated record for tensor {name!r}") from exc
        count = int(np.prod(dims, dtype=np.int64))
        end = off + 4 * count
        if end > n:
            raise CheckpointError(f"corrupt checkpoint: truncated payload for tensor {name!r}")
        if name in out:
            raise CheckpointError(f"corrupt checkpoint: duplicate tensor {name!r}")
        out[name] = np.frombuffer(buf, dtype="<f4", count=count, offset=off).reshape(dims).astype(np.float32)
        off = end
    return out


def write_checkpoint(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(save_checkpoint(tensors))


def read_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    return load_checkpoint(Path(path).read_bytes())


def pack_u32(values) -> np.ndarray:
    """Store unsigned integers bit-exactly inside a float32 payload."""
    return np.asarray(values, dtype="<u4").view("<f4")


def unpack_u32(arr: np.ndarray) -> np.ndarray:
    return np.asarray(arr, dtype="<f4").view("<u4").astype(np.int64)
