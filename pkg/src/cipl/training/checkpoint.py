"""Binary checkpoint format.

Layout (little-endian): magic ``b"CIPL"``, u32 format version, then one record
per tensor (u32 name length, name bytes (utf-8), u32 rank, u32 per dim, raw
float32 values), and finally a u32 CRC32 of every preceding byte. The record
count is implied: records run until the trailing four CRC bytes.
"""

import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"CIPL"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(tensors):
    parts = [MAGIC, struct.pack("<I", VERSION)]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(np.asarray(arr, dtype="<f4"))
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def loads(buf):
    if len(buf) < 12 or buf[:4] != MAGIC:
        raise CheckpointError("not a CIPL checkpoint (bad magic)")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CheckpointError("checkpoint CRC mismatch (file is corrupted)")
    (version,) = struct.unpack_from("<I", body, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos, out = 8, {}
    try:
        while pos < len(body):
            (n,) = struct.unpack_from("<I", body, pos)
            name = body[pos + 4:pos + 4 + n].decode("utf-8")
            pos += 4 + n
            (rank,) = struct.unpack_from("<I", body, pos)
            dims = struct.unpack_from(f"<{rank}I", body, pos + 4)
            pos += 4 + 4 * rank
            count = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(body, dtype="<f4", count=count, offset=pos).reshape(dims)
            pos += 4 * count
            out[name] = arr.astype(np.float32)
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"malformed tensor table: {exc}") from exc
    return out


def save(path, tensors):
    Path(path).write_bytes(dumps(tensors))


def load(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return loads(path.read_bytes())
