"""Binary payload codecs for stored values.

Cuboid payload framing (the on-disk External Interface):
  1 byte codec id (0 = none, 1 = deflate), 4-byte little-endian raw
  length, then the codec stream.

Index entries are packed little-endian u64 arrays; exception lists are
packed (offset, ids...) records. All decode paths verify lengths and
raise IntegrityError on corrupt input.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import IntegrityError

CODEC_NONE = 0
CODEC_DEFLATE = 1

# Speed over ratio: label runs and zero fill crush at any level, while
# EM-like noise is incompressible at every level.
DEFLATE_LEVEL = 1

_HEADER = struct.Struct("<BI")


def compress(raw: bytes, codec: int = CODEC_DEFLATE) -> bytes:
    if codec == CODEC_NONE:
        return _HEADER.pack(CODEC_NONE, len(raw)) + raw
    if codec == CODEC_DEFLATE:
        return _HEADER.pack(CODEC_DEFLATE, len(raw)) + zlib.compress(raw, DEFLATE_LEVEL)
    raise IntegrityError(f"unknown codec id {codec}")


def decompress(payload: bytes) -> bytes:
    if len(payload) < _HEADER.size:
        raise IntegrityError("cuboid payload shorter than its header")
    codec, raw_len = _HEADER.unpack_from(payload)
    body = payload[_HEADER.size :]
    if codec == CODEC_NONE:
        raw = body
    elif codec == CODEC_DEFLATE:
        try:
            raw = zlib.decompress(body)
        except zlib.error as exc:
            raise IntegrityError(f"corrupt deflate stream: {exc}") from None
    else:
        raise IntegrityError(f"unknown codec id {codec}")
    if len(raw) != raw_len:
        raise IntegrityError(f"payload declares {raw_len} raw bytes, got {len(raw)}")
    return raw


def pack_index(mortons) -> bytes:
    return np.asarray(sorted(mortons), dtype="<u8").tobytes()


def unpack_index(blob: bytes) -> list[int]:
    if len(blob) % 8:
        raise IntegrityError("index entry length not a multiple of 8")
    return np.frombuffer(blob, dtype="<u8").tolist()


def pack_exceptions(exc: dict[int, list[int]]) -> bytes:
    """Serialize per-voxel exception lists keyed by intra-cuboid offset."""
    parts = [struct.pack("<I", len(exc))]
    for off in sorted(exc):
        ids = exc[off]
        parts.append(struct.pack("<IH", off, len(ids)))
        parts.append(np.asarray(sorted(ids), dtype="<u4").tobytes())
    return b"".join(parts)


def unpack_exceptions(blob: bytes) -> dict[int, list[int]]:
    try:
        (count,) = struct.unpack_from("<I", blob)
        pos = 4
        out: dict[int, list[int]] = {}
        for _ in range(count):
            off, n = struct.unpack_from("<IH", blob, pos)
            pos += 6
            out[off] = np.frombuffer(blob, dtype="<u4", count=n, offset=pos).tolist()
            pos += 4 * n
        if pos != len(blob):
            raise IntegrityError("trailing bytes after exception records")
        return out
    except struct.error as exc:
        raise IntegrityError(f"corrupt exception list: {exc}") from None
