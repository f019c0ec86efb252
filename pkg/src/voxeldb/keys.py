"""Backend key layout.

All keys are ASCII bytes with '/'-separated components and fixed-width
hex for numeric parts, so lexicographic backend order equals numeric
order. Cuboid keys sort by (project, level, channel, morton), which
makes a Morton walk a sequential backend scan; a cuboid's exception
list sorts immediately after the cuboid itself.

Keyspaces:
  c/<project>/<level>/<channel>/<morton>        cuboid payload
  c/<project>/<level>/<channel>/<morton>/exc    exception list
  i/<project>/<level>/<id>                      sparse object index
  m/<project>/<id>                              object metadata
  q/<project>/<field>/<value>/<id>              metadata secondary index
  n/<project>                                   id counter
"""

from __future__ import annotations

import struct
from urllib.parse import quote, unquote

EXC_SUFFIX = b"/exc"


def cuboid_key(project: str, level: int, channel: int, morton: int) -> bytes:
    return f"c/{project}/{level:02x}/{channel:04x}/{morton:016x}".encode()


def exception_key(project: str, level: int, channel: int, morton: int) -> bytes:
    return cuboid_key(project, level, channel, morton) + EXC_SUFFIX


def is_exception_key(key: bytes) -> bool:
    return key.endswith(EXC_SUFFIX)


def morton_of_cuboid_key(key: bytes) -> int:
    if key.endswith(EXC_SUFFIX):
        key = key[: -len(EXC_SUFFIX)]
    return int(key.rsplit(b"/", 1)[1], 16)


def cuboid_range(project: str, level: int, channel: int, lo: int = 0, hi: int = 1 << 64) -> tuple[bytes, bytes]:
    """Scan bounds covering cuboids (and their /exc entries) with morton in [lo, hi)."""
    prefix = f"c/{project}/{level:02x}/{channel:04x}/".encode()
    return prefix + f"{lo:016x}".encode(), prefix + f"{hi - 1:016x}".encode() + EXC_SUFFIX + b"\xff"


def index_key(project: str, level: int, obj_id: int) -> bytes:
    return f"i/{project}/{level:02x}/{obj_id:08x}".encode()


def index_range(project: str, level: int | None = None) -> tuple[bytes, bytes]:
    prefix = f"i/{project}/".encode() if level is None else f"i/{project}/{level:02x}/".encode()
    return prefix, prefix + b"\xff"


def id_of_index_key(key: bytes) -> int:
    return int(key.rsplit(b"/", 1)[1], 16)


def meta_key(project: str, obj_id: int) -> bytes:
    return f"m/{project}/{obj_id:08x}".encode()


def meta_range(project: str) -> tuple[bytes, bytes]:
    prefix = f"m/{project}/".encode()
    return prefix, prefix + b"\xff"


def id_of_meta_key(key: bytes) -> int:
    return int(key.rsplit(b"/", 1)[1], 16)


def _escape(value: str) -> str:
    return quote(value, safe="")


def sortable_float(x: float) -> str:
    """Hex encoding of a float that sorts like the float itself."""
    bits = struct.unpack(">Q", struct.pack(">d", x))[0]
    bits ^= 0xFFFFFFFFFFFFFFFF if bits >> 63 else 0x8000000000000000
    return f"{bits:016x}"


def unsortable_float(enc: str) -> float:
    bits = int(enc, 16)
    bits ^= 0x8000000000000000 if bits >> 63 else 0xFFFFFFFFFFFFFFFF
    return struct.unpack(">d", struct.pack(">Q", bits))[0]


def meta_index_key(project: str, fld: str, value: str, obj_id: int) -> bytes:
    return f"q/{project}/{_escape(fld)}/{_escape(value)}/{obj_id:08x}".encode()


def meta_index_range(project: str, fld: str, value: str | None = None) -> tuple[bytes, bytes]:
    prefix = f"q/{project}/{_escape(fld)}/".encode()
    if value is not None:
        prefix += _escape(value).encode() + b"/"
    return prefix, prefix + b"\xff"


def value_of_meta_index_key(key: bytes) -> tuple[str, int]:
    parts = key.decode().split("/")
    return unquote(parts[3]), int(parts[4], 16)


def counter_key(project: str) -> bytes:
    return f"n/{project}/id".encode()


def project_prefixes(project: str) -> list[bytes]:
    """All keyspace prefixes holding a project's data (for migration/reporting)."""
    return [
        f"c/{project}/".encode(),
        f"i/{project}/".encode(),
        f"m/{project}/".encode(),
        f"q/{project}/".encode(),
        f"n/{project}/".encode(),
    ]


def prefix_range(prefix: bytes) -> tuple[bytes, bytes]:
    return prefix, prefix + b"\xff"
