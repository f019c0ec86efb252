"""Domain types: dataset geometry, projects, regions, volumes, annotation records.

Volumes are numpy arrays indexed ``[t][z][y][x]`` (time axis dropped for
datasets without one); payload bytes are row-major with X fastest.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BadRequestError, BoundsError, ConfigError

CUBOID_VOXELS = 1 << 18

FLAT_CUBOID = (128, 128, 16)
CUBE_CUBOID = (64, 64, 64)
FLAT_LEVELS = 4  # levels 0..3 use the flat shape by default

MAX_TILE_SIZE = 1024
MIN_TILE_SIZE = 256


class VoxelType(enum.Enum):
    """Project voxel type; the numeric code is the wire dtype id."""

    UINT8 = ("uint8", 1)
    UINT16 = ("uint16", 2)
    LABEL32 = ("label32", 3)
    RGBA32 = ("rgba32", 4)

    def __init__(self, label: str, code: int):
        self.label = label
        self.code = code

    @property
    def dtype(self) -> np.dtype:
        return np.dtype({1: "<u1", 2: "<u2", 3: "<u4", 4: "<u4"}[self.code])

    @property
    def nbytes(self) -> int:
        return self.dtype.itemsize

    @classmethod
    def from_code(cls, code: int) -> "VoxelType":
        for vt in cls:
            if vt.code == code:
                return vt
        raise BadRequestError(f"unknown voxel type code {code}")

    @classmethod
    def from_label(cls, label: str) -> "VoxelType":
        for vt in cls:
            if vt.label == label:
                return vt
        raise BadRequestError(f"unknown voxel type {label!r}")


@dataclass(frozen=True)
class ResolutionLevel:
    """Geometry of one level of the hierarchy.

    ``extent`` is (x, y, z) in voxels at this level, ``time`` the shared
    time extent (0 when the dataset has no time axis), ``cuboid_shape``
    is (cx, cy, cz, ct).
    """

    level: int
    extent: tuple[int, int, int]
    time: int
    cuboid_shape: tuple[int, int, int, int]

    @property
    def scale_xy(self) -> int:
        return 1 << self.level

    @property
    def extent4(self) -> tuple[int, int, int, int]:
        return (*self.extent, max(self.time, 1))

    @property
    def grid(self) -> tuple[int, ...]:
        """Grid extent in cuboid units over the curve dimensions."""
        dims = 4 if self.time else 3
        return tuple(
            -(-self.extent4[d] // self.cuboid_shape[d]) for d in range(dims)
        )

    def validate(self) -> None:
        cx, cy, cz, ct = self.cuboid_shape
        if cx * cy * cz * ct != CUBOID_VOXELS:
            raise ConfigError(
                f"level {self.level}: cuboid shape {self.cuboid_shape} has "
                f"{cx * cy * cz * ct} voxels, expected {CUBOID_VOXELS}"
            )
        if any(e < 1 for e in self.extent):
            raise ConfigError(f"level {self.level}: empty extent {self.extent}")


def default_cuboid_shape(level: int, time: int, time_chunk: int = 1) -> tuple[int, int, int, int]:
    """Anisotropy schedule: flat cuboids near full resolution, cubes beyond."""
    base = FLAT_CUBOID if level < FLAT_LEVELS else CUBE_CUBOID
    if not time or time_chunk == 1:
        return (*base, 1)
    # steal Z bits for the time chunk so the voxel count stays fixed
    cx, cy, cz = base
    if cz % time_chunk:
        raise ConfigError(f"time chunk {time_chunk} does not divide cuboid depth {cz}")
    return (cx, cy, cz // time_chunk, time_chunk)


@dataclass(frozen=True)
class DatasetConfig:
    """Geometry of a dataset: extents, channels, time, and the level stack."""

    name: str
    extent: tuple[int, int, int]
    time: int = 0
    channels: int = 1
    levels: tuple[ResolutionLevel, ...] = ()

    @classmethod
    def build(
        cls,
        name: str,
        extent: tuple[int, int, int],
        *,
        num_levels: int = 1,
        time: int = 0,
        channels: int = 1,
        time_chunk: int = 1,
        cuboid_shapes: dict[int, tuple[int, int, int, int]] | None = None,
    ) -> "DatasetConfig":
        levels = []
        ext = extent
        for r in range(num_levels):
            shape = (cuboid_shapes or {}).get(r) or default_cuboid_shape(r, time, time_chunk)
            levels.append(ResolutionLevel(level=r, extent=ext, time=time, cuboid_shape=shape))
            ext = (-(-ext[0] // 2), -(-ext[1] // 2), ext[2])
        cfg = cls(name=name, extent=extent, time=time, channels=channels, levels=tuple(levels))
        cfg.validate()
        return cfg

    @property
    def dims(self) -> int:
        return 4 if self.time else 3

    def level(self, r: int) -> ResolutionLevel:
        if not 0 <= r < len(self.levels):
            raise BoundsError(f"resolution {r} outside hierarchy of {len(self.levels)} levels")
        return self.levels[r]

    def validate(self) -> None:
        if not self.levels:
            raise ConfigError(f"dataset {self.name}: no resolution levels")
        if self.levels[0].extent != self.extent:
            raise ConfigError(f"dataset {self.name}: level 0 extent mismatch")
        if self.channels < 1:
            raise ConfigError(f"dataset {self.name}: channel count must be >= 1")
        prev = None
        for r, lvl in enumerate(self.levels):
            lvl.validate()
            if lvl.level != r:
                raise ConfigError(f"dataset {self.name}: level index gap at {r}")
            if lvl.time != self.time:
                raise ConfigError(f"dataset {self.name}: time extent differs at level {r}")
            if prev is not None:
                want = (-(-prev.extent[0] // 2), -(-prev.extent[1] // 2), prev.extent[2])
                if lvl.extent != want:
                    raise ConfigError(
                        f"dataset {self.name}: level {r} extent {lvl.extent},"
                        f" expected ceil-half of level {r - 1} in XY"
                    )
            prev = lvl

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "extent": list(self.extent),
            "time": self.time,
            "channels": self.channels,
            "levels": [
                {
                    "level": l.level,
                    "extent": list(l.extent),
                    "cuboid_shape": list(l.cuboid_shape),
                }
                for l in self.levels
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DatasetConfig":
        time = int(doc.get("time", 0))
        levels = tuple(
            ResolutionLevel(
                level=l["level"],
                extent=tuple(l["extent"]),
                time=time,
                cuboid_shape=tuple(l["cuboid_shape"]),
            )
            for l in doc["levels"]
        )
        cfg = cls(
            name=doc["name"],
            extent=tuple(doc["extent"]),
            time=time,
            channels=int(doc.get("channels", 1)),
            levels=levels,
        )
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class ProjectConfig:
    """A database bound to a dataset: voxel type, kind, and write policy."""

    token: str
    dataset: str
    kind: str  # "image" | "annotation"
    voxel_type: VoxelType
    exceptions: bool = False
    read_only: bool = False
    compress: bool = True
    write_level: int = 0
    tile_size: int = 512

    def validate(self) -> None:
        if self.kind not in ("image", "annotation"):
            raise ConfigError(f"project {self.token}: kind must be image or annotation")
        if self.kind == "annotation" and self.voxel_type is not VoxelType.LABEL32:
            raise ConfigError(f"project {self.token}: annotation projects store 32-bit labels")
        if self.exceptions and self.kind != "annotation":
            raise ConfigError(f"project {self.token}: exceptions only apply to annotations")
        if not MIN_TILE_SIZE <= self.tile_size <= MAX_TILE_SIZE:
            raise ConfigError(
                f"project {self.token}: tile size {self.tile_size} outside "
                f"[{MIN_TILE_SIZE}, {MAX_TILE_SIZE}]"
            )
        if not self.token or any(c in self.token for c in "/?#&, "):
            raise ConfigError(f"invalid project token {self.token!r}")

    def to_json(self) -> dict:
        return {
            "token": self.token,
            "dataset": self.dataset,
            "kind": self.kind,
            "voxel_type": self.voxel_type.label,
            "exceptions": self.exceptions,
            "read_only": self.read_only,
            "compress": self.compress,
            "write_level": self.write_level,
            "tile_size": self.tile_size,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ProjectConfig":
        cfg = cls(
            token=doc["token"],
            dataset=doc["dataset"],
            kind=doc["kind"],
            voxel_type=VoxelType.from_label(doc["voxel_type"]),
            exceptions=bool(doc.get("exceptions", False)),
            read_only=bool(doc.get("read_only", False)),
            compress=bool(doc.get("compress", True)),
            write_level=int(doc.get("write_level", 0)),
            tile_size=int(doc.get("tile_size", 512)),
        )
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class Placement:
    """Where a project's keys live: shard list plus active-write override."""

    shard_count: int = 1
    backends: tuple[str, ...] = ("default",)
    active_write: bool = False
    write_backend: str | None = None

    def validate(self) -> None:
        if self.shard_count < 1:
            raise ConfigError("shard_count must be >= 1")
        if len(self.backends) != self.shard_count:
            raise ConfigError(
                f"placement lists {len(self.backends)} backends for {self.shard_count} shards"
            )
        if self.active_write and not self.write_backend:
            raise ConfigError("active_write placement requires a write_backend")

    def to_json(self) -> dict:
        doc = {
            "shard_count": self.shard_count,
            "backends": list(self.backends),
            "active_write": self.active_write,
        }
        if self.write_backend:
            doc["write_backend"] = self.write_backend
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "Placement":
        p = cls(
            shard_count=int(doc.get("shard_count", 1)),
            backends=tuple(doc.get("backends", ("default",))),
            active_write=bool(doc.get("active_write", False)),
            write_backend=doc.get("write_backend"),
        )
        p.validate()
        return p


@dataclass(frozen=True)
class VoxelRegion:
    """Half-open voxel box, optional time range, optional channel list.

    Channels are carried alongside but are not part of the spatial box;
    they select separate sub-volumes, never interleave.
    """

    x: tuple[int, int]
    y: tuple[int, int]
    z: tuple[int, int]
    t: tuple[int, int] | None = None
    channels: tuple[int, ...] | None = None

    def __post_init__(self):
        for name, (lo, hi) in (("x", self.x), ("y", self.y), ("z", self.z)):
            if lo < 0 or lo >= hi:
                raise BadRequestError(f"bad {name} range [{lo}, {hi})")
        if self.t is not None and (self.t[0] < 0 or self.t[0] >= self.t[1]):
            raise BadRequestError(f"bad time range {self.t}")

    def ranges(self, level: ResolutionLevel) -> tuple[tuple[int, int], ...]:
        """Per-curve-dimension (lo, hi) including the time lane when present."""
        if level.time:
            t = self.t if self.t is not None else (0, level.time)
            return (self.x, self.y, self.z, t)
        return (self.x, self.y, self.z)

    def clip(self, level: ResolutionLevel) -> "VoxelRegion":
        ext = level.extent4
        parts = []
        for d, (lo, hi) in enumerate(self.ranges(level)):
            lo, hi = max(lo, 0), min(hi, ext[d])
            if lo >= hi:
                raise BoundsError(
                    f"region lies outside level {level.level} extent {level.extent}"
                )
            parts.append((lo, hi))
        t = parts[3] if level.time else None
        return VoxelRegion(parts[0], parts[1], parts[2], t, self.channels)

    def within(self, level: ResolutionLevel) -> bool:
        ext = level.extent4
        return all(
            0 <= lo and hi <= ext[d] for d, (lo, hi) in enumerate(self.ranges(level))
        )

    def shape4(self, level: ResolutionLevel) -> tuple[int, int, int, int]:
        """(t, z, y, x) extents of the region at a level."""
        r = self.ranges(level)
        t = r[3] if level.time else (0, 1)
        return (t[1] - t[0], r[2][1] - r[2][0], r[1][1] - r[1][0], r[0][1] - r[0][0])

    def offset(self, level: ResolutionLevel) -> tuple[int, ...]:
        r = self.ranges(level)
        return tuple(lo for lo, _ in r)


def region_from_box(lo, hi, channels=None) -> VoxelRegion:
    """Build a region from per-dimension lo/hi tuples (3 or 4 long)."""
    t = (lo[3], hi[3]) if len(lo) == 4 else None
    return VoxelRegion((lo[0], hi[0]), (lo[1], hi[1]), (lo[2], hi[2]), t, channels)


@dataclass
class DenseVolume:
    """Cutout result: typed array plus its voxel offset within the level."""

    voxel_type: VoxelType
    offset: tuple[int, ...]  # (x, y, z[, t])
    data: np.ndarray  # [z][y][x] or [t][z][y][x]

    def __post_init__(self):
        if self.data.dtype != self.voxel_type.dtype:
            self.data = self.data.astype(self.voxel_type.dtype)
        if len(self.offset) != self.data.ndim:
            raise BadRequestError(
                f"offset rank {len(self.offset)} != data rank {self.data.ndim}"
            )

    @property
    def dims(self) -> tuple[int, ...]:
        """(x, y, z[, t]) extents."""
        return tuple(reversed(self.data.shape))

    def tobytes(self) -> bytes:
        return np.ascontiguousarray(self.data).tobytes()


class AnnotationType(enum.Enum):
    SEED = "seed"
    SYNAPSE = "synapse"
    SEGMENT = "segment"
    NEURON = "neuron"
    ORGANELLE = "organelle"
    GENERIC = "generic"

    @classmethod
    def parse(cls, name: str) -> "AnnotationType":
        try:
            return cls(name)
        except ValueError:
            raise BadRequestError(f"unknown annotation type {name!r}") from None


@dataclass
class AnnotationObject:
    """Object metadata record; id 0 means "assign one for me" on write."""

    id: int = 0
    type: AnnotationType = AnnotationType.GENERIC
    confidence: float = 0.0
    status: int = 0
    author: str = ""
    kv: dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        if not 0 <= self.id < 1 << 32:
            raise BadRequestError(f"annotation id {self.id} outside 32-bit range")
        if not 0.0 <= self.confidence <= 1.0:
            raise BadRequestError(f"confidence {self.confidence} outside [0, 1]")
        for k, v in self.kv.items():
            if not isinstance(k, str) or not isinstance(v, str):
                raise BadRequestError("kv pairs must be strings")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "type": self.type.value,
            "confidence": self.confidence,
            "status": self.status,
            "author": self.author,
            "kv": dict(sorted(self.kv.items())),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "AnnotationObject":
        obj = cls(
            id=int(doc.get("id", 0)),
            type=AnnotationType.parse(doc.get("type", "generic")),
            confidence=float(doc.get("confidence", 0.0)),
            status=int(doc.get("status", 0)),
            author=str(doc.get("author", "")),
            kv={str(k): str(v) for k, v in doc.get("kv", {}).items()},
        )
        obj.validate()
        return obj

    def with_id(self, new_id: int) -> "AnnotationObject":
        return replace(self, id=new_id)


class Discipline(enum.Enum):
    """Conflict rule for labeling an already-labeled voxel."""

    OVERWRITE = "overwrite"
    PRESERVE = "preserve"
    EXCEPTION = "exception"

    @classmethod
    def parse(cls, name: str) -> "Discipline":
        try:
            return cls(name)
        except ValueError:
            raise BadRequestError(f"unknown write discipline {name!r}") from None


def canonical_json(doc) -> bytes:
    """Canonical UTF-8 JSON: sorted keys, no whitespace padding."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()
