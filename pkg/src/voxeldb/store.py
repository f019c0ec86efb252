"""Cuboid-chunked dense array storage with lazy allocation.

Cutouts assemble from per-cuboid overlaps in ascending Morton order;
cuboids absent from the backend read as zeros and all-zero cuboids are
elided on write. Arrays are handled internally as 4-d ``[t][z][y][x]``
blocks regardless of whether the dataset has a time axis.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import codec, curve, keys
from .errors import BadRequestError, BoundsError
from .model import DatasetConfig, DenseVolume, ProjectConfig, ResolutionLevel, VoxelRegion, VoxelType
from .registry import JobTicket, Registry
from .router import Router


@dataclass
class Cuboid:
    """One chunk: a full-shape voxel block plus optional exception lists."""

    data: np.ndarray  # (ct, cz, cy, cx)
    exceptions: dict[int, list[int]] | None = None

    def is_zero(self) -> bool:
        return not self.data.any() and not self.exceptions


class KeyLocks:
    """Per-key mutexes serializing cuboid read-modify-write cycles."""

    def __init__(self):
        self._locks: dict[bytes, threading.Lock] = {}
        self._mutex = threading.Lock()

    def lock(self, key: bytes) -> threading.Lock:
        with self._mutex:
            lk = self._locks.get(key)
            if lk is None:
                lk = self._locks[key] = threading.Lock()
            return lk


class CuboidCache:
    """Byte-bounded LRU of decoded cuboid arrays; entries are read-only."""

    def __init__(self, capacity_bytes: int):
        self.capacity = capacity_bytes
        self._entries: OrderedDict[bytes, np.ndarray] = OrderedDict()
        self._bytes = 0
        self._mutex = threading.Lock()

    def get(self, key: bytes) -> np.ndarray | None:
        with self._mutex:
            arr = self._entries.get(key)
            if arr is not None:
                self._entries.move_to_end(key)
            return arr

    def put(self, key: bytes, arr: np.ndarray) -> None:
        arr = arr.copy()
        arr.flags.writeable = False
        with self._mutex:
            old = self._entries.pop(key, None)
            if old is not None:
                self._bytes -= old.nbytes
            self._entries[key] = arr
            self._bytes += arr.nbytes
            while self._bytes > self.capacity and self._entries:
                _, evicted = self._entries.popitem(last=False)
                self._bytes -= evicted.nbytes

    def invalidate(self, key: bytes) -> None:
        with self._mutex:
            old = self._entries.pop(key, None)
            if old is not None:
                self._bytes -= old.nbytes


class CuboidStore:
    def __init__(self, registry: Registry, router: Router | None = None, cache_bytes: int = 0):
        self.registry = registry
        self.router = router or Router(registry)
        self.cache = CuboidCache(cache_bytes) if cache_bytes else None
        self.locks = KeyLocks()

    # -- config helpers ----------------------------------------------------

    def _resolve(self, token: str, level: int) -> tuple[ProjectConfig, DatasetConfig, ResolutionLevel]:
        proj = self.registry.project(token)
        ds = self.registry.dataset(proj.dataset)
        return proj, ds, ds.level(level)

    @staticmethod
    def _check_channel(ds: DatasetConfig, channel: int) -> None:
        if not 0 <= channel < ds.channels:
            raise BadRequestError(f"channel {channel} outside 0..{ds.channels - 1}")

    @staticmethod
    def zero_cuboid(lvl: ResolutionLevel, vt: VoxelType) -> np.ndarray:
        cx, cy, cz, ct = lvl.cuboid_shape
        return np.zeros((ct, cz, cy, cx), dtype=vt.dtype)

    # -- single-cuboid ops ---------------------------------------------------

    def _decode(self, raw: bytes, lvl: ResolutionLevel, vt: VoxelType) -> np.ndarray:
        cx, cy, cz, ct = lvl.cuboid_shape
        arr = np.frombuffer(codec.decompress(raw), dtype=vt.dtype)
        return arr.reshape(ct, cz, cy, cx)

    def _load_array(
        self, token: str, level: int, channel: int, morton: int,
        lvl: ResolutionLevel, vt: VoxelType, writable: bool,
    ) -> np.ndarray | None:
        """Decoded cuboid array or None when unallocated; cached reads are shared."""
        key = keys.cuboid_key(token, level, channel, morton)
        if self.cache is not None:
            arr = self.cache.get(key)
            if arr is not None:
                return arr.copy() if writable else arr
        raw = self.router.cuboid_backend(token, level, morton).get(key)
        if raw is None:
            return None
        arr = self._decode(raw, lvl, vt)
        if self.cache is not None:
            self.cache.put(key, arr)
        if writable:
            arr = arr.copy()
        return arr

    def get_cuboid(self, token: str, level: int, channel: int, morton: int) -> Cuboid:
        """Fetch one chunk; absent keys read as the canonical zero cuboid."""
        proj, ds, lvl = self._resolve(token, level)
        self._check_channel(ds, channel)
        arr = self._load_array(token, level, channel, morton, lvl, proj.voxel_type, writable=True)
        if arr is None:
            return Cuboid(self.zero_cuboid(lvl, proj.voxel_type))
        exc = None
        if proj.exceptions:
            raw = self.router.cuboid_backend(token, level, morton).get(
                keys.exception_key(token, level, channel, morton)
            )
            exc = codec.unpack_exceptions(raw) if raw else None
        return Cuboid(arr, exc)

    def put_cuboid(
        self,
        token: str,
        level: int,
        channel: int,
        morton: int,
        cuboid: Cuboid,
        ticket: JobTicket | None = None,
    ) -> None:
        proj, ds, lvl = self._resolve(token, level)
        self.registry.check_writable(token, ticket)
        self._check_channel(ds, channel)
        cx, cy, cz, ct = lvl.cuboid_shape
        if cuboid.data.shape != (ct, cz, cy, cx):
            raise BadRequestError(
                f"cuboid shape {cuboid.data.shape} does not match level shape {(ct, cz, cy, cx)}"
            )
        backend = self.router.cuboid_backend(token, level, morton)
        key = keys.cuboid_key(token, level, channel, morton)
        exc_key = keys.exception_key(token, level, channel, morton)
        with self.locks.lock(key):
            if cuboid.is_zero():
                backend.write_batch([], deletes=[key, exc_key])
            else:
                wire_codec = codec.CODEC_DEFLATE if proj.compress else codec.CODEC_NONE
                puts = [(key, codec.compress(cuboid.data.tobytes(), wire_codec))]
                deletes = []
                if cuboid.exceptions:
                    puts.append((exc_key, codec.pack_exceptions(cuboid.exceptions)))
                elif proj.exceptions:
                    deletes.append(exc_key)
                backend.write_batch(puts, deletes)
            if self.cache is not None:
                self.cache.invalidate(key)

    # -- cutouts ---------------------------------------------------------------

    def _region_cuboids(self, region: VoxelRegion, lvl: ResolutionLevel):
        ranges = region.ranges(lvl)
        lo = [r[0] for r in ranges]
        hi = [r[1] for r in ranges]
        dims = len(ranges)
        return curve.cuboids_for_region(lo, hi, lvl.cuboid_shape[:dims])

    @staticmethod
    def _axis_slices(box, cell, cuboid_shape, region_lo):
        """(source slices within the cuboid, destination slices within the out array).

        Curve dimension order is (x, y, z[, t]); array axes are (t, z, y, x),
        so slices are emitted reversed and padded with the full time axis
        for 3-d datasets.
        """
        (blo, bhi) = box
        dims = len(blo)
        src = [slice(blo[d] - cell[d] * cuboid_shape[d], bhi[d] - cell[d] * cuboid_shape[d]) for d in range(dims)]
        dst = [slice(blo[d] - region_lo[d], bhi[d] - region_lo[d]) for d in range(dims)]
        if dims == 3:
            src.append(slice(None))
            dst.append(slice(0, 1))
        return tuple(reversed(src)), tuple(reversed(dst))

    def read_cutout(
        self, token: str, level: int, region: VoxelRegion, channel: int = 0
    ) -> DenseVolume:
        """Assemble the exact sub-volume; unallocated cuboids contribute zeros."""
        proj, ds, lvl = self._resolve(token, level)
        self._check_channel(ds, channel)
        region = region.clip(lvl)
        vt = proj.voxel_type
        out = np.zeros(region.shape4(lvl), dtype=vt.dtype)
        region_lo = [r[0] for r in region.ranges(lvl)]
        for morton, box in self._region_cuboids(region, lvl):
            arr = self._load_array(token, level, channel, morton, lvl, vt, writable=False)
            if arr is None:
                continue
            cell = curve.morton_decode(morton, len(region_lo))
            src, dst = self._axis_slices(box, cell, lvl.cuboid_shape, region_lo)
            out[dst] = arr[src]
        if not lvl.time:
            out = out[0]
        return DenseVolume(vt, region.offset(lvl), out)

    def read_channels(
        self, token: str, level: int, region: VoxelRegion
    ) -> list[DenseVolume]:
        """One sub-volume per requested channel, in request order."""
        channels = region.channels or (0,)
        return [self.read_cutout(token, level, region, c) for c in channels]

    def write_cutout(
        self,
        token: str,
        level: int,
        region: VoxelRegion,
        volume: DenseVolume | np.ndarray,
        channel: int = 0,
        ticket: JobTicket | None = None,
    ) -> None:
        """Read-modify-write of the intersecting cuboids (overwrite semantics)."""
        proj, ds, lvl = self._resolve(token, level)
        self.registry.check_writable(token, ticket)
        self._check_channel(ds, channel)
        if not region.within(lvl):
            raise BoundsError(f"write region outside level {level} extent {lvl.extent}")
        vt = proj.voxel_type
        data = volume.data if isinstance(volume, DenseVolume) else volume
        if data.dtype != vt.dtype:
            raise BadRequestError(f"payload dtype {data.dtype} does not match project {vt.label}")
        shape4 = region.shape4(lvl)
        if data.ndim == 3:
            data = data[np.newaxis, ...]
        if tuple(data.shape) != shape4:
            raise BadRequestError(f"payload shape {data.shape} does not match region {shape4}")

        wire_codec = codec.CODEC_DEFLATE if proj.compress else codec.CODEC_NONE
        region_lo = [r[0] for r in region.ranges(lvl)]
        for morton, box in self._region_cuboids(region, lvl):
            backend = self.router.cuboid_backend(token, level, morton)
            key = keys.cuboid_key(token, level, channel, morton)
            cell = curve.morton_decode(morton, len(region_lo))
            src, dst = self._axis_slices(box, cell, lvl.cuboid_shape, region_lo)
            with self.locks.lock(key):
                arr = self._load_array(token, level, channel, morton, lvl, vt, writable=True)
                existed = arr is not None
                chunk = data[dst]
                if arr is None:
                    if not chunk.any():
                        continue  # lazy allocation: never materialize zeros
                    arr = self.zero_cuboid(lvl, vt)
                arr[src] = chunk
                if not arr.any() and existed:
                    deletes = [key, keys.exception_key(token, level, channel, morton)]
                    backend.write_batch([], deletes=deletes)
                else:
                    backend.put(key, codec.compress(arr.tobytes(), wire_codec))
                if self.cache is not None:
                    self.cache.invalidate(key)

    # -- scans -------------------------------------------------------------

    def scan_stored(self, token: str, level: int, channel: int = 0, lo: int = 0, hi: int = 1 << 64):
        """Yield (morton, array, exceptions) for stored cuboids in key order."""
        proj, ds, lvl = self._resolve(token, level)
        vt = proj.voxel_type
        pending: tuple[int, np.ndarray] | None = None
        for key, raw in self.router.scan_cuboids(token, level, channel, lo, hi):
            if keys.is_exception_key(key):
                exc = codec.unpack_exceptions(raw)
                if pending is not None and pending[0] == keys.morton_of_cuboid_key(key):
                    yield pending[0], pending[1], exc
                    pending = None
                continue
            if pending is not None:
                yield pending[0], pending[1], None
            pending = (keys.morton_of_cuboid_key(key), self._decode(raw, lvl, vt))
        if pending is not None:
            yield pending[0], pending[1], None
