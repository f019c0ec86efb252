"""Application-level data distribution.

The router owns the key-to-backend mapping: Morton-range sharding for
image projects, a designated fast-write backend for annotation projects
in active-write placement, and whole-project migration between
backends. Backends are plain storage handles; anything speaking the
Backend contract (local or remote) drops in.
"""

from __future__ import annotations

import hashlib
import heapq
from typing import Callable, Iterator

from . import curve, keys
from .backend import Backend
from .errors import MigrationError
from .model import Placement
from .registry import Registry

COPY_BATCH = 256


class Router:
    def __init__(self, registry: Registry):
        self.registry = registry

    # -- routing ----------------------------------------------------------

    def _shard_space(self, token: str, level: int) -> int:
        ds = self.registry.dataset_of(token)
        return curve.key_space_size(ds.level(level).grid)

    def cuboid_backend(self, token: str, level: int, morton: int) -> Backend:
        """Backend owning a cuboid key (and its adjacent exception entry)."""
        placement = self.registry.placement(token)
        if placement.active_write:
            return self.registry.backend(placement.write_backend)
        if placement.shard_count == 1:
            return self.registry.backend(placement.backends[0])
        shard = curve.shard_of(morton, placement.shard_count, self._shard_space(token, level))
        return self.registry.backend(placement.backends[shard])

    def meta_backend(self, token: str) -> Backend:
        """Backend owning non-cuboid keyspaces (index, metadata, counters)."""
        placement = self.registry.placement(token)
        if placement.active_write:
            return self.registry.backend(placement.write_backend)
        return self.registry.backend(placement.backends[0])

    def project_backends(self, token: str) -> list[Backend]:
        placement = self.registry.placement(token)
        names = list(dict.fromkeys(placement.backends))
        if placement.write_backend and placement.write_backend not in names:
            names.append(placement.write_backend)
        return [self.registry.backend(n) for n in names]

    def scan_cuboids(
        self, token: str, level: int, channel: int, lo: int = 0, hi: int = 1 << 64
    ) -> Iterator[tuple[bytes, bytes]]:
        """Ascending merged scan of stored cuboid/exception keys across shards."""
        klo, khi = keys.cuboid_range(token, level, channel, lo, hi)
        streams = [b.scan(klo, khi) for b in self.project_backends(token)]
        if len(streams) == 1:
            yield from streams[0]
        else:
            yield from heapq.merge(*streams, key=lambda kv: kv[0])

    # -- reporting ----------------------------------------------------------

    def placement_report(self, token: str) -> dict[str, dict[str, int]]:
        """Key counts and byte totals per backend for one project."""
        self.registry.project(token)
        report = {}
        for name, backend in self.registry.backends.items():
            n = total = 0
            for prefix in keys.project_prefixes(token):
                c, b = backend.count(*keys.prefix_range(prefix))
                n += c
                total += b
            report[name] = {"keys": n, "bytes": total}
        return report

    # -- migration ----------------------------------------------------------

    @staticmethod
    def _checksum(pairs) -> tuple[int, bytes]:
        h = hashlib.sha256()
        n = 0
        for k, v in pairs:
            h.update(len(k).to_bytes(4, "little"))
            h.update(k)
            h.update(len(v).to_bytes(8, "little"))
            h.update(v)
            n += 1
        return n, h.digest()

    def migrate(
        self,
        token: str,
        from_backend: str,
        to_backend: str,
        fault_injection: Callable[[], None] | None = None,
    ) -> int:
        """Move a quiesced project's keys between backends.

        Copy via ordered scans, verify by count and checksum, switch the
        placement atomically, then remove the source keys. A failure (or
        injected fault) before the switch leaves reads on the source.
        Returns the number of keys moved.
        """
        src = self.registry.backend(from_backend)
        dst = self.registry.backend(to_backend)
        with self.registry.lock_project(token):
            copied: list[bytes] = []
            h_src = hashlib.sha256()
            for prefix in keys.project_prefixes(token):
                lo, hi = keys.prefix_range(prefix)
                batch = []
                for k, v in src.scan(lo, hi):
                    h_src.update(len(k).to_bytes(4, "little"))
                    h_src.update(k)
                    h_src.update(len(v).to_bytes(8, "little"))
                    h_src.update(v)
                    copied.append(k)
                    batch.append((k, v))
                    if len(batch) >= COPY_BATCH:
                        dst.write_batch(batch)
                        batch = []
                if batch:
                    dst.write_batch(batch)

            copied_set = set(copied)
            h_dst = hashlib.sha256()
            seen = 0
            for prefix in keys.project_prefixes(token):
                lo, hi = keys.prefix_range(prefix)
                for k, v in dst.scan(lo, hi):
                    if k in copied_set:
                        h_dst.update(len(k).to_bytes(4, "little"))
                        h_dst.update(k)
                        h_dst.update(len(v).to_bytes(8, "little"))
                        h_dst.update(v)
                        seen += 1
            if seen != len(copied) or h_src.digest() != h_dst.digest():
                raise MigrationError(
                    f"copy verification failed ({seen}/{len(copied)} keys); source intact"
                )

            if fault_injection is not None:
                fault_injection()

            old = self.registry.placement(token)
            new_backends = tuple(to_backend if n == from_backend else n for n in old.backends)
            if old.write_backend == from_backend:
                # migrating off the fast-write node retires the active-write role
                new = Placement(old.shard_count, new_backends, False, None)
            else:
                new = Placement(old.shard_count, new_backends, old.active_write, old.write_backend)
            self.registry.set_placement(token, new)

            for i in range(0, len(copied), COPY_BATCH):
                src.write_batch([], deletes=copied[i : i + COPY_BATCH])
        return len(copied)
