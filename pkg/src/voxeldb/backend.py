"""Ordered key-value backends.

The storage contract the rest of the engine needs: a durable ordered
map from bytes to bytes with atomic single-key writes, atomic multi-key
batches, and ascending range scans. Two implementations ship: an
instrumented in-memory map for tests and measurement, and a SQLite
file for persistence (B-tree primary key gives us ordered scans and
transactional batches for free).
"""

from __future__ import annotations

import bisect
import sqlite3
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import StorageError


@dataclass
class BackendStats:
    """Monotonic operation counters; reads include misses."""

    gets: int = 0
    puts: int = 0
    deletes: int = 0
    batches: int = 0
    scans: int = 0
    scanned_pairs: int = 0
    bytes_read: int = 0
    bytes_written: int = 0

    def snapshot(self) -> "BackendStats":
        return BackendStats(**vars(self))

    def delta(self, before: "BackendStats") -> "BackendStats":
        return BackendStats(**{k: getattr(self, k) - getattr(before, k) for k in vars(self)})


class Backend(ABC):
    """Ordered bytes->bytes map. Keys scan in ascending lexicographic order."""

    name: str = "backend"

    def __init__(self):
        self.stats = BackendStats()
        self.get_log: list[bytes] | None = None

    def record_gets(self, enabled: bool = True) -> None:
        self.get_log = [] if enabled else None

    @abstractmethod
    def get(self, key: bytes) -> bytes | None: ...

    @abstractmethod
    def put(self, key: bytes, value: bytes) -> None: ...

    @abstractmethod
    def delete(self, key: bytes) -> None: ...

    @abstractmethod
    def write_batch(
        self, puts: Iterable[tuple[bytes, bytes]], deletes: Iterable[bytes] = ()
    ) -> None:
        """Apply all puts then deletes atomically."""

    @abstractmethod
    def scan(self, lo: bytes, hi: bytes) -> Iterator[tuple[bytes, bytes]]:
        """Yield stored (key, value) with lo <= key < hi in ascending key order."""

    def count(self, lo: bytes, hi: bytes) -> tuple[int, int]:
        """(number of keys, total value bytes) in [lo, hi)."""
        n = total = 0
        for _, v in self.scan(lo, hi):
            n += 1
            total += len(v)
        return n, total

    def close(self) -> None:
        pass

    def _note_get(self, key: bytes, value: bytes | None) -> None:
        self.stats.gets += 1
        if value is not None:
            self.stats.bytes_read += len(value)
        if self.get_log is not None:
            self.get_log.append(key)


class MemoryBackend(Backend):
    """Instrumented in-memory map: dict plus a bisect-maintained key list."""

    def __init__(self, name: str = "memory"):
        super().__init__()
        self.name = name
        self._data: dict[bytes, bytes] = {}
        self._keys: list[bytes] = []
        self._lock = threading.Lock()

    def get(self, key: bytes) -> bytes | None:
        with self._lock:
            value = self._data.get(key)
            self._note_get(key, value)
            return value

    def _put_locked(self, key: bytes, value: bytes) -> None:
        if key not in self._data:
            bisect.insort(self._keys, key)
        self._data[key] = value
        self.stats.puts += 1
        self.stats.bytes_written += len(value)

    def _delete_locked(self, key: bytes) -> None:
        if key in self._data:
            del self._data[key]
            i = bisect.bisect_left(self._keys, key)
            del self._keys[i]
        self.stats.deletes += 1

    def put(self, key: bytes, value: bytes) -> None:
        with self._lock:
            self._put_locked(key, value)

    def delete(self, key: bytes) -> None:
        with self._lock:
            self._delete_locked(key)

    def write_batch(self, puts, deletes=()) -> None:
        with self._lock:
            for k, v in puts:
                self._put_locked(k, v)
            for k in deletes:
                self._delete_locked(k)
            self.stats.batches += 1

    def scan(self, lo: bytes, hi: bytes):
        with self._lock:
            self.stats.scans += 1
            i = bisect.bisect_left(self._keys, lo)
            j = bisect.bisect_left(self._keys, hi)
            window = self._keys[i:j]
        for k in window:
            with self._lock:
                v = self._data.get(k)
            if v is None:
                continue  # deleted mid-scan
            self.stats.scanned_pairs += 1
            self.stats.bytes_read += len(v)
            yield k, v

    def __len__(self) -> int:
        return len(self._data)


class SqliteBackend(Backend):
    """SQLite-backed ordered map; one file per backend, WAL for readers."""

    def __init__(self, path: str, name: str | None = None):
        super().__init__()
        self.path = str(path)
        self.name = name or self.path
        self._local = threading.local()
        self._write_lock = threading.Lock()
        conn = self._conn()
        with self._write_lock:
            conn.execute(
                "CREATE TABLE IF NOT EXISTS kv (key BLOB PRIMARY KEY, value BLOB NOT NULL)"
            )
            conn.commit()

    def _conn(self) -> sqlite3.Connection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            try:
                conn = sqlite3.connect(self.path, timeout=30.0)
                conn.execute("PRAGMA journal_mode=WAL")
                conn.execute("PRAGMA synchronous=NORMAL")
            except sqlite3.Error as exc:
                raise StorageError(f"cannot open backend {self.path}: {exc}") from None
            self._local.conn = conn
        return conn

    def get(self, key: bytes) -> bytes | None:
        try:
            row = self._conn().execute("SELECT value FROM kv WHERE key = ?", (key,)).fetchone()
        except sqlite3.Error as exc:
            raise StorageError(f"get failed: {exc}") from None
        value = row[0] if row else None
        self._note_get(key, value)
        return value

    def put(self, key: bytes, value: bytes) -> None:
        self.write_batch([(key, value)])
        self.stats.batches -= 1  # plain put, not a caller-visible batch

    def delete(self, key: bytes) -> None:
        try:
            with self._write_lock:
                conn = self._conn()
                conn.execute("DELETE FROM kv WHERE key = ?", (key,))
                conn.commit()
        except sqlite3.Error as exc:
            raise StorageError(f"delete failed: {exc}") from None
        self.stats.deletes += 1

    def write_batch(self, puts, deletes=()) -> None:
        try:
            with self._write_lock:
                conn = self._conn()
                conn.execute("BEGIN")
                for k, v in puts:
                    conn.execute(
                        "INSERT INTO kv (key, value) VALUES (?, ?) "
                        "ON CONFLICT(key) DO UPDATE SET value = excluded.value",
                        (k, v),
                    )
                    self.stats.puts += 1
                    self.stats.bytes_written += len(v)
                for k in deletes:
                    conn.execute("DELETE FROM kv WHERE key = ?", (k,))
                    self.stats.deletes += 1
                conn.commit()
        except sqlite3.Error as exc:
            raise StorageError(f"batch write failed: {exc}") from None
        self.stats.batches += 1

    def scan(self, lo: bytes, hi: bytes):
        self.stats.scans += 1
        try:
            cur = self._conn().execute(
                "SELECT key, value FROM kv WHERE key >= ? AND key < ? ORDER BY key", (lo, hi)
            )
            for k, v in cur:
                self.stats.scanned_pairs += 1
                self.stats.bytes_read += len(v)
                yield bytes(k), bytes(v)
        except sqlite3.Error as exc:
            raise StorageError(f"scan failed: {exc}") from None

    def count(self, lo: bytes, hi: bytes) -> tuple[int, int]:
        try:
            row = self._conn().execute(
                "SELECT COUNT(*), COALESCE(SUM(LENGTH(value)), 0) FROM kv "
                "WHERE key >= ? AND key < ?",
                (lo, hi),
            ).fetchone()
        except sqlite3.Error as exc:
            raise StorageError(f"count failed: {exc}") from None
        return int(row[0]), int(row[1])

    def close(self) -> None:
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            conn.close()
            self._local.conn = None
