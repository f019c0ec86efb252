"""Catalog of datasets, projects, placements, and backend handles.

File-backed registries keep two JSON documents in the data directory:

  catalog.json    {"datasets": {...}, "projects": {...}}
  placement.json  {"backends": {name: {"driver": "sqlite"|"memory",
                                       "path": relative-or-absolute}},
                   "placements": {token: {"shard_count": N,
                                          "backends": [names...],
                                          "active_write": bool,
                                          "write_backend": name}}}

Projects without a placement entry implicitly live on the "default"
backend. Both files are rewritten atomically (temp file + rename).
"""

from __future__ import annotations

import json
import os
import threading
from contextlib import contextmanager

from .backend import Backend, MemoryBackend, SqliteBackend
from .errors import ConfigError, ConflictError, NotFoundError, ReadOnlyError
from .model import DatasetConfig, Placement, ProjectConfig

DEFAULT_BACKEND = "default"


class JobTicket:
    """Capability handle held by a batch job that has a project locked."""

    def __init__(self, token: str):
        self.token = token


class Registry:
    def __init__(self, data_dir: str | None = None):
        self.data_dir = data_dir
        self.backends: dict[str, Backend] = {}
        self.datasets: dict[str, DatasetConfig] = {}
        self.projects: dict[str, ProjectConfig] = {}
        self.placements: dict[str, Placement] = {}
        self._locks: dict[str, JobTicket] = {}
        self._mutex = threading.Lock()

    # -- construction ---------------------------------------------------

    @classmethod
    def memory(cls) -> "Registry":
        reg = cls()
        reg.backends[DEFAULT_BACKEND] = MemoryBackend(DEFAULT_BACKEND)
        return reg

    @classmethod
    def open(cls, data_dir: str, placement_path: str | None = None) -> "Registry":
        reg = cls(data_dir=data_dir)
        os.makedirs(data_dir, exist_ok=True)
        reg._placement_path = placement_path or os.path.join(data_dir, "placement.json")
        reg._load_placement()
        reg._load_catalog()
        return reg

    # -- persistence ----------------------------------------------------

    def _catalog_path(self) -> str | None:
        return os.path.join(self.data_dir, "catalog.json") if self.data_dir else None

    def _load_catalog(self) -> None:
        path = self._catalog_path()
        if not path or not os.path.exists(path):
            return
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
        for d in doc.get("datasets", {}).values():
            cfg = DatasetConfig.from_json(d)
            self.datasets[cfg.name] = cfg
        for p in doc.get("projects", {}).values():
            cfg = ProjectConfig.from_json(p)
            self.projects[cfg.token] = cfg

    def _load_placement(self) -> None:
        path = getattr(self, "_placement_path", None)
        if path and os.path.exists(path):
            with open(path, encoding="utf-8") as f:
                doc = json.load(f)
        else:
            doc = {"backends": {DEFAULT_BACKEND: {"driver": "sqlite", "path": "backends/default.db"}}}
        for name, spec in doc.get("backends", {}).items():
            self.backends[name] = self._open_backend(name, spec)
        for token, p in doc.get("placements", {}).items():
            self.placements[token] = Placement.from_json(p)
        if path and not os.path.exists(path):
            self._save_placement()

    def _open_backend(self, name: str, spec: dict) -> Backend:
        driver = spec.get("driver", "sqlite")
        if driver == "memory":
            return MemoryBackend(name)
        if driver == "sqlite":
            path = spec.get("path", f"backends/{name}.db")
            if self.data_dir and not os.path.isabs(path):
                path = os.path.join(self.data_dir, path)
            os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
            return SqliteBackend(path, name)
        raise ConfigError(f"unknown backend driver {driver!r}")

    @staticmethod
    def _atomic_write(path: str, doc: dict) -> None:
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
        os.replace(tmp, path)

    def _save_catalog(self) -> None:
        path = self._catalog_path()
        if not path:
            return
        self._atomic_write(
            path,
            {
                "datasets": {n: d.to_json() for n, d in self.datasets.items()},
                "projects": {t: p.to_json() for t, p in self.projects.items()},
            },
        )

    def _save_placement(self) -> None:
        path = getattr(self, "_placement_path", None)
        if not path:
            return
        backends = {}
        for name, b in self.backends.items():
            if isinstance(b, SqliteBackend):
                spec = {"driver": "sqlite", "path": b.path}
                if self.data_dir and b.path.startswith(self.data_dir + os.sep):
                    spec["path"] = os.path.relpath(b.path, self.data_dir)
                backends[name] = spec
            else:
                backends[name] = {"driver": "memory"}
        self._atomic_write(
            path,
            {
                "backends": backends,
                "placements": {t: p.to_json() for t, p in self.placements.items()},
            },
        )

    # -- admin ------------------------------------------------------------

    def add_backend(self, name: str, backend: Backend) -> None:
        with self._mutex:
            self.backends[name] = backend
            self._save_placement()

    def create_dataset(self, cfg: DatasetConfig) -> None:
        cfg.validate()
        with self._mutex:
            if cfg.name in self.datasets:
                raise ConflictError(f"dataset {cfg.name!r} already exists")
            self.datasets[cfg.name] = cfg
            self._save_catalog()

    def create_project(self, cfg: ProjectConfig, placement: Placement | None = None) -> None:
        cfg.validate()
        with self._mutex:
            if cfg.token in self.projects:
                raise ConflictError(f"project {cfg.token!r} already exists")
            if cfg.dataset not in self.datasets:
                raise NotFoundError(f"unknown dataset {cfg.dataset!r}")
            if cfg.write_level >= len(self.datasets[cfg.dataset].levels):
                raise ConfigError(f"write level {cfg.write_level} outside hierarchy")
            if placement is not None:
                placement.validate()
                for name in set(placement.backends) | (
                    {placement.write_backend} if placement.write_backend else set()
                ):
                    if name not in self.backends:
                        raise NotFoundError(f"unknown backend {name!r}")
                self.placements[cfg.token] = placement
            self.projects[cfg.token] = cfg
            self._save_catalog()
            self._save_placement()

    def dataset(self, name: str) -> DatasetConfig:
        try:
            return self.datasets[name]
        except KeyError:
            raise NotFoundError(f"unknown dataset {name!r}") from None

    def project(self, token: str) -> ProjectConfig:
        try:
            return self.projects[token]
        except KeyError:
            raise NotFoundError(f"unknown project {token!r}") from None

    def dataset_of(self, token: str) -> DatasetConfig:
        return self.dataset(self.project(token).dataset)

    def placement(self, token: str) -> Placement:
        self.project(token)
        return self.placements.get(token, Placement())

    def set_placement(self, token: str, placement: Placement) -> None:
        """Atomic placement switch (single-writer; routing reads see old or new)."""
        placement.validate()
        with self._mutex:
            self.placements[token] = placement
            self._save_placement()

    def backend(self, name: str) -> Backend:
        try:
            return self.backends[name]
        except KeyError:
            raise NotFoundError(f"unknown backend {name!r}") from None

    # -- write gating -----------------------------------------------------

    @contextmanager
    def lock_project(self, token: str):
        """Hold a project read-only for a batch job; yields the job's ticket."""
        ticket = JobTicket(token)
        with self._mutex:
            if token in self._locks:
                raise ReadOnlyError(f"project {token!r} already locked for a batch job")
            self._locks[token] = ticket
        try:
            yield ticket
        finally:
            with self._mutex:
                if self._locks.get(token) is ticket:
                    del self._locks[token]

    def check_writable(self, token: str, ticket: JobTicket | None = None) -> None:
        cfg = self.project(token)
        if cfg.read_only:
            raise ReadOnlyError(f"project {token!r} is read-only")
        held = self._locks.get(token)
        if held is not None and held is not ticket:
            raise ReadOnlyError(f"project {token!r} is locked by a background batch job")

    def close(self) -> None:
        for b in self.backends.values():
            b.close()
