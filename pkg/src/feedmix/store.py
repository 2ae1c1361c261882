"""Durable feed-config persistence: one canonical JSON document per feed.

Writes go through write-temp/fsync/rename so a crash at any point leaves
either the old document or the new one, never a torn file. An in-memory
index serves reads; mutations take a lock and bump the version by exactly 1.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
import threading
import time
import uuid
from pathlib import Path
from typing import Any, Callable, Mapping

from .model import (
    DEFAULT_SORT,
    FeedConfig,
    FilterPredicate,
    SortSpec,
    ValidationError,
    canonical_json,
    config_from_dict,
    config_to_dict,
    format_timestamp,
    parse_timestamp,
    predicate_from_dict,
    sort_from_dict,
    validate_feed_config,
)

logger = logging.getLogger(__name__)


class NotFound(KeyError):
    """No feed with that id."""

    def __init__(self, feed_id: str):
        super().__init__(feed_id)
        self.feed_id = feed_id

    def __str__(self) -> str:
        return f"no such feed: {self.feed_id}"


class VersionConflict(Exception):
    """Optimistic concurrency check failed."""

    def __init__(self, feed_id: str, expected: int, actual: int):
        super().__init__(f"feed {feed_id}: expected version {expected}, store has {actual}")
        self.feed_id = feed_id
        self.expected = expected
        self.actual = actual


def _atomic_write(path: Path, data: bytes) -> None:
    """Write-temp, fsync, rename. Interruption leaves the old file intact."""
    fd, tmp_name = tempfile.mkstemp(dir=str(path.parent), prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, path)
    finally:
        if os.path.exists(tmp_name):
            try:
                os.unlink(tmp_name)
            except OSError:  # pragma: no cover - best effort cleanup
                pass


class ConfigStore:
    """Feed configs in `<root>/feeds/<id>.json`, loaded eagerly at startup.

    Stored documents wrap the canonical config with its creation time:
    {"config": {...}, "createdAt": "..."}. Leftover *.tmp files from
    interrupted writes are ignored.
    """

    def __init__(self, root: Path, clock: Callable[[], float] = time.time):
        self.root = Path(root)
        self.feeds_dir = self.root / "feeds"
        self.feeds_dir.mkdir(parents=True, exist_ok=True)
        self._clock = clock
        self._lock = threading.Lock()
        self._configs: dict[str, FeedConfig] = {}
        self._created: dict[str, float] = {}
        self._load()

    def _load(self) -> None:
        for path in sorted(self.feeds_dir.glob("*.json")):
            try:
                document = json.loads(path.read_text(encoding="utf-8"))
                config = config_from_dict(document["config"])
                created = parse_timestamp(document["createdAt"])
            except (ValidationError, ValueError, KeyError, TypeError) as exc:
                raise ValidationError(f"corrupt feed document {path}: {exc}") from None
            self._configs[config.id] = config
            self._created[config.id] = created

    def _path(self, feed_id: str) -> Path:
        return self.feeds_dir / f"{feed_id}.json"

    def _persist(self, config: FeedConfig, created_at: float) -> None:
        document = {"config": config_to_dict(config), "createdAt": format_timestamp(created_at)}
        _atomic_write(self._path(config.id), canonical_json(document).encode("utf-8"))

    # -- operations ----------------------------------------------------------

    def create_feed(
        self,
        owner_id: str,
        name: str,
        *,
        sources: tuple[str, ...] | list[str] = (),
        filters: tuple = (),
        sort=None,
    ) -> FeedConfig:
        """Create a feed at version 1. Duplicate names are allowed; ids are authoritative.

        `filters` and `sort` accept either model objects or their wire form.
        """
        if not owner_id.strip():
            raise ValidationError("owner id must be non-empty")
        with self._lock:
            now = self._clock()
            config = FeedConfig(
                id=uuid.uuid4().hex[:12],
                owner_id=owner_id,
                name=name,
                sources=tuple(sources),
                filters=tuple(
                    p if isinstance(p, FilterPredicate) else predicate_from_dict(p) for p in filters
                ),
                sort=(
                    DEFAULT_SORT
                    if sort is None
                    else (sort if isinstance(sort, SortSpec) else sort_from_dict(sort))
                ),
                version=1,
                updated_at=now,
            )
            config, warnings = validate_feed_config(config)
            for warning in warnings:
                logger.warning("feed %s: %s", config.id, warning)
            self._persist(config, created_at=now)
            self._configs[config.id] = config
            self._created[config.id] = now
            return config

    def update_feed(
        self,
        feed_id: str,
        patch: Mapping[str, Any],
        *,
        expected_version: int | None = None,
    ) -> FeedConfig:
        """Apply a partial update ({name, sources, filters, sort} in wire form).

        The store owns version numbers: any client-sent version is ignored
        and the stored version increments by exactly 1. `expected_version`
        enables optimistic concurrency.
        """
        with self._lock:
            current = self._configs.get(feed_id)
            if current is None:
                raise NotFound(feed_id)
            if expected_version is not None and expected_version != current.version:
                raise VersionConflict(feed_id, expected_version, current.version)
            updated = self._apply_patch(current, patch)
            updated, warnings = validate_feed_config(updated)
            for warning in warnings:
                logger.warning("feed %s: %s", feed_id, warning)
            self._persist(updated, created_at=self._created[feed_id])
            self._configs[feed_id] = updated
            return updated

    def _apply_patch(self, current: FeedConfig, patch: Mapping[str, Any]) -> FeedConfig:
        unknown = set(patch) - {"name", "sources", "filters", "sort", "id", "ownerId", "version", "updatedAt"}
        if unknown:
            raise ValidationError(f"unknown config fields: {', '.join(sorted(unknown))}")
        name = patch.get("name", current.name)
        if not isinstance(name, str):
            raise ValidationError("name must be a string")
        sources = patch.get("sources", current.sources)
        if not isinstance(sources, (list, tuple)) or not all(isinstance(s, str) for s in sources):
            raise ValidationError("sources must be a list of strings")
        if "filters" in patch:
            raw_filters = patch["filters"]
            if not isinstance(raw_filters, list):
                raise ValidationError("filters must be a list")
            filters = tuple(predicate_from_dict(p) for p in raw_filters)
        else:
            filters = current.filters
        sort = sort_from_dict(patch["sort"]) if "sort" in patch else current.sort
        return FeedConfig(
            id=current.id,
            owner_id=current.owner_id,
            name=name,
            sources=tuple(sources),
            filters=filters,
            sort=sort,
            version=current.version + 1,
            updated_at=self._clock(),
        )

    def get_feed(self, feed_id: str) -> FeedConfig:
        config = self._configs.get(feed_id)
        if config is None:
            raise NotFound(feed_id)
        return config

    def list_feeds(self, owner_id: str | None = None) -> list[FeedConfig]:
        """All feeds (optionally one owner's), in creation order."""
        configs = [c for c in self._configs.values() if owner_id is None or c.owner_id == owner_id]
        configs.sort(key=lambda c: (self._created[c.id], c.id))
        return configs

    def delete_feed(self, feed_id: str) -> None:
        """Idempotent: deleting a missing feed is a no-op."""
        with self._lock:
            self._configs.pop(feed_id, None)
            self._created.pop(feed_id, None)
            try:
                os.unlink(self._path(feed_id))
            except FileNotFoundError:
                pass
