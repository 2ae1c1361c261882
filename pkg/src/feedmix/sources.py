"""Paginated access to upstream feeds: local JSONL fixtures and an AT-proto-shaped HTTP client."""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence
from urllib.parse import urlsplit

import httpx

from .model import EXHAUSTED, Cursor, Post, ValidationError, _ExhaustedType, parse_timestamp

logger = logging.getLogger(__name__)

MAX_PAGE_LIMIT = 100

#: Capability handed to the engine: (source_ref, cursor or None, limit) -> SourcePage.
FetchFn = Callable[[str, "str | None", int], "SourcePage"]


class SourceFetchError(Exception):
    """A source could not produce a page (after retries, where applicable)."""

    def __init__(self, source_id: str, message: str):
        super().__init__(message)
        self.source_id = source_id


class FixtureParseError(ValidationError):
    """A fixture file contained a malformed line; the whole fixture is rejected."""

    def __init__(self, path: Path, line_number: int, reason: str):
        super().__init__(f"{path}:{line_number}: {reason}")
        self.path = path
        self.line_number = line_number


@dataclass(frozen=True)
class SourcePage:
    """One page from a source, in upstream order. Adapters never reorder or dedupe."""

    posts: tuple[Post, ...]
    next_cursor: Cursor

    def __post_init__(self) -> None:
        object.__setattr__(self, "posts", tuple(self.posts))


def _clamp_limit(limit: int) -> int:
    if limit < 1 or limit > MAX_PAGE_LIMIT:
        raise ValueError(f"page limit must be 1..{MAX_PAGE_LIMIT}, got {limit}")
    return limit


def _post_from_record(raw: Mapping[str, Any]) -> Post:
    for key in ("uri", "authorId", "authorHandle", "text", "createdAt"):
        if key not in raw:
            raise ValidationError(f"post record missing {key!r}")
    return Post(
        uri=str(raw["uri"]),
        author_id=str(raw["authorId"]),
        author_handle=str(raw["authorHandle"]),
        text=str(raw["text"]),
        created_at=parse_timestamp(raw["createdAt"]),
    )


class FixtureSource:
    """A source backed by an in-memory list of posts, paged by offset.

    Cursors are decimal offsets into the list, so enumeration is exactly
    list order, gap-free and duplicate-free, for any page-size schedule.
    """

    def __init__(self, source_id: str, posts: Sequence[Post]):
        self.source_id = source_id
        self.posts = list(posts)

    @classmethod
    def from_path(cls, path: Path, source_id: str | None = None) -> "FixtureSource":
        """Load a line-delimited JSON fixture. Any bad line rejects the file."""
        posts: list[Post] = []
        with open(path, encoding="utf-8") as handle:
            for line_number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    raw = json.loads(line)
                    if not isinstance(raw, dict):
                        raise ValidationError("post record must be a JSON object")
                    posts.append(_post_from_record(raw))
                except (json.JSONDecodeError, ValidationError) as exc:
                    raise FixtureParseError(path, line_number, str(exc)) from None
        return cls(source_id or path.stem, posts)

    def fetch_page(self, cursor: str | None | _ExhaustedType, limit: int) -> SourcePage:
        limit = _clamp_limit(limit)
        if cursor is EXHAUSTED:
            return SourcePage(posts=(), next_cursor=EXHAUSTED)
        if cursor is None:
            offset = 0
        else:
            try:
                offset = int(cursor)
            except (TypeError, ValueError):
                raise SourceFetchError(self.source_id, f"bad fixture cursor {cursor!r}") from None
            if offset < 0:
                raise SourceFetchError(self.source_id, f"bad fixture cursor {cursor!r}")
        window = self.posts[offset : offset + limit]
        end = offset + len(window)
        next_cursor: Cursor = EXHAUSTED if end >= len(self.posts) else str(end)
        return SourcePage(posts=tuple(window), next_cursor=next_cursor)


class FixtureRegistry:
    """All *.jsonl files in a directory, addressable by file stem."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise ValidationError(f"fixture directory not found: {self.directory}")
        self._sources: dict[str, FixtureSource] = {}
        for path in sorted(self.directory.glob("*.jsonl")):
            source = FixtureSource.from_path(path)
            self._sources[source.source_id] = source

    def source_ids(self) -> list[str]:
        return sorted(self._sources)

    def __contains__(self, source_ref: str) -> bool:
        return source_ref in self._sources

    def fetch_page(self, source_ref: str, cursor: str | None, limit: int) -> SourcePage:
        source = self._sources.get(source_ref)
        if source is None:
            raise SourceFetchError(source_ref, f"unknown fixture source {source_ref!r}")
        return source.fetch_page(cursor, limit)

    def search(self, query: str | None = None) -> list[dict[str, Any]]:
        """Descriptors for fixtures whose id contains the query (case-insensitive)."""
        needle = (query or "").casefold()
        out = []
        for sid in self.source_ids():
            if needle and needle not in sid.casefold():
                continue
            out.append({"id": sid, "name": sid, "kind": "fixture", "postCount": len(self._sources[sid].posts)})
        return out


class TokenBucket:
    """Blocking token bucket; one bucket per upstream host keeps us polite."""

    def __init__(
        self,
        rate: float = 5.0,
        burst: int = 10,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.rate = rate
        self.burst = burst
        self._clock = clock
        self._sleep = sleep
        self._tokens = float(burst)
        self._updated = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.burst, self._tokens + (now - self._updated) * self.rate)
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


class CredentialProvider:
    """Maps an owner id to an upstream bearer token, or None for anonymous."""

    def token_for(self, owner_id: str | None) -> str | None:  # pragma: no cover - interface
        raise NotImplementedError


class FileCredentials(CredentialProvider):
    """Credentials from a JSON file of {ownerId: token}. Missing file = anonymous."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._tokens: dict[str, str] = {}
        if self.path.is_file():
            raw = json.loads(self.path.read_text(encoding="utf-8"))
            if not isinstance(raw, dict):
                raise ValidationError(f"credentials file must be a JSON object: {self.path}")
            self._tokens = {str(k): str(v) for k, v in raw.items()}

    def token_for(self, owner_id: str | None) -> str | None:
        if owner_id is None:
            return None
        return self._tokens.get(owner_id)


# Retry budget covers transient failures only: network errors, 5xx, and 429
# (which waits out Retry-After). 4xx and malformed bodies are permanent.
DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_BACKOFF_BASE = 0.2
RETRY_AFTER_CAP = 30.0


class HttpFeedClient:
    """Client for upstream feed endpoints shaped like the AT-proto feed API.

    GET {base}/xrpc/app.bsky.feed.getFeedSkeleton?feed=&cursor=&limit=
    Feed entries may be hydrated post objects or bare uri skeletons;
    both are normalized into Post (skeletons carry no text to filter on).
    """

    def __init__(
        self,
        base_url: str,
        *,
        credentials: CredentialProvider | None = None,
        timeout: float = 10.0,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        backoff_base: float = DEFAULT_BACKOFF_BASE,
        rate: float = 5.0,
        burst: int = 10,
        sleep: Callable[[float], None] = time.sleep,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.credentials = credentials
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._client = httpx.Client(timeout=timeout, transport=transport)
        host = urlsplit(self.base_url).netloc or self.base_url
        self._bucket = TokenBucket(rate=rate, burst=burst, sleep=sleep)
        self._host = host

    def close(self) -> None:
        self._client.close()

    def _headers(self, owner_id: str | None) -> dict[str, str]:
        token = self.credentials.token_for(owner_id) if self.credentials else None
        return {"Authorization": f"Bearer {token}"} if token else {}

    def _request(self, path: str, params: dict[str, Any], owner_id: str | None, what: str) -> Any:
        attempt = 0
        while True:
            attempt += 1
            self._bucket.acquire()
            try:
                response = self._client.get(self.base_url + path, params=params, headers=self._headers(owner_id))
            except httpx.HTTPError as exc:
                if attempt >= self.max_attempts:
                    raise SourceFetchError(what, f"network error after {attempt} attempts: {exc}") from None
                self._sleep(self.backoff_base * 2 ** (attempt - 1))
                continue
            if response.status_code == 429:
                if attempt >= self.max_attempts:
                    raise SourceFetchError(what, "rate limited by upstream")
                self._sleep(self._retry_after(response, attempt))
                continue
            if response.status_code >= 500:
                if attempt >= self.max_attempts:
                    raise SourceFetchError(what, f"upstream error {response.status_code}")
                self._sleep(self.backoff_base * 2 ** (attempt - 1))
                continue
            if response.status_code >= 400:
                # Permanent: never retried.
                raise SourceFetchError(what, f"upstream rejected request: {response.status_code}")
            try:
                return response.json()
            except ValueError:
                raise SourceFetchError(what, "malformed upstream response body") from None

    def _retry_after(self, response: httpx.Response, attempt: int) -> float:
        header = response.headers.get("Retry-After")
        if header:
            try:
                return min(float(header), RETRY_AFTER_CAP)
            except ValueError:
                pass
        return self.backoff_base * 2 ** (attempt - 1)

    def fetch_page(self, feed_uri: str, cursor: str | None, limit: int, owner_id: str | None = None) -> SourcePage:
        limit = _clamp_limit(limit)
        params: dict[str, Any] = {"feed": feed_uri, "limit": limit}
        if cursor:
            params["cursor"] = cursor
        payload = self._request("/xrpc/app.bsky.feed.getFeedSkeleton", params, owner_id, what=feed_uri)
        if not isinstance(payload, dict) or not isinstance(payload.get("feed", None), list):
            raise SourceFetchError(feed_uri, "malformed upstream response body")
        posts = []
        for entry in payload["feed"]:
            try:
                posts.append(self._normalize_entry(entry))
            except ValidationError as exc:
                raise SourceFetchError(feed_uri, f"malformed feed entry: {exc}") from None
        next_raw = payload.get("cursor")
        next_cursor: Cursor = next_raw if isinstance(next_raw, str) and next_raw else EXHAUSTED
        return SourcePage(posts=tuple(posts), next_cursor=next_cursor)

    @staticmethod
    def _normalize_entry(entry: Any) -> Post:
        # Entries arrive either wrapped ({"post": ...}) or as the record itself.
        item = entry["post"] if isinstance(entry, dict) and "post" in entry else entry
        if isinstance(item, str):
            # Skeleton: uri only. Nothing to filter on, but the shape is legal.
            return Post(uri=item, author_id="unknown", author_handle="", text="", created_at=0.0)
        if not isinstance(item, dict):
            raise ValidationError(f"unrecognized feed entry: {entry!r}")
        if "authorId" in item:
            return _post_from_record(item)
        # Hydrated view: author/record sub-objects.
        author = item.get("author") or {}
        record = item.get("record") or {}
        uri = item.get("uri")
        if not uri:
            raise ValidationError("feed entry missing uri")
        return Post(
            uri=str(uri),
            author_id=str(author.get("did") or "unknown"),
            author_handle=str(author.get("handle") or ""),
            text=str(record.get("text") or ""),
            created_at=parse_timestamp(record.get("createdAt", 0)),
        )

    def search_feeds(self, query: str | None = None) -> list[dict[str, Any]]:
        """Popular/search listing of feed generators upstream."""
        params: dict[str, Any] = {}
        if query:
            params["query"] = query
        payload = self._request("/xrpc/app.bsky.unspecced.getPopularFeedGenerators", params, None, what=self._host)
        feeds = payload.get("feeds", []) if isinstance(payload, dict) else []
        out = []
        for item in feeds:
            if isinstance(item, dict) and item.get("uri"):
                out.append(
                    {
                        "id": str(item["uri"]),
                        "name": str(item.get("displayName") or item["uri"]),
                        "kind": "upstream",
                    }
                )
        return out


class SourceResolver:
    """Routes source refs to the fixture registry or the upstream client."""

    def __init__(self, fixtures: FixtureRegistry | None = None, http: HttpFeedClient | None = None):
        self.fixtures = fixtures
        self.http = http

    def fetcher(self, owner_id: str | None = None) -> FetchFn:
        def fetch(source_ref: str, cursor: str | None, limit: int) -> SourcePage:
            if self.fixtures is not None and source_ref in self.fixtures:
                return self.fixtures.fetch_page(source_ref, cursor, limit)
            if self.http is not None and (source_ref.startswith("at://") or source_ref.startswith("http")):
                return self.http.fetch_page(source_ref, cursor, limit, owner_id=owner_id)
            raise SourceFetchError(source_ref, f"unresolvable source ref {source_ref!r}")

        return fetch

    def search(self, query: str | None = None, popular: bool = False) -> list[dict[str, Any]]:
        if self.fixtures is not None:
            return self.fixtures.search(None if popular else query)
        if self.http is not None:
            return self.http.search_feeds(query)
        return []
