"""HTTP service: feed CRUD, composed-feed pagination, and source discovery."""

from __future__ import annotations

import logging
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from fastapi import Body, FastAPI, Query, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .engine import (
    BATCH_TARGET,
    BATCH_WARNING_ID,
    MAX_FETCH_ROUNDS,
    PAGE_SIZE,
    CursorInvalidated,
    FeedSession,
    candidate_highlights,
)
from .model import (
    FeedConfig,
    Post,
    PriorityBreakdown,
    ValidationError,
    breakdown_to_dict,
    config_to_dict,
    decode_cursor,
    encode_cursor,
    feature_to_dict,
    format_timestamp,
)
from .sources import (
    FileCredentials,
    FixtureRegistry,
    HttpFeedClient,
    SourceResolver,
)
from .store import ConfigStore, NotFound, VersionConflict

logger = logging.getLogger(__name__)

DEFAULT_LIMIT = 30
MAX_LIMIT = 100


@dataclass
class ServiceSettings:
    store_dir: Path
    fixture_dir: Path | None = None
    upstream_base: str | None = None
    api_token: str | None = None
    batch_target: int = BATCH_TARGET
    page_size: int = PAGE_SIZE
    max_rounds: int = MAX_FETCH_ROUNDS
    parallel_fetch: bool = True
    session_cache_size: int = 32
    ui_dir: Path | None = None
    clock: Callable[[], float] = field(default=time.time)


class ApiError(Exception):
    """Carried to the error-envelope handler: {code, message, details}."""

    def __init__(self, status: int, code: str, message: str, details: Any = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.details = details


def _error_response(status: int, code: str, message: str, details: Any = None) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"code": code, "message": message, "details": details},
    )


class SessionCache:
    """LRU of live pagination sessions, one per feed, plus per-feed locks.

    Composition for a single feed is serialized by its lock; distinct feeds
    compose concurrently.
    """

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._sessions: OrderedDict[str, FeedSession] = OrderedDict()
        self._locks: dict[str, threading.Lock] = {}
        self._meta = threading.Lock()

    def lock_for(self, feed_id: str) -> threading.Lock:
        with self._meta:
            lock = self._locks.get(feed_id)
            if lock is None:
                lock = self._locks[feed_id] = threading.Lock()
            return lock

    def get(self, feed_id: str) -> FeedSession | None:
        with self._meta:
            session = self._sessions.get(feed_id)
            if session is not None:
                self._sessions.move_to_end(feed_id)
            return session

    def put(self, feed_id: str, session: FeedSession) -> None:
        with self._meta:
            self._sessions[feed_id] = session
            self._sessions.move_to_end(feed_id)
            while len(self._sessions) > self.capacity:
                self._sessions.popitem(last=False)

    def drop(self, feed_id: str) -> None:
        with self._meta:
            self._sessions.pop(feed_id, None)


def _post_payload(
    post: Post,
    breakdown: PriorityBreakdown | None,
) -> dict[str, Any]:
    payload: dict[str, Any] = {
        "uri": post.uri,
        "authorId": post.author_id,
        "authorHandle": post.author_handle,
        "text": post.text,
        "createdAt": format_timestamp(post.created_at),
        "sourceId": post.source_id,
        "sourceIndex": post.source_index,
        "highlights": [
            {"feature": feature_to_dict(feature), "span": list(span) if span else None}
            for span, feature in candidate_highlights(post)
        ],
    }
    if breakdown is not None:
        payload["breakdown"] = breakdown_to_dict(breakdown)
    return payload


def _parse_if_match(value: str | None) -> int | None:
    if value is None:
        return None
    token = value.strip()
    if token.startswith("W/"):
        token = token[2:]
    token = token.strip('"')
    try:
        return int(token)
    except ValueError:
        raise ValidationError(f"bad If-Match header: {value!r}") from None


def build_resolver(settings: ServiceSettings) -> SourceResolver:
    fixtures = FixtureRegistry(settings.fixture_dir) if settings.fixture_dir else None
    http = None
    if settings.upstream_base:
        credentials = FileCredentials(Path(settings.store_dir) / "credentials.json")
        http = HttpFeedClient(settings.upstream_base, credentials=credentials)
    return SourceResolver(fixtures=fixtures, http=http)


def create_app(
    settings: ServiceSettings,
    *,
    store: ConfigStore | None = None,
    resolver: SourceResolver | None = None,
) -> FastAPI:
    app = FastAPI(title="feedmix", version="0.1.0")
    store = store if store is not None else ConfigStore(settings.store_dir, clock=settings.clock)
    resolver = resolver if resolver is not None else build_resolver(settings)
    sessions = SessionCache(settings.session_cache_size)
    app.state.settings = settings
    app.state.store = store
    app.state.resolver = resolver
    app.state.sessions = sessions

    session_knobs = dict(
        target=settings.batch_target,
        page_size=settings.page_size,
        max_rounds=settings.max_rounds,
        parallel=settings.parallel_fetch,
    )

    # -- error envelope -------------------------------------------------------

    @app.exception_handler(ApiError)
    async def _api_error(_: Request, exc: ApiError) -> JSONResponse:
        return _error_response(exc.status, exc.code, exc.message, exc.details)

    @app.exception_handler(ValidationError)
    async def _validation_error(_: Request, exc: ValidationError) -> JSONResponse:
        return _error_response(400, "validation_error", str(exc))

    @app.exception_handler(NotFound)
    async def _not_found(_: Request, exc: NotFound) -> JSONResponse:
        return _error_response(404, "not_found", str(exc))

    @app.exception_handler(VersionConflict)
    async def _version_conflict(_: Request, exc: VersionConflict) -> JSONResponse:
        return _error_response(409, "version_conflict", str(exc))

    @app.exception_handler(CursorInvalidated)
    async def _cursor_invalidated(_: Request, exc: CursorInvalidated) -> JSONResponse:
        return _error_response(410, "cursor_invalidated", str(exc))

    @app.exception_handler(RequestValidationError)
    async def _request_validation(_: Request, exc: RequestValidationError) -> JSONResponse:
        return _error_response(400, "validation_error", "invalid request", details=exc.errors())

    if settings.api_token:

        @app.middleware("http")
        async def _require_token(request: Request, call_next):
            if request.url.path.startswith("/v1"):
                expected = f"Bearer {settings.api_token}"
                if request.headers.get("authorization") != expected:
                    return _error_response(401, "unauthorized", "missing or invalid bearer token")
            return await call_next(request)

    # -- feed CRUD -------------------------------------------------------------

    @app.get("/v1/feeds")
    def list_feeds(owner: str | None = Query(default=None)) -> list[dict[str, Any]]:
        return [config_to_dict(c) for c in store.list_feeds(owner)]

    @app.post("/v1/feeds", status_code=201)
    def create_feed(response: Response, payload: dict[str, Any] = Body(...)) -> dict[str, Any]:
        owner = payload.get("ownerId")
        name = payload.get("name")
        if not isinstance(owner, str) or not isinstance(name, str):
            raise ValidationError("ownerId and name are required strings")
        sources = payload.get("sources", [])
        if not isinstance(sources, list) or not all(isinstance(s, str) for s in sources):
            raise ValidationError("sources must be a list of strings")
        config = store.create_feed(
            owner,
            name,
            sources=sources,
            filters=payload.get("filters", []),
            sort=payload.get("sort"),
        )
        response.headers["ETag"] = f'"{config.version}"'
        return config_to_dict(config)

    @app.get("/v1/feeds/{feed_id}")
    def get_feed(feed_id: str, response: Response) -> dict[str, Any]:
        config = store.get_feed(feed_id)
        response.headers["ETag"] = f'"{config.version}"'
        return config_to_dict(config)

    @app.put("/v1/feeds/{feed_id}")
    def update_feed(
        feed_id: str,
        request: Request,
        response: Response,
        payload: dict[str, Any] = Body(...),
    ) -> dict[str, Any]:
        expected = _parse_if_match(request.headers.get("if-match"))
        config = store.update_feed(feed_id, payload, expected_version=expected)
        sessions.drop(feed_id)
        response.headers["ETag"] = f'"{config.version}"'
        return config_to_dict(config)

    @app.delete("/v1/feeds/{feed_id}", status_code=204)
    def delete_feed(feed_id: str) -> Response:
        store.delete_feed(feed_id)
        sessions.drop(feed_id)
        return Response(status_code=204)

    # -- composed feed ---------------------------------------------------------

    @app.get("/v1/feeds/{feed_id}/posts")
    def get_posts(
        feed_id: str,
        cursor: str | None = Query(default=None),
        limit: int = Query(default=DEFAULT_LIMIT),
        breakdown: bool = Query(default=False),
    ) -> dict[str, Any]:
        if limit < 1 or limit > MAX_LIMIT:
            raise ValidationError(f"limit must be 1..{MAX_LIMIT}, got {limit}")
        config = store.get_feed(feed_id)
        if not config.sources:
            return {
                "feedId": feed_id,
                "configVersion": config.version,
                "posts": [],
                "warnings": [{"sourceId": BATCH_WARNING_ID, "message": "feed has no sources"}],
            }
        fetch = resolver.fetcher(config.owner_id)
        with sessions.lock_for(feed_id):
            if cursor is not None:
                position = decode_cursor(cursor)
                if position.config_version != config.version:
                    raise CursorInvalidated(
                        f"cursor is for config version {position.config_version}, "
                        f"current is {config.version}"
                    )
                session = sessions.get(feed_id)
                if session is None or not session.covers(position):
                    # Cold continuation: a throwaway session seeded from the
                    # cursor, so cached head pagination is undisturbed.
                    session = FeedSession.from_cursor(config, position, fetch, **session_knobs)
                posts, breakdowns, next_cursor = session.page(
                    position.batch_index, position.offset, limit
                )
            else:
                session = sessions.get(feed_id)
                if session is None or session.config.version != config.version:
                    session = FeedSession(config, fetch, now=settings.clock(), **session_knobs)
                    sessions.put(feed_id, session)
                posts, breakdowns, next_cursor = session.page(session.base_batch, 0, limit)
            degraded = session.degraded_sources
            warnings = list(session.warnings)
        if not posts and degraded and degraded >= set(config.sources):
            raise ApiError(
                502,
                "all_sources_failed",
                "every source failed to produce posts",
                details=[{"sourceId": sid, "message": msg} for sid, msg in warnings],
            )
        body: dict[str, Any] = {
            "feedId": feed_id,
            "configVersion": config.version,
            "posts": [
                _post_payload(post, breakdowns[i] if breakdown and breakdowns is not None else None)
                for i, post in enumerate(posts)
            ],
            "warnings": [{"sourceId": sid, "message": msg} for sid, msg in warnings],
        }
        if next_cursor is not None:
            body["cursor"] = encode_cursor(next_cursor)
        return body

    @app.post("/v1/feeds/{feed_id}/refresh", status_code=204)
    def refresh_feed(feed_id: str) -> Response:
        store.get_feed(feed_id)  # 404 for unknown feeds
        sessions.drop(feed_id)
        return Response(status_code=204)

    # -- source discovery ------------------------------------------------------

    @app.get("/v1/sources/search")
    def search_sources(
        q: str | None = Query(default=None),
        popular: bool = Query(default=False),
    ) -> list[dict[str, Any]]:
        try:
            return resolver.search(query=q, popular=popular)
        except Exception as exc:  # upstream unreachable or rejecting
            raise ApiError(
                502,
                "upstream_unavailable",
                f"source search failed: {exc}",
                details={"sources": []},
            ) from None

    if settings.ui_dir and Path(settings.ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(settings.ui_dir), html=True), name="ui")

    return app
