"""Feed composition: the fetch/filter loop, interleaving, sorting, and pagination."""

from __future__ import annotations

import itertools
import logging
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

from .model import (
    EXHAUSTED,
    Cursor,
    FeatureKind,
    Feature,
    FeedConfig,
    FeedCursor,
    Post,
    PriorityBreakdown,
    SortMode,
    SortRule,
    SortSpec,
    matches,
    passes_filters,
)
from .sources import FetchFn, SourceFetchError, SourcePage

logger = logging.getLogger(__name__)

PAGE_SIZE = 100
BATCH_TARGET = 500
# Bounds scanning per batch: with the default page size this caps each
# source at 2000 scanned posts even when filters admit almost nothing.
MAX_FETCH_ROUNDS = 20

#: Pseudo source id for batch-level warnings (scan cap, empty config).
BATCH_WARNING_ID = "*"


class CursorInvalidated(Exception):
    """The cursor was minted against a different config version."""


def priority(post: Post, rules: Sequence[SortRule], now: float) -> PriorityBreakdown:
    """Score one post: -log(2 + age_hours) plus the weight of every matched rule.

    Natural log; age clamps at zero for future-dated posts; each rule
    contributes at most once no matter how often its feature occurs.
    """
    age_hours = max(0.0, (now - post.created_at) / 3600.0)
    age_penalty = -math.log(2.0 + age_hours)
    matched = tuple((rule, rule.weight) for rule in rules if matches(rule.feature, post))
    total = age_penalty + sum(contribution for _, contribution in matched)
    return PriorityBreakdown(age_penalty=age_penalty, matched=matched, total=total)


def interleave(lists: Sequence[Sequence[Post]]) -> list[Post]:
    """Round-robin merge preserving relative order; exhausted lists are skipped."""
    merged: list[Post] = []
    for tier in itertools.zip_longest(*lists):
        merged.extend(post for post in tier if post is not None)
    return merged


def sort_batch(
    posts: Sequence[Post], sort: SortSpec, now: float
) -> tuple[list[Post], list[PriorityBreakdown] | None]:
    """Order a batch per the sort spec.

    Interleaved keeps the input order. Chronological is a stable sort newest
    to oldest. Priority is a stable sort by descending total, so equal totals
    keep their interleaved order.
    """
    if sort.mode is SortMode.INTERLEAVED:
        return list(posts), None
    if sort.mode is SortMode.CHRONOLOGICAL:
        return sorted(posts, key=lambda p: p.created_at, reverse=True), None
    scored = [(post, priority(post, sort.rules, now)) for post in posts]
    scored.sort(key=lambda pair: pair[1].total, reverse=True)
    return [post for post, _ in scored], [breakdown for _, breakdown in scored]


@dataclass
class Batch:
    """One composed batch plus the bookkeeping needed to continue after it."""

    posts: list[Post]
    breakdowns: list[PriorityBreakdown] | None
    source_cursors_after: dict[str, Cursor]
    scanned_count: int
    warnings: list[tuple[str, str]] = field(default_factory=list)
    source_scanned: dict[str, int] = field(default_factory=dict)


def compose_batch(
    config: FeedConfig,
    cursors_in: dict[str, Cursor] | None,
    now: float,
    fetch: FetchFn,
    *,
    target: int = BATCH_TARGET,
    page_size: int = PAGE_SIZE,
    max_rounds: int = MAX_FETCH_ROUNDS,
    index_base: dict[str, int] | None = None,
    parallel: bool = False,
) -> Batch:
    """Fetch, filter, interleave, sort, and truncate one batch.

    Each round pulls one page from every non-exhausted, non-degraded source
    (concurrently when `parallel`, but always merged in config source order,
    so output is independent of fetch completion order). Rounds repeat until
    the accepted count reaches `target`, every source is exhausted, or
    `max_rounds` is hit. Posts are deduped by uri (first occurrence in fetch
    order wins) before filtering; a source that raises SourceFetchError is
    degraded for this batch only and surfaced as a warning, its cursor left
    where it was so the next batch can retry.
    """
    if target < 1:
        raise ValueError(f"batch target must be >= 1, got {target}")
    source_order = list(dict.fromkeys(config.sources))
    cursors: dict[str, Cursor] = dict(cursors_in or {})
    counters = {sid: (index_base or {}).get(sid, 0) for sid in source_order}
    accepted: dict[str, list[Post]] = {sid: [] for sid in source_order}
    source_scanned = {sid: 0 for sid in source_order}
    seen: set[str] = set()
    warnings: list[tuple[str, str]] = []
    degraded: set[str] = set()
    scanned = 0
    accepted_total = 0
    rounds = 0

    while accepted_total < target:
        active = [sid for sid in source_order if cursors.get(sid) is not EXHAUSTED and sid not in degraded]
        if not active:
            break
        if rounds >= max_rounds:
            warnings.append((BATCH_WARNING_ID, f"scan cap reached after {rounds} fetch rounds"))
            break
        for sid, result in _fetch_round(active, cursors, fetch, page_size, parallel):
            if isinstance(result, SourceFetchError):
                degraded.add(sid)
                warnings.append((sid, str(result)))
                logger.warning("source %s degraded for this batch: %s", sid, result)
                continue
            for post in result.posts:
                stamped = replace(post, source_id=sid, source_index=counters[sid])
                counters[sid] += 1
                source_scanned[sid] += 1
                scanned += 1
                if stamped.uri in seen:
                    continue
                seen.add(stamped.uri)
                if passes_filters(stamped, config.filters):
                    accepted[sid].append(stamped)
                    accepted_total += 1
            cursors[sid] = result.next_cursor
        rounds += 1

    merged = interleave([accepted[sid] for sid in source_order])
    posts, breakdowns = sort_batch(merged, config.sort, now)
    if len(posts) > target:
        posts = posts[:target]
        if breakdowns is not None:
            breakdowns = breakdowns[:target]
    return Batch(
        posts=posts,
        breakdowns=breakdowns,
        source_cursors_after=cursors,
        scanned_count=scanned,
        warnings=warnings,
        source_scanned=source_scanned,
    )


def _fetch_round(
    active: Sequence[str],
    cursors: dict[str, Cursor],
    fetch: FetchFn,
    page_size: int,
    parallel: bool,
) -> list[tuple[str, SourcePage | SourceFetchError]]:
    def call(sid: str) -> SourcePage | SourceFetchError:
        state = cursors.get(sid)
        cursor = state if isinstance(state, str) else None
        try:
            return fetch(sid, cursor, page_size)
        except SourceFetchError as exc:
            return exc

    if parallel and len(active) > 1:
        with ThreadPoolExecutor(max_workers=len(active)) as pool:
            futures = [(sid, pool.submit(call, sid)) for sid in active]
            # Collection order is fixed by config source order regardless of
            # which future finishes first; that is the determinism contract.
            return [(sid, future.result()) for sid, future in futures]
    return [(sid, call(sid)) for sid in active]


class FeedSession:
    """Lazily composed batches behind a frozen clock, served as contiguous slices.

    One session corresponds to one pagination timeline: the clock is frozen
    at creation so every batch it composes (and recomposes) is deterministic.
    Sessions can start at the head or be seeded from a cursor after a cold
    restart.
    """

    def __init__(
        self,
        config: FeedConfig,
        fetch: FetchFn,
        now: float | None = None,
        *,
        target: int = BATCH_TARGET,
        page_size: int = PAGE_SIZE,
        max_rounds: int = MAX_FETCH_ROUNDS,
        parallel: bool = False,
        base_batch: int = 0,
        initial_cursors: dict[str, Cursor] | None = None,
    ):
        self.config = config
        self.fetch = fetch
        self.now = time.time() if now is None else now
        self.target = target
        self.page_size = page_size
        self.max_rounds = max_rounds
        self.parallel = parallel
        self.base_batch = base_batch
        self.cursors: dict[str, Cursor] = dict(initial_cursors or {})
        self.posts: list[Post] = []
        self.breakdowns: list[PriorityBreakdown] | None = (
            [] if config.sort.mode is SortMode.PRIORITY else None
        )
        self.batch_sizes: list[int] = []
        self.batch_start_cursors: list[dict[str, Cursor]] = []
        self.counters: dict[str, int] = {}
        self.scanned_count = 0
        self.warnings: list[tuple[str, str]] = []
        # exhausted: every source is done, no cursor will ever be minted again.
        # _stalled: the last compose scanned a full batch's worth and admitted
        # nothing; stop extending for the current request but keep the cursor
        # so a follow-up request can push the scan further.
        self.exhausted = not config.sources
        self._stalled = False

    @classmethod
    def from_cursor(cls, config: FeedConfig, cursor: FeedCursor, fetch: FetchFn, **knobs) -> "FeedSession":
        if cursor.config_version != config.version:
            raise CursorInvalidated(
                f"cursor is for config version {cursor.config_version}, current is {config.version}"
            )
        return cls(
            config,
            fetch,
            now=cursor.session_now,
            base_batch=cursor.batch_index,
            initial_cursors=dict(cursor.per_source),
            **knobs,
        )

    @property
    def degraded_sources(self) -> set[str]:
        return {sid for sid, _ in self.warnings if sid != BATCH_WARNING_ID}

    def covers(self, cursor: FeedCursor) -> bool:
        """Whether this session can serve the cursor position directly."""
        return (
            cursor.config_version == self.config.version
            and cursor.session_now == self.now
            and self.base_batch <= cursor.batch_index <= self.base_batch + len(self.batch_sizes)
        )

    def _compose_more(self) -> bool:
        """Compose one more batch; False when nothing more can be served now."""
        if self.exhausted or self._stalled:
            return False
        start_cursors = dict(self.cursors)
        batch = compose_batch(
            self.config,
            self.cursors,
            self.now,
            self.fetch,
            target=self.target,
            page_size=self.page_size,
            max_rounds=self.max_rounds,
            index_base=self.counters,
            parallel=self.parallel,
        )
        self.cursors = dict(batch.source_cursors_after)
        for sid, count in batch.source_scanned.items():
            self.counters[sid] = self.counters.get(sid, 0) + count
        self.scanned_count += batch.scanned_count
        self.warnings.extend(batch.warnings)
        if all(self.cursors.get(sid) is EXHAUSTED for sid in self.config.sources):
            self.exhausted = True
        if not batch.posts:
            self._stalled = True
            return False
        self.batch_start_cursors.append(start_cursors)
        self.batch_sizes.append(len(batch.posts))
        self.posts.extend(batch.posts)
        if self.breakdowns is not None and batch.breakdowns is not None:
            self.breakdowns.extend(batch.breakdowns)
        return True

    def page(
        self, batch_index: int, offset: int, limit: int
    ) -> tuple[list[Post], list[PriorityBreakdown] | None, FeedCursor | None]:
        """Serve `limit` posts starting at (batch_index, offset), composing as needed.

        Returns the slice, its breakdowns (priority mode only), and the
        cursor for the next position, or None when the feed is exhausted.
        """
        self._stalled = False
        while batch_index - self.base_batch > len(self.batch_sizes) and self._compose_more():
            pass
        relative = batch_index - self.base_batch
        if relative < 0 or relative > len(self.batch_sizes):
            return [], ([] if self.breakdowns is not None else None), None
        start = sum(self.batch_sizes[:relative]) + offset
        while len(self.posts) < start + limit and self._compose_more():
            pass
        posts = self.posts[start : start + limit]
        breakdowns = self.breakdowns[start : start + limit] if self.breakdowns is not None else None
        return posts, breakdowns, self._mint(start + len(posts))

    def _mint(self, position: int) -> FeedCursor | None:
        accumulated = 0
        for i, size in enumerate(self.batch_sizes):
            if position < accumulated + size:
                return FeedCursor(
                    config_version=self.config.version,
                    per_source=dict(self.batch_start_cursors[i]),
                    batch_index=self.base_batch + i,
                    offset=position - accumulated,
                    session_now=self.now,
                )
            accumulated += size
        if self.exhausted:
            return None
        return FeedCursor(
            config_version=self.config.version,
            per_source=dict(self.cursors),
            batch_index=self.base_batch + len(self.batch_sizes),
            offset=0,
            session_now=self.now,
        )


def extend_feed(
    config: FeedConfig,
    cursor: FeedCursor | None,
    now: float | None,
    limit: int,
    fetch: FetchFn,
    **knobs,
) -> tuple[list[Post], list[PriorityBreakdown] | None, FeedCursor | None]:
    """Serve one page of the composed feed.

    With no cursor, starts a fresh session at the head (freezing `now`).
    With a cursor, resumes that session's timeline; raises CursorInvalidated
    when the cursor was minted against a different config version.
    """
    if cursor is None:
        session = FeedSession(config, fetch, now=now, **knobs)
        return session.page(0, 0, limit)
    session = FeedSession.from_cursor(config, cursor, fetch, **knobs)
    return session.page(cursor.batch_index, cursor.offset, limit)


# --- highlight candidates ---------------------------------------------------

# Hashtags swallow their word so "#rustlang" yields one candidate, not two.
_TOKEN_RE = re.compile(r"#\w+|\w+", re.UNICODE)

# Common English function words; candidates are content-bearing tokens.
STOPWORDS = frozenset(
    """
    a about above after again all am an and any are as at be been being below
    between both but by can could did do does down during each few for from
    had has have having he her here hers him his how i if in into is it its
    just may me might mine more most must my no nor not now of off on once
    only or other our ours out over own same shall she should so some such
    than that the their theirs them then there these they this those through
    to too under until up very was we were what when where which who whom why
    will with would you your yours
    """.split()
)

MIN_KEYWORD_LENGTH = 3

#: A candidate highlight: (character span in text or None, feature).
Highlight = tuple["tuple[int, int] | None", Feature]


def candidate_highlights(post: Post) -> list[Highlight]:
    """Features a reader might want to act on: the author plus likely keywords.

    Keyword candidates are tokens of length >= 3 whose casefold is not a
    stopword, plus every hashtag token; each carries its character span.
    The author feature has no span (it is not part of the text).
    """
    candidates: list[Highlight] = []
    if post.author_id:
        candidates.append((None, Feature(kind=FeatureKind.AUTHOR, value=post.author_id)))
    for match in _TOKEN_RE.finditer(post.text):
        token = match.group()
        span = (match.start(), match.end())
        if token.startswith("#"):
            candidates.append((span, Feature(kind=FeatureKind.KEYWORD, value=token)))
        elif len(token) >= MIN_KEYWORD_LENGTH and token.casefold() not in STOPWORDS:
            candidates.append((span, Feature(kind=FeatureKind.KEYWORD, value=token)))
    return candidates
