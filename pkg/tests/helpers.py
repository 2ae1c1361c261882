"""Shared builders for the test suite."""

from __future__ import annotations

import json

from feedmix.model import (
    Feature,
    FeedConfig,
    FilterPredicate,
    Post,
    SortRule,
    SortSpec,
    format_timestamp,
)
from feedmix.sources import FixtureSource, SourceFetchError

NOW = 1_700_000_000.0


def make_post(i=0, *, text=None, author="did:plc:alice", handle="alice.test", created_at=None, uri=None):
    return Post(
        uri=uri or f"at://post/{i}",
        author_id=author,
        author_handle=handle,
        text=f"post number {i}" if text is None else text,
        created_at=NOW - i * 60.0 if created_at is None else created_at,
    )


def post_record(post: Post) -> dict:
    return {
        "uri": post.uri,
        "authorId": post.author_id,
        "authorHandle": post.author_handle,
        "text": post.text,
        "createdAt": format_timestamp(post.created_at),
    }


def write_fixture(directory, name, posts):
    path = directory / f"{name}.jsonl"
    with open(path, "w", encoding="utf-8") as handle:
        for post in posts:
            handle.write(json.dumps(post_record(post)) + "\n")
    return path


def keyword(value: str) -> Feature:
    return Feature(kind="keyword", value=value)


def author(value: str) -> Feature:
    return Feature(kind="author", value=value)


def include(feature: Feature) -> FilterPredicate:
    return FilterPredicate(mode="include", feature=feature)


def exclude(feature: Feature) -> FilterPredicate:
    return FilterPredicate(mode="exclude", feature=feature)


def make_config(
    sources,
    *,
    filters=(),
    sort=None,
    version=1,
    feed_id="feed1",
    owner="u1",
    name="Test feed",
):
    return FeedConfig(
        id=feed_id,
        owner_id=owner,
        name=name,
        sources=tuple(sources),
        filters=tuple(filters),
        sort=sort or SortSpec(mode="interleaved"),
        version=version,
        updated_at=NOW,
    )


def priority_sort(*rules: SortRule) -> SortSpec:
    return SortSpec(mode="priority", rules=tuple(rules))


def fetch_for(*fixture_sources: FixtureSource):
    """Fetch capability over in-memory fixture sources."""
    table = {source.source_id: source for source in fixture_sources}

    def fetch(ref, cursor, limit):
        source = table.get(ref)
        if source is None:
            raise SourceFetchError(ref, f"unknown source {ref!r}")
        return source.fetch_page(cursor, limit)

    return fetch
