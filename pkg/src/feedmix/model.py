"""Domain types for composable feeds: posts, features, filters, sort specs, cursors."""

from __future__ import annotations

import base64
import binascii
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence, Union


class ValidationError(ValueError):
    """A document or field failed validation."""


class FeatureKind(str, Enum):
    KEYWORD = "keyword"
    AUTHOR = "author"


class FilterMode(str, Enum):
    INCLUDE = "include"
    EXCLUDE = "exclude"


class SortMode(str, Enum):
    INTERLEAVED = "interleaved"
    CHRONOLOGICAL = "chronological"
    PRIORITY = "priority"


class _ExhaustedType:
    """Absorbing per-source cursor state: the upstream has no further pages."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "EXHAUSTED"


#: Singleton marker used in cursor maps. Compare with `is`.
EXHAUSTED = _ExhaustedType()

#: Per-source cursor state: an opaque upstream cursor string, or EXHAUSTED.
Cursor = Union[str, _ExhaustedType]


def parse_timestamp(value: Any) -> float:
    """Parse an ISO-8601 string or epoch number into UTC epoch seconds.

    Accepts a trailing "Z", an explicit offset, or a naive time (assumed UTC).
    """
    if isinstance(value, bool):
        raise ValidationError(f"not a timestamp: {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ValidationError(f"not a timestamp: {value!r}")
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        parsed = datetime.fromisoformat(text)
    except ValueError as exc:
        raise ValidationError(f"bad timestamp {value!r}: {exc}") from None
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.timestamp()


def format_timestamp(ts: float) -> str:
    """Render epoch seconds as ISO-8601 UTC with a Z suffix.

    Sub-second precision is kept only when present, so whole-second values
    round-trip byte-identically.
    """
    moment = datetime.fromtimestamp(ts, tz=timezone.utc)
    if moment.microsecond:
        return moment.strftime("%Y-%m-%dT%H:%M:%S.%f") + "Z"
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class Post:
    """One post fetched from a source feed.

    `author_id` is a stable actor identifier, normalized to lowercase.
    `source_id`/`source_index` are stamped by the composition engine:
    which configured source the post came from and its 0-based position
    in that source's fetch order.
    """

    uri: str
    author_id: str
    author_handle: str
    text: str
    created_at: float  # UTC epoch seconds
    source_id: str = ""
    source_index: int = 0

    def __post_init__(self) -> None:
        if not self.uri:
            raise ValidationError("post uri must be non-empty")
        object.__setattr__(self, "author_id", self.author_id.lower())


@dataclass(frozen=True)
class Feature:
    """A matchable attribute: a keyword or an author.

    Keyword values are stored verbatim and compared case-insensitively.
    Author values are normalized to lowercase at construction.
    """

    kind: FeatureKind
    value: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", FeatureKind(self.kind))
        if not self.value:
            raise ValidationError("feature value must be non-empty")
        if self.kind is FeatureKind.AUTHOR:
            object.__setattr__(self, "value", self.value.lower())


@dataclass(frozen=True)
class FilterPredicate:
    mode: FilterMode
    feature: Feature

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", FilterMode(self.mode))


@dataclass(frozen=True)
class SortRule:
    """A weighted feature contributing to priority scores."""

    feature: Feature
    weight: float

    def __post_init__(self) -> None:
        weight = float(self.weight)
        if not math.isfinite(weight):
            raise ValidationError(f"rule weight must be finite, got {self.weight!r}")
        object.__setattr__(self, "weight", weight)


@dataclass(frozen=True)
class SortSpec:
    mode: SortMode
    rules: tuple[SortRule, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", SortMode(self.mode))
        object.__setattr__(self, "rules", tuple(self.rules))


DEFAULT_SORT = SortSpec(mode=SortMode.INTERLEAVED)


@dataclass(frozen=True)
class FeedConfig:
    """A user's feed definition: sources, filters, and the sort spec.

    `version` starts at 1 and increments by exactly one per mutation.
    """

    id: str
    owner_id: str
    name: str
    sources: tuple[str, ...]
    filters: tuple[FilterPredicate, ...]
    sort: SortSpec
    version: int
    updated_at: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "filters", tuple(self.filters))


@dataclass(frozen=True)
class PriorityBreakdown:
    """Why a post scored what it did: age penalty plus per-rule contributions."""

    age_penalty: float
    matched: tuple[tuple[SortRule, float], ...]
    total: float


@dataclass(frozen=True)
class FeedCursor:
    """Resumable position inside a composed feed.

    `per_source` maps source id to the upstream cursor at the start of batch
    `batch_index` (missing key = fetch from the beginning, EXHAUSTED = done),
    so the batch can be recomposed from the cursor alone. `session_now` is
    the clock frozen at the first request of the pagination session; carrying
    it keeps recomposition deterministic.
    """

    config_version: int
    per_source: Mapping[str, Cursor]
    batch_index: int
    offset: int
    session_now: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_source", dict(self.per_source))
        if self.batch_index < 0 or self.offset < 0:
            raise ValidationError("cursor position must be non-negative")


def matches(feature: Feature, post: Post) -> bool:
    """True when the post exhibits the feature.

    Keyword: case-insensitive substring over the raw text, no word
    boundaries. Author: equality on the normalized actor id.
    """
    if feature.kind is FeatureKind.KEYWORD:
        return feature.value.casefold() in post.text.casefold()
    return post.author_id == feature.value


def passes_filters(post: Post, filters: Sequence[FilterPredicate]) -> bool:
    """Apply include/exclude semantics.

    A post survives when it matches at least one include (or none are
    defined) and matches no exclude. Excludes always win.
    """
    includes_defined = False
    included = False
    for predicate in filters:
        if predicate.mode is FilterMode.EXCLUDE:
            if matches(predicate.feature, post):
                return False
        else:
            includes_defined = True
            if not included and matches(predicate.feature, post):
                included = True
    return included or not includes_defined


# --- serialization ---------------------------------------------------------
#
# Canonical form is JSON with the camelCase keys below, sorted keys, 2-space
# indent, and a trailing newline. serialize(deserialize(doc)) is
# byte-identical for canonical documents.


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def feature_to_dict(feature: Feature) -> dict[str, Any]:
    return {"kind": feature.kind.value, "value": feature.value}


def feature_from_dict(raw: Mapping[str, Any]) -> Feature:
    _require_keys(raw, {"kind", "value"}, "feature")
    try:
        kind = FeatureKind(raw["kind"])
    except ValueError:
        raise ValidationError(f"unknown feature kind {raw['kind']!r}") from None
    value = raw["value"]
    if not isinstance(value, str):
        raise ValidationError("feature value must be a string")
    return Feature(kind=kind, value=value)


def predicate_to_dict(predicate: FilterPredicate) -> dict[str, Any]:
    return {"mode": predicate.mode.value, "feature": feature_to_dict(predicate.feature)}


def predicate_from_dict(raw: Mapping[str, Any]) -> FilterPredicate:
    _require_keys(raw, {"mode", "feature"}, "filter")
    try:
        mode = FilterMode(raw["mode"])
    except ValueError:
        raise ValidationError(f"unknown filter mode {raw['mode']!r}") from None
    return FilterPredicate(mode=mode, feature=feature_from_dict(raw["feature"]))


def rule_to_dict(rule: SortRule) -> dict[str, Any]:
    return {"feature": feature_to_dict(rule.feature), "weight": rule.weight}


def rule_from_dict(raw: Mapping[str, Any]) -> SortRule:
    _require_keys(raw, {"feature", "weight"}, "sort rule")
    weight = raw["weight"]
    if isinstance(weight, bool) or not isinstance(weight, (int, float)):
        raise ValidationError("rule weight must be a number")
    return SortRule(feature=feature_from_dict(raw["feature"]), weight=float(weight))


def sort_to_dict(sort: SortSpec) -> dict[str, Any]:
    return {"mode": sort.mode.value, "rules": [rule_to_dict(r) for r in sort.rules]}


def sort_from_dict(raw: Mapping[str, Any]) -> SortSpec:
    _require_keys(raw, {"mode"}, "sort spec")
    try:
        mode = SortMode(raw["mode"])
    except ValueError:
        raise ValidationError(f"unknown sort mode {raw['mode']!r}") from None
    rules = raw.get("rules", [])
    if not isinstance(rules, list):
        raise ValidationError("sort rules must be a list")
    return SortSpec(mode=mode, rules=tuple(rule_from_dict(r) for r in rules))


def config_to_dict(config: FeedConfig) -> dict[str, Any]:
    return {
        "id": config.id,
        "ownerId": config.owner_id,
        "name": config.name,
        "sources": list(config.sources),
        "filters": [predicate_to_dict(p) for p in config.filters],
        "sort": sort_to_dict(config.sort),
        "version": config.version,
        "updatedAt": format_timestamp(config.updated_at),
    }


def config_from_dict(raw: Mapping[str, Any]) -> FeedConfig:
    _require_keys(
        raw, {"id", "ownerId", "name", "sources", "filters", "sort", "version", "updatedAt"}, "feed config"
    )
    sources = raw["sources"]
    if not isinstance(sources, list) or not all(isinstance(s, str) for s in sources):
        raise ValidationError("sources must be a list of strings")
    filters = raw["filters"]
    if not isinstance(filters, list):
        raise ValidationError("filters must be a list")
    version = raw["version"]
    if isinstance(version, bool) or not isinstance(version, int) or version < 1:
        raise ValidationError("version must be a positive integer")
    return FeedConfig(
        id=str(raw["id"]),
        owner_id=str(raw["ownerId"]),
        name=str(raw["name"]),
        sources=tuple(sources),
        filters=tuple(predicate_from_dict(p) for p in filters),
        sort=sort_from_dict(raw["sort"]),
        version=version,
        updated_at=parse_timestamp(raw["updatedAt"]),
    )


def config_to_json(config: FeedConfig) -> str:
    return canonical_json(config_to_dict(config))


def config_from_json(text: str) -> FeedConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"bad config document: {exc}") from None
    if not isinstance(raw, dict):
        raise ValidationError("config document must be a JSON object")
    return config_from_dict(raw)


def breakdown_to_dict(breakdown: PriorityBreakdown) -> dict[str, Any]:
    return {
        "agePenalty": breakdown.age_penalty,
        "matched": [
            {"feature": feature_to_dict(rule.feature), "weight": rule.weight, "contribution": contribution}
            for rule, contribution in breakdown.matched
        ],
        "total": breakdown.total,
    }


def validate_feed_config(config: FeedConfig) -> tuple[FeedConfig, list[str]]:
    """Normalize a config, returning it with any soft-validation warnings.

    Hard failures (empty name, empty source refs) raise ValidationError.
    Soft issues are repaired: duplicate source refs are dropped
    (order-preserving) and sort rules on non-priority modes are discarded.
    """
    if not config.name.strip():
        raise ValidationError("feed name must be non-empty")
    if any(not s for s in config.sources):
        raise ValidationError("source refs must be non-empty strings")
    warnings: list[str] = []
    sources = tuple(dict.fromkeys(config.sources))
    if len(sources) != len(config.sources):
        warnings.append("duplicate source refs dropped")
    sort = config.sort
    if sort.mode is not SortMode.PRIORITY and sort.rules:
        warnings.append(f"sort rules dropped: mode is {sort.mode.value}, rules apply only to priority")
        sort = SortSpec(mode=sort.mode)
    if sources != config.sources or sort is not config.sort:
        config = FeedConfig(
            id=config.id,
            owner_id=config.owner_id,
            name=config.name,
            sources=sources,
            filters=config.filters,
            sort=sort,
            version=config.version,
            updated_at=config.updated_at,
        )
    return config, warnings


# --- cursor wire format ----------------------------------------------------


def encode_cursor(cursor: FeedCursor) -> str:
    """Encode a cursor as url-safe base64 of canonical JSON.

    Clients must treat the result as opaque. EXHAUSTED becomes JSON null.
    """
    payload = {
        "configVersion": cursor.config_version,
        "perSource": {
            sid: (None if state is EXHAUSTED else state) for sid, state in cursor.per_source.items()
        },
        "batchIndex": cursor.batch_index,
        "offset": cursor.offset,
        "sessionNow": cursor.session_now,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return base64.urlsafe_b64encode(blob).decode("ascii")


def decode_cursor(token: str) -> FeedCursor:
    try:
        blob = base64.urlsafe_b64decode(token.encode("ascii"))
        payload = json.loads(blob)
    except (binascii.Error, ValueError, UnicodeError):
        raise ValidationError("malformed cursor") from None
    if not isinstance(payload, dict):
        raise ValidationError("malformed cursor")
    try:
        per_source_raw = payload["perSource"]
        per_source: dict[str, Cursor] = {}
        for sid, state in per_source_raw.items():
            if state is None:
                per_source[sid] = EXHAUSTED
            elif isinstance(state, str):
                per_source[sid] = state
            else:
                raise ValidationError("malformed cursor")
        return FeedCursor(
            config_version=int(payload["configVersion"]),
            per_source=per_source,
            batch_index=int(payload["batchIndex"]),
            offset=int(payload["offset"]),
            session_now=float(payload["sessionNow"]),
        )
    except (KeyError, TypeError, AttributeError):
        raise ValidationError("malformed cursor") from None


def _require_keys(raw: Mapping[str, Any], keys: Iterable[str], what: str) -> None:
    if not isinstance(raw, Mapping):
        raise ValidationError(f"{what} must be an object")
    missing = [k for k in keys if k not in raw]
    if missing:
        raise ValidationError(f"{what} missing keys: {', '.join(sorted(missing))}")
