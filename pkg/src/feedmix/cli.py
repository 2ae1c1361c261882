"""Command-line interface: run the service, compose offline, manage stored feeds."""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path
from typing import Any

import click

from .engine import BATCH_TARGET, MAX_FETCH_ROUNDS, PAGE_SIZE, FeedSession
from .model import (
    FeedConfig,
    SortMode,
    ValidationError,
    canonical_json,
    config_from_dict,
    config_to_dict,
    format_timestamp,
    parse_timestamp,
    rule_to_dict,
    validate_feed_config,
)
from .sources import FixtureRegistry, SourceResolver
from .store import ConfigStore, NotFound, VersionConflict

#: Exit codes: 0 success, 1 user error, 2 internal error.
EXIT_OK = 0
EXIT_USER = 1
EXIT_INTERNAL = 2


class UserError(click.ClickException):
    """An error the user can fix: bad flags, missing files, unknown ids."""


def load_config_file(path: Path) -> FeedConfig:
    """Read a feed config from disk, tolerating offline documents.

    Offline compose does not need identity or versioning, so missing
    id/ownerId/version/updatedAt fields get defaults before validation.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UserError(f"cannot read feed config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UserError(f"feed config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise UserError("feed config must be a JSON object")
    merged = {
        "id": "offline",
        "ownerId": "local",
        "version": 1,
        "updatedAt": format_timestamp(0.0),
        "filters": [],
        "sort": {"mode": "interleaved", "rules": []},
        **raw,
    }
    try:
        config = config_from_dict(merged)
        config, warnings = validate_feed_config(config)
    except ValidationError as exc:
        raise UserError(f"bad feed config: {exc}") from None
    for warning in warnings:
        click.echo(f"warning: {warning}", err=True)
    return config


@click.group()
def cli() -> None:
    """Compose custom feeds from many sources, offline or as a service."""


# -- compose ------------------------------------------------------------------


@cli.command()
@click.option("--feed", "feed_path", required=True, type=click.Path(path_type=Path), help="Feed config JSON file.")
@click.option("--fixtures", "fixtures_dir", required=True, type=click.Path(path_type=Path), help="Directory of *.jsonl fixture sources.")
@click.option("--limit", default=BATCH_TARGET, show_default=True, help="Posts to print.")
@click.option("--breakdown", is_flag=True, help="Include the age penalty alongside score and matched rules.")
@click.option("--now", "now_text", default=None, help="Pin the clock (ISO-8601 or epoch seconds) for deterministic output.")
@click.option("--target", default=BATCH_TARGET, show_default=True, help="Batch target size.")
@click.option("--page-size", default=PAGE_SIZE, show_default=True, help="Posts fetched per source per round.")
@click.option("--scan-cap", default=MAX_FETCH_ROUNDS, show_default=True, help="Max fetch rounds per batch.")
def compose(
    feed_path: Path,
    fixtures_dir: Path,
    limit: int,
    breakdown: bool,
    now_text: str | None,
    target: int,
    page_size: int,
    scan_cap: int,
) -> None:
    """Compose a feed from local fixtures and print posts as JSON lines.

    Output is byte-deterministic for a fixed --now.
    """
    if limit < 1:
        raise UserError(f"--limit must be >= 1, got {limit}")
    if target < 1:
        raise UserError(f"--target must be >= 1, got {target}")
    config = load_config_file(feed_path)
    try:
        registry = FixtureRegistry(fixtures_dir)
    except ValidationError as exc:
        raise UserError(str(exc)) from None
    if now_text is None:
        now = time.time()
    else:
        try:
            now = parse_timestamp(now_text)
        except ValidationError as exc:
            raise UserError(f"bad --now value: {exc}") from None
    resolver = SourceResolver(fixtures=registry)
    session = FeedSession(
        config,
        resolver.fetcher(config.owner_id),
        now=now,
        target=target,
        page_size=page_size,
        max_rounds=scan_cap,
    )
    posts, breakdowns, _ = session.page(0, 0, limit)
    for sid, message in session.warnings:
        click.echo(f"warning: source {sid}: {message}", err=True)
    if not posts and session.degraded_sources >= set(config.sources) and config.sources:
        raise UserError("every source failed to produce posts")
    priority_mode = config.sort.mode is SortMode.PRIORITY
    for i, post in enumerate(posts):
        line: dict[str, Any] = {
            "uri": post.uri,
            "author": post.author_handle or post.author_id,
            "createdAt": format_timestamp(post.created_at),
            "sourceId": post.source_id,
            "score": None,
            "matched": None,
        }
        if priority_mode and breakdowns is not None:
            detail = breakdowns[i]
            line["score"] = detail.total
            line["matched"] = [rule_to_dict(rule) for rule, _ in detail.matched]
            if breakdown:
                line["agePenalty"] = detail.age_penalty
        click.echo(json.dumps(line, sort_keys=True, separators=(",", ":")))


# -- serve --------------------------------------------------------------------


def _load_service_settings(path: Path):
    from .api import ServiceSettings

    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UserError(f"cannot read service config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UserError(f"service config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise UserError("service config must be a JSON object")
    store_dir = raw.get("storeDir")
    if not store_dir:
        raise UserError("service config needs storeDir")
    listen = raw.get("listen", "127.0.0.1:8787")
    host, _, port_text = listen.rpartition(":")
    if not host:
        raise UserError(f"bad listen address {listen!r}, expected host:port")
    try:
        port = int(port_text)
    except ValueError:
        raise UserError(f"bad listen port {port_text!r}") from None
    if not 0 < port < 65536:
        raise UserError(f"listen port out of range: {port}")
    fixture_dir = raw.get("fixtureDir")
    if fixture_dir and not Path(fixture_dir).is_dir():
        raise UserError(f"fixture directory not found: {fixture_dir}")
    ui_dir = raw.get("uiDir")
    settings = ServiceSettings(
        store_dir=Path(store_dir),
        fixture_dir=Path(fixture_dir) if fixture_dir else None,
        upstream_base=raw.get("upstreamBase"),
        api_token=raw.get("apiToken"),
        batch_target=int(raw.get("batchTarget", BATCH_TARGET)),
        page_size=int(raw.get("pageSize", PAGE_SIZE)),
        max_rounds=int(raw.get("scanCap", MAX_FETCH_ROUNDS)),
        parallel_fetch=bool(raw.get("parallelFetch", True)),
        ui_dir=Path(ui_dir) if ui_dir else None,
    )
    return settings, host, port


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(path_type=Path), help="Service settings JSON file.")
def serve(config_path: Path) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .api import create_app

    settings, host, port = _load_service_settings(config_path)
    app = create_app(settings)
    try:
        uvicorn.run(app, host=host, port=port, log_level="info")
    except (OSError, SystemExit) as exc:
        raise UserError(f"cannot serve on {host}:{port}: {exc}") from None


# -- feeds CRUD ---------------------------------------------------------------


@cli.group()
@click.option("--store", "store_dir", required=True, type=click.Path(path_type=Path), help="Store directory.")
@click.pass_context
def feeds(ctx: click.Context, store_dir: Path) -> None:
    """Manage stored feed configs directly (no running service needed)."""
    ctx.obj = ConfigStore(store_dir)


def _echo_config(config: FeedConfig, as_json: bool) -> None:
    if as_json:
        click.echo(json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":")))
    else:
        click.echo(
            f"{config.id}  v{config.version}  {config.name}  "
            f"[{config.sort.mode.value}]  sources={len(config.sources)} filters={len(config.filters)}"
        )


@feeds.command("create")
@click.option("--owner", required=True, help="Owner id.")
@click.option("--name", required=True, help="Feed name.")
@click.option("--source", "source_refs", multiple=True, help="Source ref (repeatable).")
@click.option("--json", "as_json", is_flag=True, help="Print the config as JSON.")
@click.pass_obj
def feeds_create(store: ConfigStore, owner: str, name: str, source_refs: tuple[str, ...], as_json: bool) -> None:
    config = store.create_feed(owner, name, sources=list(source_refs))
    _echo_config(config, as_json)


@feeds.command("list")
@click.option("--owner", default=None, help="Only this owner's feeds.")
@click.option("--json", "as_json", is_flag=True, help="One JSON object per line.")
@click.pass_obj
def feeds_list(store: ConfigStore, owner: str | None, as_json: bool) -> None:
    for config in store.list_feeds(owner):
        _echo_config(config, as_json)


@feeds.command("show")
@click.argument("feed_id")
@click.option("--json", "as_json", is_flag=True, help="Print the config as JSON.")
@click.pass_obj
def feeds_show(store: ConfigStore, feed_id: str, as_json: bool) -> None:
    config = store.get_feed(feed_id)
    if as_json:
        click.echo(json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":")))
    else:
        click.echo(canonical_json(config_to_dict(config)), nl=False)


@feeds.command("edit")
@click.argument("feed_id")
@click.option("--patch", "patch_path", required=True, type=click.Path(path_type=Path), help="JSON file with fields to change.")
@click.option("--expect-version", default=None, type=int, help="Fail unless the stored version matches.")
@click.option("--json", "as_json", is_flag=True, help="Print the config as JSON.")
@click.pass_obj
def feeds_edit(
    store: ConfigStore, feed_id: str, patch_path: Path, expect_version: int | None, as_json: bool
) -> None:
    try:
        patch = json.loads(Path(patch_path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UserError(f"cannot read patch file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UserError(f"patch file is not valid JSON: {exc}") from None
    if not isinstance(patch, dict):
        raise UserError("patch must be a JSON object")
    config = store.update_feed(feed_id, patch, expected_version=expect_version)
    _echo_config(config, as_json)


@feeds.command("delete")
@click.argument("feed_id")
@click.pass_obj
def feeds_delete(store: ConfigStore, feed_id: str) -> None:
    store.delete_feed(feed_id)
    click.echo(f"deleted {feed_id}")


# -- entry point ---------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    """Run the CLI with the documented exit codes (0 ok, 1 user error, 2 internal)."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_USER
    except click.ClickException as exc:
        exc.show()
        return EXIT_USER
    except (ValidationError, NotFound, VersionConflict) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USER
    except Exception as exc:  # anything unexpected is an internal error
        click.echo(f"internal error: {exc!r}", err=True)
        return EXIT_INTERNAL
    return EXIT_OK


def entry() -> None:  # console script
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
