"""Command-line interface: serve the API, build indexes, run one-off queries,
and print engagement/tag reports."""

from __future__ import annotations

import csv
import io
import sys

import click

from .analytics import listen_through, tag_frequencies
from .catalog import default_taxonomy, load_catalog, load_taxonomy
from .config import ServiceConfig
from .errors import T2PError
from .retrieval import build_index
from .service import PlaylistService, create_app
from .store import PlaylistStore


@click.group()
def main():
    """Generate personalized playlists from free-text requests."""


def _load_config(path: str) -> ServiceConfig:
    return ServiceConfig.from_file(path)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(config_path: str, host: str, port: int):
    """Run the HTTP service."""
    import uvicorn

    service = PlaylistService(_load_config(config_path))
    app = create_app(service)
    try:
        uvicorn.run(app, host=host, port=port, log_level="info")
    finally:
        service.close()


@main.group()
def index():
    """Inverted-index utilities."""


@index.command("build")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def index_build(config_path: str):
    """Validate the catalog and report index statistics."""
    config = _load_config(config_path)
    taxonomy = load_taxonomy(config.taxonomy_path) if config.taxonomy_path else default_taxonomy()
    try:
        catalog = load_catalog(config.catalog_path, taxonomy)
    except T2PError as exc:
        raise click.ClickException(str(exc)) from exc
    idx = build_index(catalog)
    postings = sum(len(ids) for ids in idx.postings.values())
    click.echo(f"tracks: {len(catalog)}")
    click.echo(f"distinct tags: {len(idx.postings)}")
    click.echo(f"postings: {postings}")


@main.command()
@click.argument("text")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--user", "user_id", required=True)
@click.option("--backend", type=click.Choice(["rule", "llm", "replay"]), default="rule", show_default=True)
@click.option("--length", type=int, default=None)
def query(text: str, config_path: str, user_id: str, backend: str, length: int | None):
    """Generate one playlist and print it."""
    service = PlaylistService(_load_config(config_path))
    refinement = {"rule": "deterministic", "llm": "llm", "replay": "replay"}[backend]
    try:
        outcome = service.generate_playlist(
            user_id, text, length=length, extraction_backend=backend, refinement_backend=refinement
        )
    except T2PError as exc:
        raise click.ClickException(str(exc)) from exc
    finally:
        service.close()
    click.echo(f"{outcome.playlist.title}  [{outcome.playlist.playlist_id}]")
    for position, track in enumerate(outcome.tracks, start=1):
        click.echo(f"{position:3d}. {track['track_id']}  {track['title']}  ({track['artist_name']})")
    click.echo(f"provenance: {outcome.playlist.provenance.as_dict()}")


def _emit_rows(header: list[str], rows: list[list], fmt: str):
    if fmt == "csv":
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(header)
        writer.writerows(rows)
        sys.stdout.write(out.getvalue())
        return
    widths = [max(len(str(cell)) for cell in column) for column in zip(header, *rows)] if rows else [len(h) for h in header]
    line = "  ".join(str(h).ljust(w) for h, w in zip(header, widths))
    click.echo(line)
    click.echo("-" * len(line))
    for row in rows:
        click.echo("  ".join(str(cell).ljust(w) for cell, w in zip(row, widths)))


@main.group()
def report():
    """Engagement and tag-demand reports over the persisted log."""


@report.command("engagement")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--window", type=int, default=7, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["table", "csv"]), default="table", show_default=True)
def report_engagement(config_path: str, window: int, fmt: str):
    config = _load_config(config_path)
    store = PlaylistStore(config.store_path)
    try:
        result = listen_through(store.records(), store.events(), window_days=window)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    finally:
        store.close()
    _emit_rows(
        ["window_days", "generated", "listened", "listen_through_rate"],
        [[result.window_days, result.generated_count, result.listened_count, f"{result.listen_through_rate:.4f}"]],
        fmt,
    )


@report.command("tags")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--facet", default=None)
@click.option("--format", "fmt", type=click.Choice(["table", "csv"]), default="table", show_default=True)
def report_tags(config_path: str, facet: str | None, fmt: str):
    config = _load_config(config_path)
    store = PlaylistStore(config.store_path)
    try:
        result = tag_frequencies(store.records())
    finally:
        store.close()
    entries = result.for_facet(facet) if facet else result.entries
    rows = [[e.facet, e.value, e.count, f"{e.share:.4f}"] for e in entries]
    _emit_rows(["facet", "value", "count", "share"], rows, fmt)


if __name__ == "__main__":
    main()
