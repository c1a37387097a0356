"""Shared fixtures: the 8-track desk catalog, its embeddings, and a service factory."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from t2p.catalog import default_taxonomy, load_catalog
from t2p.config import ServiceConfig
from t2p.extraction import Lexicon
from t2p.personalization import load_embeddings
from t2p.retrieval import build_index
from t2p.service import PlaylistService

# track_id, title, artist_id, artist_name, duration, tags
DESK_TRACKS = [
    ("T1", "Paper Planes", "A1", "Garage Days", 214, ["genre:rock", "decade:1990s", "mood:focus"]),
    ("T2", "Night Circuit", "A2", "Neon Circuit", 251, ["genre:electronic", "decade:1990s", "mood:focus"]),
    ("T3", "Strobe Light", "A2", "Neon Circuit", 198, ["genre:electronic", "decade:2010s", "mood:party"]),
    ("T4", "Blue Corner", "A3", "Blue Note Trio", 312, ["genre:jazz", "decade:1950s", "mood:chill"]),
    ("T5", "Static Run", "A1", "Garage Days", 187, ["genre:rock", "decade:1990s", "mood:party"]),
    ("T6", "Glass Waves", "A4", "Velvet Pop", 224, ["genre:pop", "decade:1990s", "mood:focus"]),
    ("T7", "Harbor Lights", "A5", "Skyline Echo", 240, ["genre:pop", "decade:2010s", "mood:chill"]),
    ("T8", "Quiet Steps", "A3", "Blue Note Trio", 287, ["genre:jazz", "decade:1950s", "mood:focus"]),
]

DESK_EMBEDDING_LINES = [
    "t2p-embeddings v1 dim=2",
    "user,U1,1,0",
    "track,T1,1,0",
    "track,T2,0,1",
    "track,T6,0.8,0.8",
]


def write_catalog_file(path: Path, rows=DESK_TRACKS) -> Path:
    lines = []
    for track_id, title, artist_id, artist_name, duration, tags in rows:
        lines.append(
            json.dumps(
                {
                    "track_id": track_id,
                    "title": title,
                    "artist_id": artist_id,
                    "artist_name": artist_name,
                    "duration_sec": duration,
                    "tags": tags,
                }
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_embeddings_file(path: Path, lines=DESK_EMBEDDING_LINES) -> Path:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def taxonomy():
    return default_taxonomy()


@pytest.fixture(scope="session")
def lexicon(taxonomy):
    return Lexicon.default(taxonomy)


@pytest.fixture
def desk_catalog_path(tmp_path):
    return write_catalog_file(tmp_path / "catalog.jsonl")


@pytest.fixture
def desk_catalog(desk_catalog_path, taxonomy):
    return load_catalog(desk_catalog_path, taxonomy)


@pytest.fixture
def desk_index(desk_catalog):
    return build_index(desk_catalog)


@pytest.fixture
def desk_embeddings_path(tmp_path):
    return write_embeddings_file(tmp_path / "embeddings.txt")


@pytest.fixture
def desk_embeddings(desk_embeddings_path):
    return load_embeddings(desk_embeddings_path)


def desk_config(tmp_path: Path, **overrides) -> ServiceConfig:
    """A config wired to fresh desk fixture files under tmp_path.

    min_candidates=2 keeps the desk retrieval below the relaxation threshold,
    so the worked example keeps both its tags.
    """
    write_catalog_file(tmp_path / "catalog.jsonl")
    write_embeddings_file(tmp_path / "embeddings.txt")
    defaults = dict(
        catalog_path=str(tmp_path / "catalog.jsonl"),
        embeddings_path=str(tmp_path / "embeddings.txt"),
        store_path=str(tmp_path / "store.jsonl"),
        min_candidates=2,
    )
    defaults.update(overrides)
    return ServiceConfig(**defaults)


@pytest.fixture
def desk_service(tmp_path):
    service = PlaylistService(desk_config(tmp_path))
    yield service
    service.close()
