"""Append-only persistence for generated playlists and engagement events.

One JSON line per write; a generation (playlist + its record) is a single
line so the pair lands atomically. The whole log is replayed into memory on
open, tolerating a torn final line from an unclean stop.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .errors import InvalidEvent, UnknownPlaylist
from .refinement import Playlist, PlaylistProvenance


@dataclass(frozen=True)
class ExtractedTag:
    facet: str
    value: str
    explicitness: str


@dataclass(frozen=True)
class GenerationRecord:
    playlist_id: str
    user_id: str
    query_text: str
    extracted: tuple[ExtractedTag, ...]
    relaxation_level: int
    personalized: bool
    degraded: bool
    extraction_backend: str
    refinement_backend: str
    created_at: datetime


@dataclass(frozen=True)
class PlaylistEvent:
    playlist_id: str
    occurred_at: datetime
    event_type: str = "listened"

    def __post_init__(self):
        if self.event_type != "listened":
            raise InvalidEvent(f"unsupported event type {self.event_type!r}")
        if self.occurred_at.tzinfo is None:
            object.__setattr__(self, "occurred_at", self.occurred_at.replace(tzinfo=timezone.utc))

    def dedup_key(self) -> tuple[str, str, str]:
        return (self.playlist_id, self.event_type, self.occurred_at.isoformat())


def _iso(dt: datetime) -> str:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).isoformat()


def _parse_dt(text: str) -> datetime:
    return datetime.fromisoformat(text)


def _playlist_to_dict(playlist: Playlist) -> dict:
    return {
        "playlist_id": playlist.playlist_id,
        "title": playlist.title,
        "track_ids": list(playlist.track_ids),
        "provenance": playlist.provenance.as_dict(),
        "created_at": _iso(playlist.created_at),
    }


def _playlist_from_dict(data: dict) -> Playlist:
    return Playlist(
        playlist_id=data["playlist_id"],
        title=data["title"],
        track_ids=tuple(data["track_ids"]),
        provenance=PlaylistProvenance(**data["provenance"]),
        created_at=_parse_dt(data["created_at"]),
    )


def _record_to_dict(record: GenerationRecord) -> dict:
    return {
        "playlist_id": record.playlist_id,
        "user_id": record.user_id,
        "query_text": record.query_text,
        "extracted": [
            {"facet": t.facet, "value": t.value, "explicitness": t.explicitness} for t in record.extracted
        ],
        "relaxation_level": record.relaxation_level,
        "personalized": record.personalized,
        "degraded": record.degraded,
        "extraction_backend": record.extraction_backend,
        "refinement_backend": record.refinement_backend,
        "created_at": _iso(record.created_at),
    }


def _record_from_dict(data: dict) -> GenerationRecord:
    return GenerationRecord(
        playlist_id=data["playlist_id"],
        user_id=data["user_id"],
        query_text=data["query_text"],
        extracted=tuple(ExtractedTag(**t) for t in data["extracted"]),
        relaxation_level=data["relaxation_level"],
        personalized=data["personalized"],
        degraded=data["degraded"],
        extraction_backend=data["extraction_backend"],
        refinement_backend=data["refinement_backend"],
        created_at=_parse_dt(data["created_at"]),
    )


class PlaylistStore:
    """Durable log with an in-memory view; writes are serialized, reads are
    safe from any thread once taken under the lock."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._playlists: dict[str, Playlist] = {}
        self._records: dict[str, GenerationRecord] = {}
        self._events: dict[tuple[str, str, str], PlaylistEvent] = {}
        self._replay()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")

    def _replay(self) -> None:
        if not self.path.exists():
            return
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError:
                    break  # torn tail from an unclean stop; everything before it is good
                self._apply(entry)

    def _apply(self, entry: dict) -> None:
        if entry.get("kind") == "generation":
            playlist = _playlist_from_dict(entry["playlist"])
            self._playlists[playlist.playlist_id] = playlist
            self._records[playlist.playlist_id] = _record_from_dict(entry["record"])
        elif entry.get("kind") == "event":
            event = PlaylistEvent(
                playlist_id=entry["playlist_id"],
                occurred_at=_parse_dt(entry["occurred_at"]),
                event_type=entry.get("event_type", "listened"),
            )
            self._events[event.dedup_key()] = event

    def _write(self, entry: dict) -> None:
        self._fh.write(json.dumps(entry, ensure_ascii=False, separators=(",", ":")) + "\n")
        self._fh.flush()

    def append_generation(self, playlist: Playlist, record: GenerationRecord) -> None:
        if playlist.playlist_id != record.playlist_id:
            raise ValueError("playlist and record ids differ")
        with self._lock:
            self._playlists[playlist.playlist_id] = playlist
            self._records[playlist.playlist_id] = record
            self._write(
                {"kind": "generation", "playlist": _playlist_to_dict(playlist), "record": _record_to_dict(record)}
            )

    def append_event(self, event: PlaylistEvent) -> bool:
        """Store an event; returns False for an exact duplicate (idempotent)."""
        with self._lock:
            playlist = self._playlists.get(event.playlist_id)
            if playlist is None:
                raise UnknownPlaylist(event.playlist_id)
            if event.occurred_at < playlist.created_at:
                raise InvalidEvent("event precedes playlist creation")
            key = event.dedup_key()
            if key in self._events:
                return False
            self._events[key] = event
            self._write(
                {
                    "kind": "event",
                    "playlist_id": event.playlist_id,
                    "event_type": event.event_type,
                    "occurred_at": _iso(event.occurred_at),
                }
            )
            return True

    def playlist(self, playlist_id: str) -> Playlist:
        with self._lock:
            playlist = self._playlists.get(playlist_id)
        if playlist is None:
            raise UnknownPlaylist(playlist_id)
        return playlist

    def record(self, playlist_id: str) -> GenerationRecord:
        with self._lock:
            record = self._records.get(playlist_id)
        if record is None:
            raise UnknownPlaylist(playlist_id)
        return record

    def records(self) -> list[GenerationRecord]:
        with self._lock:
            return list(self._records.values())

    def events(self) -> list[PlaylistEvent]:
        with self._lock:
            return list(self._events.values())

    def __len__(self) -> int:
        with self._lock:
            return len(self._playlists)

    def compact(self) -> None:
        """Rewrite the log without duplicate events or torn tails."""
        with self._lock:
            tmp = self.path.with_suffix(self.path.suffix + ".compact")
            with open(tmp, "w", encoding="utf-8") as out:
                for playlist_id, playlist in self._playlists.items():
                    entry = {
                        "kind": "generation",
                        "playlist": _playlist_to_dict(playlist),
                        "record": _record_to_dict(self._records[playlist_id]),
                    }
                    out.write(json.dumps(entry, ensure_ascii=False, separators=(",", ":")) + "\n")
                for event in self._events.values():
                    entry = {
                        "kind": "event",
                        "playlist_id": event.playlist_id,
                        "event_type": event.event_type,
                        "occurred_at": _iso(event.occurred_at),
                    }
                    out.write(json.dumps(entry, ensure_ascii=False, separators=(",", ":")) + "\n")
                out.flush()
                os.fsync(out.fileno())
            self._fh.close()
            os.replace(tmp, self.path)
            self._fh = open(self.path, "a", encoding="utf-8")

    def close(self) -> None:
        with self._lock:
            if not self._fh.closed:
                self._fh.flush()
                os.fsync(self._fh.fileno())
                self._fh.close()
