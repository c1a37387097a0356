"""Music catalog: tracks, the tag taxonomy, and snapshot loading.

The catalog is rebuilt from a line-delimited export file and never mutated
afterwards; reloads produce a whole new snapshot with a higher snapshot_id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import DuplicateTrackId, MalformedRecord, UnknownTag

FACETS = ("genre", "mood", "decade", "language", "artist_gender")

# Tags with a score below this are dropped at ingestion; missing score means 1.0.
SCORE_THRESHOLD = 0.5


@dataclass(frozen=True, slots=True)
class Tag:
    """A (facet, value) keyword, e.g. ('decade', '1990s')."""

    facet: str
    value: str

    def __str__(self) -> str:
        return f"{self.facet}:{self.value}"


@dataclass(frozen=True)
class TagTaxonomy:
    """Controlled vocabulary per facet plus a raw-string synonym map."""

    facets: Mapping[str, frozenset[str]]
    synonyms: Mapping[str, Mapping[str, str]]
    version: int = 1

    def __post_init__(self):
        for facet, mapping in self.synonyms.items():
            canonical = self.facets.get(facet, frozenset())
            for raw, target in mapping.items():
                if target not in canonical:
                    raise ValueError(f"synonym {facet}:{raw!r} -> {target!r} targets a non-canonical value")
                if raw in canonical:
                    raise ValueError(f"synonym key {facet}:{raw!r} shadows a canonical value")

    def values(self, facet: str) -> frozenset[str]:
        return self.facets.get(facet, frozenset())

    def is_valid(self, tag: Tag) -> bool:
        return tag.value in self.facets.get(tag.facet, frozenset())

    def normalize(self, facet: str, raw: str) -> Tag:
        """Resolve a raw string to a canonical Tag, via exact match or synonym.

        Lowercases and trims first; idempotent for canonical values. Raises
        UnknownTag when nothing matches.
        """
        cleaned = raw.strip().lower()
        if cleaned in self.facets.get(facet, frozenset()):
            return Tag(facet, cleaned)
        target = self.synonyms.get(facet, {}).get(cleaned)
        if target is not None:
            return Tag(facet, target)
        raise UnknownTag(facet, raw)

    def surface_forms(self, tag: Tag) -> tuple[str, ...]:
        """The canonical value plus every synonym that resolves to it."""
        forms = [tag.value]
        for raw, target in self.synonyms.get(tag.facet, {}).items():
            if target == tag.value:
                forms.append(raw)
        return tuple(forms)


def load_taxonomy(path: str | Path) -> TagTaxonomy:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return _taxonomy_from_payload(payload)


def default_taxonomy() -> TagTaxonomy:
    """The taxonomy shipped with the package (5 facets)."""
    payload = json.loads(resources.files("t2p.data").joinpath("taxonomy.json").read_text("utf-8"))
    return _taxonomy_from_payload(payload)


def _taxonomy_from_payload(payload: dict) -> TagTaxonomy:
    facets = {facet: frozenset(values) for facet, values in payload["facets"].items()}
    synonyms = {facet: dict(mapping) for facet, mapping in payload.get("synonyms", {}).items()}
    return TagTaxonomy(
        facets=MappingProxyType(facets),
        synonyms=MappingProxyType(synonyms),
        version=int(payload.get("version", 1)),
    )


@dataclass(frozen=True)
class Track:
    track_id: str
    title: str
    artist_id: str
    artist_name: str
    duration_sec: int
    tags: frozenset[Tag] = field(default_factory=frozenset)


@dataclass(frozen=True)
class Catalog:
    """Immutable snapshot of all tracks plus the taxonomy they validate against."""

    tracks: Mapping[str, Track]
    taxonomy: TagTaxonomy
    snapshot_id: int = 1

    def __len__(self) -> int:
        return len(self.tracks)


def normalize_tag(taxonomy: TagTaxonomy, facet: str, raw: str) -> Tag:
    return taxonomy.normalize(facet, raw)


_REQUIRED_FIELDS = ("track_id", "title", "artist_id", "artist_name", "duration_sec", "tags")


def load_catalog(path: str | Path, taxonomy: TagTaxonomy, snapshot_id: int = 1) -> Catalog:
    """Load and validate a catalog export: one JSON object per line.

    Each record carries `tags` as a list of "facet:value[:score]" strings;
    tags scoring below SCORE_THRESHOLD are dropped. Raises MalformedRecord,
    DuplicateTrackId, or UnknownTag on the first bad line.
    """
    tracks: dict[str, Track] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            track = _parse_record(line, line_no, taxonomy)
            if track.track_id in tracks:
                raise DuplicateTrackId(track.track_id, line_no)
            tracks[track.track_id] = track
    return Catalog(tracks=MappingProxyType(tracks), taxonomy=taxonomy, snapshot_id=snapshot_id)


def _parse_record(line: str, line_no: int, taxonomy: TagTaxonomy) -> Track:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(line_no, f"not valid JSON ({exc.msg})") from exc
    if not isinstance(record, dict):
        raise MalformedRecord(line_no, "record is not an object")
    missing = [key for key in _REQUIRED_FIELDS if key not in record]
    if missing:
        raise MalformedRecord(line_no, f"missing fields: {', '.join(missing)}")

    track_id = record["track_id"]
    if not isinstance(track_id, str) or not track_id:
        raise MalformedRecord(line_no, "track_id must be a nonempty string")
    duration = record["duration_sec"]
    if not isinstance(duration, int) or isinstance(duration, bool) or duration <= 0:
        raise MalformedRecord(line_no, "duration_sec must be a positive integer")
    if not isinstance(record["tags"], list):
        raise MalformedRecord(line_no, "tags must be a list")

    tags = frozenset(_parse_tags(record["tags"], line_no, taxonomy))
    decades = [t for t in tags if t.facet == "decade"]
    if len(decades) > 1:
        raise MalformedRecord(line_no, f"more than one decade tag: {sorted(t.value for t in decades)}")

    return Track(
        track_id=track_id,
        title=str(record["title"]),
        artist_id=str(record["artist_id"]),
        artist_name=str(record["artist_name"]),
        duration_sec=duration,
        tags=tags,
    )


def _parse_tags(raw_tags: Iterable, line_no: int, taxonomy: TagTaxonomy) -> list[Tag]:
    tags = []
    for raw in raw_tags:
        if not isinstance(raw, str):
            raise MalformedRecord(line_no, f"tag entry {raw!r} is not a string")
        parts = raw.split(":")
        if len(parts) == 2:
            facet, value = parts
            score = 1.0
        elif len(parts) == 3:
            facet, value, score_text = parts
            try:
                score = float(score_text)
            except ValueError:
                raise MalformedRecord(line_no, f"bad score in tag {raw!r}") from None
        else:
            raise MalformedRecord(line_no, f"tag {raw!r} is not facet:value[:score]")
        if score < SCORE_THRESHOLD:
            continue
        tags.append(taxonomy.normalize(facet, value))
    return tags


def tracks_with_tag(catalog: Catalog, tag: Tag) -> set[str]:
    """Linear scan over the catalog; the reference oracle for the inverted index."""
    return {track_id for track_id, track in catalog.tracks.items() if tag in track.tags}
