"""Final tracklist selection under length and artist-diversity constraints.

The LLM path proposes an ordering which is then strictly post-validated
(subset of candidates, dedup, artist cap, length). The deterministic greedy
path enforces the same rules directly and serves as the fallback.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .catalog import Tag
from .errors import EmptyPlaylist, FallbackRequired, UnparseableResponse
from .llm import recover_json_object

DEFAULT_TARGET_LENGTH = 30
DEFAULT_ARTIST_CAP = 3

# Fewer surviving ids than this (or than the target, if smaller) means the
# LLM answer is too thin to trust.
MIN_USABLE_TRACKS = 5


@dataclass(frozen=True)
class RefinementCandidate:
    track_id: str
    title: str
    artist_id: str
    artist_name: str
    tags: frozenset[Tag] = field(default_factory=frozenset)
    score: float | None = None


@dataclass(frozen=True)
class RefinementRequest:
    query_text: str
    candidates: tuple[RefinementCandidate, ...]
    query_tags: tuple[Tag, ...] = ()
    target_length: int = DEFAULT_TARGET_LENGTH
    artist_cap: int = DEFAULT_ARTIST_CAP

    def __post_init__(self):
        if self.target_length < 1:
            raise ValueError("target_length must be >= 1")
        if self.artist_cap < 1:
            raise ValueError("artist_cap must be >= 1")
        ids = [c.track_id for c in self.candidates]
        if len(ids) != len(set(ids)):
            raise ValueError("candidate list contains duplicate track ids")

    def artist_of(self, track_id: str) -> str | None:
        for c in self.candidates:
            if c.track_id == track_id:
                return c.artist_id
        return None


@dataclass(frozen=True)
class PlaylistProvenance:
    extraction_backend: str = "rule"
    refinement_backend: str = "deterministic"
    relaxation_level: int = 0
    personalized: bool = False
    degraded: bool = False

    def as_dict(self) -> dict:
        return {
            "extraction_backend": self.extraction_backend,
            "refinement_backend": self.refinement_backend,
            "relaxation_level": self.relaxation_level,
            "personalized": self.personalized,
            "degraded": self.degraded,
        }


@dataclass(frozen=True)
class Playlist:
    playlist_id: str
    title: str
    track_ids: tuple[str, ...]
    provenance: PlaylistProvenance
    created_at: datetime

    def __post_init__(self):
        if len(self.track_ids) != len(set(self.track_ids)):
            raise ValueError("playlist contains duplicate track ids")

    def content_key(self) -> bytes:
        """Canonical bytes of everything except identity and timestamp; two
        generations of the same request compare equal on this."""
        payload = {
            "title": self.title,
            "track_ids": list(self.track_ids),
            "provenance": self.provenance.as_dict(),
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _format_score(score: float | None) -> str:
    return "-" if score is None else f"{score:.4f}"


def candidates_to_text(request: RefinementRequest) -> str:
    """Flatten the candidate slate into the line-per-track text the LLM reads."""
    lines = [f"Query: {request.query_text}"]
    for rank, c in enumerate(request.candidates, start=1):
        tags = ", ".join(sorted(str(t) for t in c.tags)) or "-"
        lines.append(
            f"{rank}. {c.track_id} | {c.title} | {c.artist_name} | tags: {tags} | score={_format_score(c.score)}"
        )
    return "\n".join(lines)


_REFINEMENT_TEMPLATE = """\
You curate a playlist from the candidate tracks below.

{candidates}

Pick at most {target_length} tracks that best match the query, ordered best
first. Use at most {artist_cap} tracks per artist and never repeat a track.
Prefer a coherent, varied tracklist over raw similarity score.
Answer with a single JSON object and nothing else, shaped exactly like:
{{"title": "playlist title", "track_ids": ["id1", "id2"]}}
"""


def build_refinement_prompt(request: RefinementRequest) -> str:
    return _REFINEMENT_TEMPLATE.format(
        candidates=candidates_to_text(request),
        target_length=request.target_length,
        artist_cap=request.artist_cap,
    )


@dataclass(frozen=True)
class ParsedTracklist:
    track_ids: tuple[str, ...]
    title: str
    hallucinations_dropped: int


def parse_llm_tracklist(response_text: str, request: RefinementRequest) -> ParsedTracklist:
    """Validate an LLM tracklist against the candidate slate.

    Ids outside the slate are dropped and counted (hallucination guard),
    duplicates collapse keeping the first, the artist cap and target length
    are re-enforced. Raises UnparseableResponse when no object can be
    recovered and FallbackRequired when too few ids survive.
    """
    payload = recover_json_object(response_text)
    raw_ids = payload.get("track_ids")
    if not isinstance(raw_ids, list):
        raise UnparseableResponse("response object has no 'track_ids' list")

    known = {c.track_id: c.artist_id for c in request.candidates}
    hallucinated = 0
    seen: set[str] = set()
    per_artist: dict[str, int] = {}
    kept: list[str] = []
    for raw in raw_ids:
        track_id = raw if isinstance(raw, str) else None
        if track_id is None or track_id not in known:
            hallucinated += 1
            continue
        if len(kept) >= request.target_length or track_id in seen:
            continue
        artist = known[track_id]
        if per_artist.get(artist, 0) >= request.artist_cap:
            continue
        seen.add(track_id)
        per_artist[artist] = per_artist.get(artist, 0) + 1
        kept.append(track_id)

    if len(kept) < min(MIN_USABLE_TRACKS, request.target_length):
        raise FallbackRequired(
            f"only {len(kept)} usable tracks from the response ({hallucinated} hallucinated)",
            hallucinations_dropped=hallucinated,
        )

    title = payload.get("title")
    if not isinstance(title, str) or not title.strip():
        title = playlist_title(request.query_tags)
    return ParsedTracklist(track_ids=tuple(kept), title=title.strip(), hallucinations_dropped=hallucinated)


def playlist_title(query_tags: tuple[Tag, ...]) -> str:
    """Deterministic title from the first two extracted tags, e.g. '1990s · Focus mix'."""
    parts = []
    for tag in query_tags[:2]:
        value = tag.value if tag.value[:1].isdigit() else tag.value.title()
        parts.append(value)
    if not parts:
        return "Custom mix"
    return " · ".join(parts) + " mix"


def refine_deterministic(
    request: RefinementRequest,
    playlist_id: str | None = None,
    created_at: datetime | None = None,
    provenance: PlaylistProvenance | None = None,
) -> Playlist:
    """Greedy walk of the ranked candidates under the artist cap.

    Keeps relative input order among selected tracks and stops at the target
    length. Raises EmptyPlaylist when there are no candidates at all.
    """
    if not request.candidates:
        raise EmptyPlaylist("no candidates to refine")

    per_artist: dict[str, int] = {}
    selected: list[str] = []
    for c in request.candidates:
        if len(selected) >= request.target_length:
            break
        if per_artist.get(c.artist_id, 0) >= request.artist_cap:
            continue
        per_artist[c.artist_id] = per_artist.get(c.artist_id, 0) + 1
        selected.append(c.track_id)

    return Playlist(
        playlist_id=playlist_id or uuid.uuid4().hex,
        title=playlist_title(request.query_tags),
        track_ids=tuple(selected),
        provenance=provenance or PlaylistProvenance(),
        created_at=created_at or datetime.now(timezone.utc),
    )
