"""Inverted tag index and candidate retrieval with preferred-tag relaxation.

Matching is AND across facets, OR within values of the same facet. When too
few tracks match, implicit (preferred) tags are dropped one at a time;
explicit (required) tags are never dropped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

from .catalog import Catalog, Tag
from .errors import EmptyCandidateSet, UnknownTrackId

# Facets dropped first sit earliest; a preferred mood outlives a preferred language.
RELAXATION_ORDER = ("language", "artist_gender", "genre", "decade", "mood")

DEFAULT_MIN_CANDIDATES = 20
DEFAULT_LIMIT = 200


@dataclass(frozen=True)
class InvertedIndex:
    postings: Mapping[Tag, tuple[str, ...]]
    built_from_snapshot: int
    # Derived set views of the postings, kept for O(1) membership on the hot path.
    posting_sets: Mapping[Tag, frozenset[str]]

    def ids_for(self, tag: Tag) -> frozenset[str]:
        return self.posting_sets.get(tag, frozenset())


@dataclass(frozen=True)
class MatchSpec:
    required: frozenset[Tag]
    preferred: frozenset[Tag]
    limit: int = DEFAULT_LIMIT

    def __post_init__(self):
        if self.required & self.preferred:
            raise ValueError("required and preferred tags overlap")
        if self.limit < 1:
            raise ValueError("limit must be >= 1")
        if not self.required and not self.preferred:
            raise ValueError("spec carries no tags")


@dataclass(frozen=True)
class CandidateSet:
    track_ids: tuple[str, ...]
    matched_tags: Mapping[str, frozenset[Tag]]
    relaxation_level: int


def build_index(catalog: Catalog) -> InvertedIndex:
    """Index every (track, tag) pair; posting lists are ascending and dup-free."""
    lists: dict[Tag, list[str]] = {}
    for track_id in sorted(catalog.tracks):
        for tag in catalog.tracks[track_id].tags:
            lists.setdefault(tag, []).append(track_id)
    postings = {tag: tuple(ids) for tag, ids in lists.items()}
    sets = {tag: frozenset(ids) for tag, ids in lists.items()}
    return InvertedIndex(
        postings=MappingProxyType(postings),
        built_from_snapshot=catalog.snapshot_id,
        posting_sets=MappingProxyType(sets),
    )


def _drop_order(tags: frozenset[Tag]) -> list[Tag]:
    return sorted(tags, key=lambda t: (RELAXATION_ORDER.index(t.facet), t.value))


def _match(index: InvertedIndex, active: set[Tag]) -> set[str]:
    by_facet: dict[str, set[str]] = {}
    for tag in active:
        ids = index.ids_for(tag)
        if tag.facet in by_facet:
            by_facet[tag.facet] |= ids
        else:
            by_facet[tag.facet] = set(ids)
    groups = sorted(by_facet.values(), key=len)
    result = groups[0]
    for group in groups[1:]:
        result &= group
        if not result:
            break
    return result


def retrieve(index: InvertedIndex, spec: MatchSpec, min_candidates: int = DEFAULT_MIN_CANDIDATES) -> CandidateSet:
    """Retrieve candidates, relaxing preferred tags until min_candidates is met.

    Preferred tags are dropped lowest-priority facet first (RELAXATION_ORDER),
    never below one remaining tag overall. The result is truncated to
    spec.limit in ascending track_id order; personalization reorders later.
    Raises EmptyCandidateSet when fully relaxed matching yields nothing.
    """
    if min_candidates < 1:
        raise ValueError("min_candidates must be >= 1")

    droppable = _drop_order(spec.preferred)
    # With no required tags we keep the last preferred tag rather than ever
    # matching the whole catalog unconstrained.
    floor = 0 if spec.required else 1
    relaxation = 0
    while True:
        active = set(spec.required) | set(droppable)
        matched = _match(index, active)
        if len(matched) >= min_candidates or len(droppable) <= floor:
            break
        droppable.pop(0)
        relaxation += 1

    if not matched:
        raise EmptyCandidateSet(
            f"no tracks match {sorted(str(t) for t in spec.required | spec.preferred)} even after relaxation"
        )

    kept = sorted(matched)[: spec.limit]
    matched_tags = {
        track_id: frozenset(tag for tag in active if track_id in index.ids_for(tag))
        for track_id in kept
    }
    return CandidateSet(
        track_ids=tuple(kept),
        matched_tags=MappingProxyType(matched_tags),
        relaxation_level=relaxation,
    )


def to_candidate_document(candidates: CandidateSet, catalog: Catalog) -> str:
    """Serialize candidates to the fixed JSON document handed to refinement."""
    records = []
    for track_id in candidates.track_ids:
        track = catalog.tracks.get(track_id)
        if track is None:
            raise UnknownTrackId(track_id)
        records.append(
            {
                "track_id": track_id,
                "title": track.title,
                "artist_name": track.artist_name,
                "tags": sorted(str(t) for t in track.tags),
                "matched_tags": sorted(str(t) for t in candidates.matched_tags.get(track_id, frozenset())),
            }
        )
    document = {"relaxation_level": candidates.relaxation_level, "candidates": records}
    return json.dumps(document, ensure_ascii=False, separators=(",", ":"))
