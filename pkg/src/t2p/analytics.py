"""Engagement and tag-demand metrics computed on demand over the event log."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import timedelta
from typing import Iterable, Sequence

from .store import GenerationRecord, PlaylistEvent

DEFAULT_WINDOW_DAYS = 7


@dataclass(frozen=True)
class EngagementReport:
    window_days: int
    generated_count: int
    listened_count: int
    listen_through_rate: float


def listen_through(
    records: Sequence[GenerationRecord],
    events: Iterable[PlaylistEvent],
    window_days: int = DEFAULT_WINDOW_DAYS,
) -> EngagementReport:
    """Fraction of playlists with a listened event inside the window.

    A playlist counts iff some event satisfies created_at <= occurred_at <
    created_at + window_days (strict upper bound).
    """
    if window_days < 1:
        raise ValueError("window_days must be >= 1")
    listened_at: dict[str, list] = {}
    for event in events:
        if event.event_type == "listened":
            listened_at.setdefault(event.playlist_id, []).append(event.occurred_at)

    window = timedelta(days=window_days)
    listened = 0
    for record in records:
        end = record.created_at + window
        if any(record.created_at <= t < end for t in listened_at.get(record.playlist_id, ())):
            listened += 1

    generated = len(records)
    rate = listened / generated if generated else 0.0
    return EngagementReport(
        window_days=window_days,
        generated_count=generated,
        listened_count=listened,
        listen_through_rate=rate,
    )


@dataclass(frozen=True)
class TagFrequency:
    facet: str
    value: str
    count: int
    share: float  # of all requests for the same facet


@dataclass(frozen=True)
class TagFrequencyReport:
    entries: tuple[TagFrequency, ...]

    def for_facet(self, facet: str) -> tuple[TagFrequency, ...]:
        return tuple(e for e in self.entries if e.facet == facet)


def tag_frequencies(records: Sequence[GenerationRecord]) -> TagFrequencyReport:
    """Count every extracted tag across records; shares are per facet."""
    counts: dict[tuple[str, str], int] = {}
    facet_totals: dict[str, int] = {}
    for record in records:
        for tag in record.extracted:
            counts[(tag.facet, tag.value)] = counts.get((tag.facet, tag.value), 0) + 1
            facet_totals[tag.facet] = facet_totals.get(tag.facet, 0) + 1

    entries = [
        TagFrequency(facet=facet, value=value, count=count, share=count / facet_totals[facet])
        for (facet, value), count in counts.items()
    ]
    entries.sort(key=lambda e: (e.facet, -e.count, e.value))
    return TagFrequencyReport(entries=tuple(entries))
