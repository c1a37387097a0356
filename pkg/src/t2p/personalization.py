"""Cosine-similarity re-ranking of candidates against user profile embeddings.

Candidates arrive pre-filtered by retrieval, so scoring is exact brute force
over the candidate slate. Vectors are stored as float32 (the wire format);
unit-normalized float64 copies are derived at load so scores stay within
1e-6 of an independent double-precision cosine.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, MalformedRow, ZeroVector

HEADER_PREFIX = "t2p-embeddings v1 dim="


@dataclass(frozen=True)
class EmbeddingStore:
    dimension: int
    users: Mapping[str, np.ndarray]
    tracks: Mapping[str, np.ndarray]
    snapshot_id: int = 1
    # float64 unit vectors derived from `tracks` at load time.
    unit_tracks: Mapping[str, np.ndarray] = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.unit_tracks is None:
            units = {tid: _unit(vec) for tid, vec in self.tracks.items()}
            object.__setattr__(self, "unit_tracks", MappingProxyType(units))


def _unit(vec: np.ndarray) -> np.ndarray:
    v = vec.astype(np.float64)
    return v / np.linalg.norm(v)


def load_embeddings(path: str | Path, snapshot_id: int = 1) -> EmbeddingStore:
    """Parse the embedding export: a dim header then one csv row per vector.

    Rows are `user|track,<id>,<c1>,...,<cd>`. Rejects wrong-arity rows
    (DimensionMismatch), all-zero vectors (ZeroVector), and anything else
    malformed (MalformedRow). A repeated id replaces the earlier row.
    """
    users: dict[str, np.ndarray] = {}
    tracks: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith(HEADER_PREFIX):
            raise MalformedRow(1, f"bad header {header!r}")
        try:
            dimension = int(header[len(HEADER_PREFIX):])
        except ValueError:
            raise MalformedRow(1, f"bad dimension in header {header!r}") from None
        if dimension < 1:
            raise MalformedRow(1, "dimension must be >= 1")

        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 3:
                raise MalformedRow(line_no, "expected kind,id,components")
            kind, ident = parts[0], parts[1]
            if kind not in ("user", "track"):
                raise MalformedRow(line_no, f"unknown kind {kind!r}")
            if not ident:
                raise MalformedRow(line_no, "empty id")
            if len(parts) - 2 != dimension:
                raise DimensionMismatch(
                    f"line {line_no}: expected {dimension} components, got {len(parts) - 2}", line_no
                )
            try:
                vec = np.array([float(p) for p in parts[2:]], dtype=np.float32)
            except ValueError:
                raise MalformedRow(line_no, "non-numeric component") from None
            if not np.all(np.isfinite(vec)):
                raise MalformedRow(line_no, "non-finite component")
            if not vec.any():
                raise ZeroVector(line_no, ident)
            (users if kind == "user" else tracks)[ident] = vec

    return EmbeddingStore(
        dimension=dimension,
        users=MappingProxyType(users),
        tracks=MappingProxyType(tracks),
        snapshot_id=snapshot_id,
    )


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Double-precision cosine similarity, clamped to [-1, 1] against rounding."""
    if u.shape != v.shape:
        raise DimensionMismatch(f"vector shapes differ: {u.shape} vs {v.shape}")
    a = u.astype(np.float64)
    b = v.astype(np.float64)
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0.0:
        raise ValueError("cosine undefined for zero vectors")
    return float(np.clip(np.dot(a, b) / denom, -1.0, 1.0))


@dataclass(frozen=True)
class ScoredTrack:
    track_id: str
    score: float | None  # None marks a track with no embedding (unscored)


@dataclass(frozen=True)
class RankingResult:
    entries: tuple[ScoredTrack, ...]
    personalized: bool

    def track_ids(self) -> tuple[str, ...]:
        return tuple(e.track_id for e in self.entries)


def rank_for_user(user_id: str, candidates, store: EmbeddingStore) -> RankingResult:
    """Reorder candidates by descending user-track cosine similarity.

    Ties break on ascending track_id. Tracks without an embedding keep their
    retrieval order after all scored tracks; an unknown user passes the whole
    list through unscored with personalized=False. Always a permutation of
    the input.
    """
    ids: Sequence[str] = list(getattr(candidates, "track_ids", candidates))
    user_vec = store.users.get(user_id)
    if user_vec is None:
        return RankingResult(
            entries=tuple(ScoredTrack(tid, None) for tid in ids),
            personalized=False,
        )

    user_unit = _unit(user_vec)
    scored = []
    unscored = []
    for tid in ids:
        track_unit = store.unit_tracks.get(tid)
        if track_unit is None:
            unscored.append(ScoredTrack(tid, None))
        else:
            score = float(np.clip(np.dot(user_unit, track_unit), -1.0, 1.0))
            scored.append(ScoredTrack(tid, score))
    scored.sort(key=lambda st: (-st.score, st.track_id))
    return RankingResult(entries=tuple(scored + unscored), personalized=True)
