"""Random-instance generators and independent oracles shared by the tests.

The oracles here deliberately avoid the code paths they check: retrieval is
verified by per-track linear scans, ranking by a from-scratch double-precision
cosine, and refinement length by per-artist counting (itself cross-checked by
exhaustive subset enumeration on small instances).
"""

from __future__ import annotations

import random
from itertools import combinations
from types import MappingProxyType

import numpy as np

from t2p.catalog import Catalog, Tag, Track, tracks_with_tag
from t2p.personalization import EmbeddingStore
from t2p.refinement import RefinementCandidate, RefinementRequest
from t2p.retrieval import MatchSpec


def random_catalog(rng: random.Random, taxonomy, max_tracks: int = 1000, max_tags: int = 4) -> Catalog:
    n = rng.randint(1, max_tracks)
    all_tags = [Tag(facet, value) for facet in taxonomy.facets for value in sorted(taxonomy.values(facet))]
    tracks = {}
    for i in range(n):
        track_id = f"R{i:05d}"
        count = rng.randint(0, max_tags)
        tags = set()
        decades = 0
        for tag in rng.sample(all_tags, count):
            if tag.facet == "decade":
                if decades:
                    continue
                decades += 1
            tags.add(tag)
        tracks[track_id] = Track(
            track_id=track_id,
            title=f"Track {i}",
            artist_id=f"A{rng.randint(0, max(1, n // 4)):04d}",
            artist_name=f"Artist {i % 37}",
            duration_sec=rng.randint(60, 400),
            tags=frozenset(tags),
        )
    return Catalog(tracks=MappingProxyType(tracks), taxonomy=taxonomy, snapshot_id=1)


def random_spec(rng: random.Random, taxonomy, limit: int = 10_000) -> MatchSpec:
    all_tags = [Tag(facet, value) for facet in taxonomy.facets for value in sorted(taxonomy.values(facet))]
    total = rng.randint(1, 4)
    chosen = rng.sample(all_tags, total)
    required_count = rng.randint(0 if total > 1 else 1, total)
    return MatchSpec(
        required=frozenset(chosen[:required_count]),
        preferred=frozenset(chosen[required_count:]),
        limit=limit,
    )


def scan_oracle(catalog: Catalog, tags) -> set[str]:
    """AND across facets, OR within a facet, via per-tag linear scans."""
    by_facet: dict[str, set[str]] = {}
    for tag in tags:
        ids = tracks_with_tag(catalog, tag)
        if tag.facet in by_facet:
            by_facet[tag.facet] |= ids
        else:
            by_facet[tag.facet] = set(ids)
    result: set[str] | None = None
    for ids in by_facet.values():
        result = ids if result is None else result & ids
    return result if result is not None else set()


def random_embedding_instance(seed: int, n_tracks: int, dim: int, with_user: bool = True):
    """Seeded store of float32 vectors; no zero vectors by construction."""
    rng = np.random.default_rng(seed)
    users = {}
    if with_user:
        users["U1"] = _nonzero(rng, dim)
    tracks = {f"K{i:05d}": _nonzero(rng, dim) for i in range(n_tracks)}
    store = EmbeddingStore(
        dimension=dim,
        users=MappingProxyType(users),
        tracks=MappingProxyType(tracks),
    )
    return store, list(tracks)


def _nonzero(rng, dim: int) -> np.ndarray:
    while True:
        vec = rng.standard_normal(dim).astype(np.float32)
        if vec.any():
            return vec


def oracle_cosine_order(user_vec: np.ndarray, tracks: dict[str, np.ndarray], ids) -> list[tuple[str, float]]:
    """Independent double-precision cosine sort: dot(u,v)/(|u||v|), ties by id."""
    scores = []
    for track_id in ids:
        a = user_vec.astype(np.float64)
        b = tracks[track_id].astype(np.float64)
        score = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
        scores.append((track_id, score))
    scores.sort(key=lambda item: (-item[1], item[0]))
    return scores


def random_refinement_request(rng: random.Random, max_tracks: int = 40) -> RefinementRequest:
    n = rng.randint(1, max_tracks)
    n_artists = rng.randint(1, max(1, n // 2) + 1)
    candidates = tuple(
        RefinementCandidate(
            track_id=f"C{i:04d}",
            title=f"Cut {i}",
            artist_id=f"B{rng.randint(1, n_artists):03d}",
            artist_name="x",
            score=round(rng.random(), 6) if rng.random() > 0.2 else None,
        )
        for i in range(n)
    )
    return RefinementRequest(
        query_text="q",
        candidates=candidates,
        target_length=rng.randint(1, max_tracks + 5),
        artist_cap=rng.randint(1, 5),
    )


def counting_max_selectable(request: RefinementRequest) -> int:
    """Max playlist length under the artist cap, by per-artist counting."""
    per_artist: dict[str, int] = {}
    for c in request.candidates:
        per_artist[c.artist_id] = per_artist.get(c.artist_id, 0) + 1
    achievable = sum(min(count, request.artist_cap) for count in per_artist.values())
    return min(request.target_length, achievable)


def exhaustive_max_selectable(request: RefinementRequest) -> int:
    """Largest valid subset by full enumeration; only sane for small inputs."""
    ids = [c.track_id for c in request.candidates]
    artist = {c.track_id: c.artist_id for c in request.candidates}
    best = 0
    for size in range(min(len(ids), request.target_length), best, -1):
        for subset in combinations(ids, size):
            counts: dict[str, int] = {}
            ok = True
            for track_id in subset:
                a = artist[track_id]
                counts[a] = counts.get(a, 0) + 1
                if counts[a] > request.artist_cap:
                    ok = False
                    break
            if ok:
                return size
    return best
