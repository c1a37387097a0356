"""HTTP service orchestrating the four-stage pipeline end to end.

Owns the snapshot lifecycle (catalog + index + embeddings swapped atomically
on reload), persists playlists and events, and degrades LLM stages to their
deterministic fallbacks rather than failing a request.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Query as QueryParam, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .analytics import listen_through, tag_frequencies
from .catalog import Catalog, TagTaxonomy, default_taxonomy, load_catalog, load_taxonomy
from .config import ServiceConfig
from .errors import (
    EmptyCandidateSet,
    FallbackRequired,
    FixtureMiss,
    InvalidEvent,
    InvalidQuery,
    LlmUnavailable,
    NoTagsExtracted,
    T2PError,
    UnknownPlaylist,
    UnparseableResponse,
)
from .extraction import Extractor, Lexicon, Query
from .llm import CompletionRequest, LlmGateway, RemoteBackend, ReplayBackend, UsageLedger
from .personalization import EmbeddingStore, load_embeddings, rank_for_user
from .refinement import (
    Playlist,
    PlaylistProvenance,
    RefinementCandidate,
    RefinementRequest,
    build_refinement_prompt,
    parse_llm_tracklist,
    refine_deterministic,
)
from .retrieval import InvertedIndex, MatchSpec, build_index, retrieve, to_candidate_document
from .store import ExtractedTag, GenerationRecord, PlaylistEvent, PlaylistStore

REFORMULATE_HINT = (
    "No tracks matched this request. Try reformulating with a genre, mood, "
    "or decade, e.g. \"90s rock for a road trip\"."
)


@dataclass(frozen=True)
class Snapshot:
    catalog: Catalog
    index: InvertedIndex
    embeddings: EmbeddingStore

    @property
    def snapshot_id(self) -> int:
        return self.catalog.snapshot_id


@dataclass(frozen=True)
class GenerationOutcome:
    playlist: Playlist
    record: GenerationRecord
    tracks: tuple[dict, ...]
    snapshot_id: int


class PlaylistService:
    """Pipeline orchestration over immutable snapshots and an append-only store."""

    def __init__(
        self,
        config: ServiceConfig,
        gateways: dict[str, LlmGateway] | None = None,
        ledger: UsageLedger | None = None,
    ):
        self.config = config
        self.taxonomy: TagTaxonomy = (
            load_taxonomy(config.taxonomy_path) if config.taxonomy_path else default_taxonomy()
        )
        self.lexicon = (
            Lexicon.load(config.lexicon_path, self.taxonomy)
            if config.lexicon_path
            else Lexicon.default(self.taxonomy)
        )
        self.ledger = ledger if ledger is not None else UsageLedger()
        self.gateways = gateways if gateways is not None else self._build_gateways()
        self.extractor = Extractor(
            self.taxonomy,
            self.lexicon,
            self.gateways,
            max_output_tokens=config.llm_max_output_tokens,
        )
        self._snapshot = self._build_snapshot(config.catalog_path, config.embeddings_path, snapshot_id=1)
        self.store = PlaylistStore(config.store_path)
        self._reload_lock = threading.Lock()
        self._counter_lock = threading.Lock()
        self._counters = {
            "requests": 0,
            "degraded": 0,
            "hallucinations_dropped": 0,
            "extraction_tags_dropped": 0,
        }

    def _build_gateways(self) -> dict[str, LlmGateway]:
        gateways: dict[str, LlmGateway] = {}
        cfg = self.config
        if cfg.llm_endpoint:
            backend = RemoteBackend(
                endpoint=cfg.llm_endpoint,
                api_key=cfg.llm_api_key,
                model=cfg.llm_model,
                timeout_s=cfg.llm_timeout_s,
            )
            gateways["llm"] = LlmGateway(
                backend,
                ledger=self.ledger,
                max_retries=cfg.llm_max_retries,
                backoff_base_s=cfg.llm_backoff_base_s,
                stage_budget_s=cfg.llm_stage_budget_s,
                max_in_flight=cfg.llm_max_in_flight,
            )
        if cfg.fixtures_dir:
            gateways["replay"] = LlmGateway(ReplayBackend(cfg.fixtures_dir), ledger=self.ledger)
        return gateways

    def _build_snapshot(self, catalog_path: str, embeddings_path: str, snapshot_id: int) -> Snapshot:
        catalog = load_catalog(catalog_path, self.taxonomy, snapshot_id=snapshot_id)
        index = build_index(catalog)
        embeddings = load_embeddings(embeddings_path, snapshot_id=snapshot_id)
        return Snapshot(catalog=catalog, index=index, embeddings=embeddings)

    @property
    def snapshot(self) -> Snapshot:
        return self._snapshot

    def _bump(self, counter: str, amount: int = 1) -> None:
        with self._counter_lock:
            self._counters[counter] += amount

    # -- pipeline ---------------------------------------------------------------

    def generate_playlist(
        self,
        user_id: str,
        query_text: str,
        length: int | None = None,
        extraction_backend: str | None = None,
        refinement_backend: str | None = None,
    ) -> GenerationOutcome:
        """Run extract -> retrieve -> rank -> refine, persist, and return.

        LLM stage failures fall back to the deterministic stages and mark the
        outcome degraded; InvalidQuery, NoTagsExtracted, and EmptyCandidateSet
        propagate to the caller.
        """
        self._bump("requests")
        if length is not None and length < 1:
            raise InvalidQuery("length must be >= 1")
        query = Query(text=query_text, user_id=user_id)
        snap = self._snapshot  # single snapshot for the whole request

        ext_backend = extraction_backend or self.config.extraction_backend
        extraction = self.extractor.extract(query, ext_backend)
        degraded = ext_backend == "llm" and extraction.backend_used != "llm"
        if extraction.dropped:
            self._bump("extraction_tags_dropped", extraction.dropped)

        spec = MatchSpec(
            required=extraction.explicit_tags(),
            preferred=extraction.implicit_tags(),
            limit=self.config.retrieval_limit,
        )
        candidates = retrieve(snap.index, spec, self.config.min_candidates)
        ranking = rank_for_user(user_id, candidates, snap.embeddings)

        ref_candidates = []
        for entry in ranking.entries:
            track = snap.catalog.tracks[entry.track_id]
            ref_candidates.append(
                RefinementCandidate(
                    track_id=track.track_id,
                    title=track.title,
                    artist_id=track.artist_id,
                    artist_name=track.artist_name,
                    tags=track.tags,
                    score=entry.score,
                )
            )
        request = RefinementRequest(
            query_text=query_text,
            candidates=tuple(ref_candidates),
            query_tags=extraction.tags(),
            target_length=length or self.config.target_length,
            artist_cap=self.config.artist_cap,
        )

        ref_backend = refinement_backend or self.config.refinement_backend
        playlist, used_ref, ref_degraded = self._refine(request, ref_backend)
        degraded = degraded or ref_degraded

        provenance = PlaylistProvenance(
            extraction_backend=extraction.backend_used,
            refinement_backend=used_ref,
            relaxation_level=candidates.relaxation_level,
            personalized=ranking.personalized,
            degraded=degraded,
        )
        playlist = Playlist(
            playlist_id=playlist.playlist_id,
            title=playlist.title,
            track_ids=playlist.track_ids,
            provenance=provenance,
            created_at=playlist.created_at,
        )
        if degraded:
            self._bump("degraded")

        record = GenerationRecord(
            playlist_id=playlist.playlist_id,
            user_id=user_id,
            query_text=query_text,
            extracted=tuple(
                ExtractedTag(p.tag.facet, p.tag.value, p.explicitness) for p in extraction.predictions
            ),
            relaxation_level=candidates.relaxation_level,
            personalized=ranking.personalized,
            degraded=degraded,
            extraction_backend=extraction.backend_used,
            refinement_backend=used_ref,
            created_at=playlist.created_at,
        )
        self.store.append_generation(playlist, record)

        tracks = tuple(self._track_payload(tid, snap) for tid in playlist.track_ids)
        return GenerationOutcome(playlist=playlist, record=record, tracks=tracks, snapshot_id=snap.snapshot_id)

    def _refine(self, request: RefinementRequest, backend: str) -> tuple[Playlist, str, bool]:
        """Returns (playlist, backend actually used, degraded flag)."""
        if backend == "deterministic":
            return refine_deterministic(request), "deterministic", False
        if backend not in ("llm", "replay"):
            raise ValueError(f"unknown refinement backend {backend!r}")

        gateway = self.gateways.get(backend)
        if gateway is None:
            if backend == "replay":
                raise ValueError("no replay gateway configured")
            return refine_deterministic(request), "deterministic", True
        try:
            prompt = build_refinement_prompt(request)
            response = gateway.complete(
                CompletionRequest(
                    prompt=prompt,
                    purpose="refinement",
                    max_output_tokens=self.config.llm_max_output_tokens,
                )
            )
            parsed = parse_llm_tracklist(response.text, request)
        except FallbackRequired as exc:
            self._bump("hallucinations_dropped", exc.hallucinations_dropped)
            return refine_deterministic(request), "deterministic", True
        except FixtureMiss:
            if backend == "replay":
                raise
            return refine_deterministic(request), "deterministic", True
        except (LlmUnavailable, UnparseableResponse):
            return refine_deterministic(request), "deterministic", True

        self._bump("hallucinations_dropped", parsed.hallucinations_dropped)
        playlist = Playlist(
            playlist_id=uuid.uuid4().hex,
            title=parsed.title,
            track_ids=parsed.track_ids,
            provenance=PlaylistProvenance(),
            created_at=datetime.now(timezone.utc),
        )
        return playlist, backend, False

    def _track_payload(self, track_id: str, snap: Snapshot) -> dict:
        track = snap.catalog.tracks.get(track_id)
        if track is None:
            return {"track_id": track_id, "title": None, "artist_name": None}
        return {"track_id": track_id, "title": track.title, "artist_name": track.artist_name}

    # -- events / snapshots -------------------------------------------------------

    def record_event(
        self,
        playlist_id: str,
        occurred_at: datetime | None = None,
        event_type: str = "listened",
    ) -> bool:
        event = PlaylistEvent(
            playlist_id=playlist_id,
            occurred_at=occurred_at or datetime.now(timezone.utc),
            event_type=event_type,
        )
        return self.store.append_event(event)

    def reload_snapshots(self, catalog_path: str | None = None, embeddings_path: str | None = None) -> int:
        """Build a new snapshot off-line, then swap. Load errors leave the old
        snapshot serving; in-flight requests finish on whichever snapshot they
        grabbed at entry."""
        with self._reload_lock:
            catalog_path = catalog_path or self.config.catalog_path
            embeddings_path = embeddings_path or self.config.embeddings_path
            next_id = self._snapshot.snapshot_id + 1
            fresh = self._build_snapshot(catalog_path, embeddings_path, snapshot_id=next_id)
            self.config.catalog_path = catalog_path
            self.config.embeddings_path = embeddings_path
            self._snapshot = fresh  # atomic reference swap
            return next_id

    # -- observability --------------------------------------------------------------

    def debug_trace(self, user_id: str, query_text: str) -> dict:
        """Stage-by-stage trace with the deterministic backends; never persists
        and never spends tokens."""
        query = Query(text=query_text, user_id=user_id)
        snap = self._snapshot
        extraction = self.extractor.extract(query, "rule")
        spec = MatchSpec(
            required=extraction.explicit_tags(),
            preferred=extraction.implicit_tags(),
            limit=self.config.retrieval_limit,
        )
        candidates = retrieve(snap.index, spec, self.config.min_candidates)
        ranking = rank_for_user(user_id, candidates, snap.embeddings)
        return {
            "snapshot_id": snap.snapshot_id,
            "query": {"user_id": user_id, "text": query_text},
            "extraction": {
                "backend_used": extraction.backend_used,
                "predictions": [
                    {
                        "facet": p.tag.facet,
                        "value": p.tag.value,
                        "explicitness": p.explicitness,
                        "source_span": list(p.source_span) if p.source_span else None,
                    }
                    for p in extraction.predictions
                ],
            },
            "match_spec": {
                "required": sorted(str(t) for t in spec.required),
                "preferred": sorted(str(t) for t in spec.preferred),
                "limit": spec.limit,
            },
            "retrieval": {
                "relaxation_level": candidates.relaxation_level,
                "track_ids": list(candidates.track_ids),
                "candidate_document": to_candidate_document(candidates, snap.catalog),
            },
            "ranking": {
                "personalized": ranking.personalized,
                "entries": [{"track_id": e.track_id, "score": e.score} for e in ranking.entries],
            },
        }

    def metrics(self) -> dict:
        with self._counter_lock:
            counters = dict(self._counters)
        return {
            **counters,
            "tokens": self.ledger.report(),
            "snapshot_id": self._snapshot.snapshot_id,
            "playlists_stored": len(self.store),
        }

    def close(self) -> None:
        self.store.close()


# -- HTTP layer ----------------------------------------------------------------------


class GenerateBody(BaseModel):
    user_id: str
    query: str
    length: Optional[int] = None


class EventBody(BaseModel):
    type: str = "listened"
    occurred_at: Optional[datetime] = None


class ReloadBody(BaseModel):
    catalog_path: Optional[str] = None
    embeddings_path: Optional[str] = None


_STATUS_BY_ERROR: tuple[tuple[type, int], ...] = (
    (InvalidQuery, 400),
    (InvalidEvent, 400),
    (NoTagsExtracted, 422),
    (EmptyCandidateSet, 422),
    (UnknownPlaylist, 404),
    (LlmUnavailable, 503),
)


def _error_response(exc: T2PError) -> JSONResponse:
    status = 500
    for error_type, code in _STATUS_BY_ERROR:
        if isinstance(exc, error_type):
            status = code
            break
    payload = {"error": type(exc).__name__, "detail": str(exc)}
    if isinstance(exc, (NoTagsExtracted, EmptyCandidateSet)):
        payload["hint"] = REFORMULATE_HINT
    return JSONResponse(status_code=status, content=payload)


def create_app(service: PlaylistService) -> FastAPI:
    app = FastAPI(title="t2p", version="0.1.0")
    app.state.service = service
    app.add_middleware(
        CORSMiddleware,
        allow_origins=service.config.cors_origins,
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(T2PError)
    async def t2p_error_handler(_request: Request, exc: T2PError):
        return _error_response(exc)

    @app.post("/v1/playlists", status_code=201)
    def create_playlist(body: GenerateBody):
        outcome = service.generate_playlist(body.user_id, body.query, length=body.length)
        return {
            "playlist_id": outcome.playlist.playlist_id,
            "title": outcome.playlist.title,
            "tracks": list(outcome.tracks),
            "provenance": outcome.playlist.provenance.as_dict(),
            "snapshot_id": outcome.snapshot_id,
        }

    @app.get("/v1/playlists/{playlist_id}")
    def get_playlist(playlist_id: str):
        playlist = service.store.playlist(playlist_id)
        snap = service.snapshot
        return {
            "playlist_id": playlist.playlist_id,
            "title": playlist.title,
            "tracks": [service._track_payload(tid, snap) for tid in playlist.track_ids],
            "provenance": playlist.provenance.as_dict(),
            "created_at": playlist.created_at.isoformat(),
        }

    @app.post("/v1/playlists/{playlist_id}/events")
    def record_event(playlist_id: str, body: EventBody):
        stored = service.record_event(playlist_id, occurred_at=body.occurred_at, event_type=body.type)
        return {"playlist_id": playlist_id, "stored": stored}

    @app.get("/v1/debug/pipeline")
    def debug_pipeline(user_id: str, q: str):
        return service.debug_trace(user_id, q)

    @app.get("/v1/reports/engagement")
    def engagement_report(window: int = QueryParam(7, ge=1)):
        report = listen_through(service.store.records(), service.store.events(), window_days=window)
        return {
            "window_days": report.window_days,
            "generated_count": report.generated_count,
            "listened_count": report.listened_count,
            "listen_through_rate": report.listen_through_rate,
        }

    @app.get("/v1/reports/tags")
    def tags_report(facet: Optional[str] = None):
        report = tag_frequencies(service.store.records())
        entries = report.for_facet(facet) if facet else report.entries
        return {
            "entries": [
                {"facet": e.facet, "value": e.value, "count": e.count, "share": e.share} for e in entries
            ]
        }

    @app.post("/v1/admin/reload")
    def reload_snapshots(body: ReloadBody):
        try:
            snapshot_id = service.reload_snapshots(body.catalog_path, body.embeddings_path)
        except (T2PError, OSError) as exc:
            return JSONResponse(
                status_code=400,
                content={
                    "error": type(exc).__name__,
                    "detail": str(exc),
                    "snapshot_id": service.snapshot.snapshot_id,
                },
            )
        return {"snapshot_id": snapshot_id}

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "snapshot_id": service.snapshot.snapshot_id}

    @app.get("/metrics")
    def metrics():
        return service.metrics()

    ui_dir = service.config.ui_dir
    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
