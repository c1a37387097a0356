"""Exception taxonomy shared across the pipeline.

Errors carry enough context (line numbers, offending values) to be actionable
in logs and API responses without string parsing.
"""

from __future__ import annotations


class T2PError(Exception):
    """Base class for all errors raised by this package."""


# -- catalog ingestion --------------------------------------------------------

class MalformedRecord(T2PError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateTrackId(T2PError):
    def __init__(self, track_id: str, line_no: int | None = None):
        where = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"duplicate track_id {track_id!r}{where}")
        self.track_id = track_id
        self.line_no = line_no


class UnknownTag(T2PError):
    def __init__(self, facet: str, value: str):
        super().__init__(f"no taxonomy entry for {facet}:{value}")
        self.facet = facet
        self.value = value


# -- query handling and extraction --------------------------------------------

class InvalidQuery(T2PError):
    pass


class NoTagsExtracted(T2PError):
    pass


class UnparseableResponse(T2PError):
    pass


# -- retrieval -----------------------------------------------------------------

class EmptyCandidateSet(T2PError):
    pass


class UnknownTrackId(T2PError):
    def __init__(self, track_id: str):
        super().__init__(f"track {track_id!r} not in catalog snapshot")
        self.track_id = track_id


# -- embeddings ----------------------------------------------------------------

class MalformedRow(T2PError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DimensionMismatch(T2PError):
    def __init__(self, message: str, line_no: int | None = None):
        super().__init__(message)
        self.line_no = line_no


class ZeroVector(T2PError):
    def __init__(self, line_no: int | None = None, ident: str | None = None):
        super().__init__(f"zero vector for {ident!r}" if ident else f"zero vector at line {line_no}")
        self.line_no = line_no
        self.ident = ident


# -- refinement ----------------------------------------------------------------

class EmptyPlaylist(T2PError):
    pass


class FallbackRequired(T2PError):
    def __init__(self, message: str, hallucinations_dropped: int = 0):
        super().__init__(message)
        self.hallucinations_dropped = hallucinations_dropped


# -- llm gateway ---------------------------------------------------------------

class LlmUnavailable(T2PError):
    """Base for gateway failures that trigger deterministic fallbacks."""


class TimeoutExhausted(LlmUnavailable):
    def __init__(self, attempts: int, last_error: str):
        super().__init__(f"gave up after {attempts} attempts: {last_error}")
        self.attempts = attempts
        self.last_error = last_error


class FixtureMiss(LlmUnavailable):
    def __init__(self, fixture_key: str):
        super().__init__(f"no recorded fixture for prompt hash {fixture_key}")
        self.fixture_key = fixture_key


class RemoteRejected(LlmUnavailable):
    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"remote endpoint returned status {status}" + (f": {detail}" if detail else ""))
        self.status = status
        self.detail = detail


# -- service / persistence -----------------------------------------------------

class UnknownPlaylist(T2PError):
    def __init__(self, playlist_id: str):
        super().__init__(f"no playlist with id {playlist_id!r}")
        self.playlist_id = playlist_id


class InvalidEvent(T2PError):
    pass
