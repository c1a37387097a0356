"""Turn a free-text query into explicit and implicit taxonomy tags.

Three interchangeable backends: a deterministic keyword-lexicon extractor,
an LLM-backed extractor (prompt + structured-response parsing), and recorded
replay. The rule backend doubles as the fallback when the LLM path fails.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .catalog import FACETS, Tag, TagTaxonomy
from .errors import InvalidQuery, LlmUnavailable, NoTagsExtracted, UnknownTag, UnparseableResponse
from .llm import CompletionRequest, LlmGateway, recover_json_object

EXPLICIT = "explicit"
IMPLICIT = "implicit"

MAX_QUERY_CHARS = 500
MAX_PREDICTIONS = 6


@dataclass(frozen=True)
class Query:
    text: str
    user_id: str

    def __post_init__(self):
        if not self.text.strip():
            raise InvalidQuery("query text is empty")
        if len(self.text) > MAX_QUERY_CHARS:
            raise InvalidQuery(f"query text exceeds {MAX_QUERY_CHARS} characters")


@dataclass(frozen=True)
class TagPrediction:
    """A deduced tag. Explicit predictions point at the query characters that
    triggered them; implicit ones carry no span."""

    tag: Tag
    explicitness: str
    source_span: tuple[int, int] | None = None

    def __post_init__(self):
        if self.explicitness not in (EXPLICIT, IMPLICIT):
            raise ValueError(f"bad explicitness {self.explicitness!r}")
        if self.explicitness == IMPLICIT and self.source_span is not None:
            raise ValueError("implicit predictions must not carry a span")


@dataclass(frozen=True)
class ExtractionResult:
    predictions: tuple[TagPrediction, ...]
    backend_used: str
    dropped: int = 0  # out-of-taxonomy or malformed tags discarded while parsing

    def __post_init__(self):
        seen = set()
        decades = 0
        for pred in self.predictions:
            key = (pred.tag.facet, pred.tag.value)
            if key in seen:
                raise ValueError(f"duplicate prediction for {pred.tag}")
            seen.add(key)
            decades += pred.tag.facet == "decade"
        if decades > 1:
            raise ValueError("more than one decade prediction")

    def tags(self) -> tuple[Tag, ...]:
        return tuple(p.tag for p in self.predictions)

    def explicit_tags(self) -> frozenset[Tag]:
        return frozenset(p.tag for p in self.predictions if p.explicitness == EXPLICIT)

    def implicit_tags(self) -> frozenset[Tag]:
        return frozenset(p.tag for p in self.predictions if p.explicitness == IMPLICIT)


@dataclass(frozen=True)
class LexiconEntry:
    phrase: str
    tag: Tag
    explicitness: str


class Lexicon:
    """Keyword/phrase triggers, matched longest-first and case-insensitively."""

    def __init__(self, entries: list[LexiconEntry], taxonomy: TagTaxonomy):
        for entry in entries:
            if not taxonomy.is_valid(entry.tag):
                raise UnknownTag(entry.tag.facet, entry.tag.value)
            if entry.explicitness == EXPLICIT:
                # The span invariant requires that slicing an explicit match out of
                # the query resolves back to the predicted value.
                resolved = taxonomy.normalize(entry.tag.facet, entry.phrase)
                if resolved != entry.tag:
                    raise ValueError(
                        f"explicit phrase {entry.phrase!r} does not normalize to {entry.tag}"
                    )
        self.entries = tuple(entries)
        self._compiled = [
            (entry, re.compile(rf"(?<!\w){re.escape(entry.phrase)}(?!\w)", re.IGNORECASE))
            for entry in sorted(entries, key=lambda e: (-len(e.phrase), e.phrase))
        ]

    def __len__(self) -> int:
        return len(self.entries)

    def find_matches(self, text: str) -> list[tuple[LexiconEntry, tuple[int, int]]]:
        """All non-overlapping matches, longer phrases claiming spans first."""
        claimed: list[tuple[int, int]] = []
        found = []
        for entry, pattern in self._compiled:
            for m in pattern.finditer(text):
                span = (m.start(), m.end())
                if any(span[0] < end and start < span[1] for start, end in claimed):
                    continue
                claimed.append(span)
                found.append((entry, span))
        return found

    @classmethod
    def load(cls, path: str | Path, taxonomy: TagTaxonomy) -> "Lexicon":
        with open(path, encoding="utf-8") as fh:
            return cls._parse(fh.read(), taxonomy)

    @classmethod
    def default(cls, taxonomy: TagTaxonomy) -> "Lexicon":
        text = resources.files("t2p.data").joinpath("lexicon.tsv").read_text("utf-8")
        return cls._parse(text, taxonomy)

    @classmethod
    def _parse(cls, text: str, taxonomy: TagTaxonomy) -> "Lexicon":
        entries = []
        seen_phrases = set()
        for line_no, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"lexicon line {line_no}: expected 3 tab-separated fields")
            phrase, tag_text, explicitness = (p.strip() for p in parts)
            facet, _, value = tag_text.partition(":")
            if explicitness not in (EXPLICIT, IMPLICIT):
                raise ValueError(f"lexicon line {line_no}: bad explicitness {explicitness!r}")
            key = phrase.lower()
            if key in seen_phrases:
                raise ValueError(f"lexicon line {line_no}: duplicate phrase {phrase!r}")
            seen_phrases.add(key)
            entries.append(LexiconEntry(phrase=key, tag=Tag(facet, value), explicitness=explicitness))
        return cls(entries, taxonomy)


def extract_rule_based(
    query: Query,
    taxonomy: TagTaxonomy,
    lexicon: Lexicon,
    max_tags: int = MAX_PREDICTIONS,
) -> ExtractionResult:
    """Deterministic extraction from the keyword lexicon.

    Explicit predictions are ordered by span start, implicit ones after them
    by facet name. Raises NoTagsExtracted when nothing matches.
    """
    matches = sorted(lexicon.find_matches(query.text), key=lambda m: m[1])
    explicit: dict[Tag, tuple[int, int]] = {}
    implicit: dict[Tag, tuple[int, int]] = {}
    for entry, span in matches:
        bucket = explicit if entry.explicitness == EXPLICIT else implicit
        if entry.tag not in bucket:
            bucket[entry.tag] = span

    # Same tag triggered both ways: the explicit reading wins.
    for tag in explicit:
        implicit.pop(tag, None)

    predictions = _assemble(
        explicit=[(tag, span) for tag, span in explicit.items()],
        implicit=list(implicit),
        max_tags=max_tags,
    )
    if not predictions:
        raise NoTagsExtracted(f"no lexicon entry matched {query.text!r}")
    return ExtractionResult(predictions=tuple(predictions), backend_used="rule")


def _assemble(
    explicit: list[tuple[Tag, tuple[int, int] | None]],
    implicit: list[Tag],
    max_tags: int,
) -> list[TagPrediction]:
    """Apply the one-decade rule and the prediction cap, explicit entries first."""
    explicit = sorted(explicit, key=lambda item: (item[1] is None, item[1] or (0, 0), item[0].facet, item[0].value))
    implicit = sorted(implicit, key=lambda tag: (tag.facet, tag.value))

    predictions: list[TagPrediction] = []
    have_decade = False
    for tag, span in explicit:
        if tag.facet == "decade":
            if have_decade:
                continue
            have_decade = True
        predictions.append(TagPrediction(tag=tag, explicitness=EXPLICIT, source_span=span))
    for tag in implicit:
        if tag.facet == "decade":
            if have_decade:
                continue
            have_decade = True
        predictions.append(TagPrediction(tag=tag, explicitness=IMPLICIT))
    return predictions[:max_tags]


# -- LLM path -------------------------------------------------------------------

_PROMPT_TEMPLATE = """\
You label music requests with tags from a fixed vocabulary.

Query: "{query}"

Allowed tags, one line per facet:
{vocabulary}

Mark a tag "explicit" when the query names it literally and "implicit" when it is
inferred from context. Use at most {max_tags} tags and at most one decade tag.
Answer with a single JSON object and nothing else, shaped exactly like:
{{"tags": [{{"facet": "mood", "value": "chill", "explicitness": "explicit"}}]}}
"""


def build_extraction_prompt(query: Query, taxonomy: TagTaxonomy, max_tags: int = MAX_PREDICTIONS) -> str:
    """Deterministic prompt embedding the query and the full vocabulary."""
    lines = []
    for facet in FACETS:
        values = sorted(taxonomy.values(facet))
        if values:
            lines.append(f"- {facet}: {', '.join(values)}")
    return _PROMPT_TEMPLATE.format(query=query.text, vocabulary="\n".join(lines), max_tags=max_tags)


def parse_llm_tags(
    response_text: str,
    taxonomy: TagTaxonomy,
    query_text: str | None = None,
    max_tags: int = MAX_PREDICTIONS,
) -> ExtractionResult:
    """Parse a structured tag response, dropping anything outside the taxonomy.

    Out-of-taxonomy or malformed entries are counted, not fatal; duplicates
    collapse keeping the explicit variant. When the query text is supplied,
    explicit tags get a source span wherever one of their surface forms
    (canonical value or synonym) occurs in it. Raises UnparseableResponse when
    no structured object can be recovered and NoTagsExtracted when every tag
    was dropped.
    """
    payload = recover_json_object(response_text)
    raw_tags = payload.get("tags")
    if not isinstance(raw_tags, list):
        raise UnparseableResponse("response object has no 'tags' list")

    dropped = 0
    order: list[Tag] = []
    explicitness: dict[Tag, str] = {}
    for item in raw_tags:
        if not isinstance(item, dict):
            dropped += 1
            continue
        facet = item.get("facet")
        value = item.get("value")
        mark = str(item.get("explicitness", "")).strip().lower()
        if not isinstance(facet, str) or not isinstance(value, str) or mark not in (EXPLICIT, IMPLICIT):
            dropped += 1
            continue
        try:
            tag = taxonomy.normalize(facet.strip().lower(), value)
        except UnknownTag:
            dropped += 1
            continue
        if tag not in explicitness:
            order.append(tag)
            explicitness[tag] = mark
        elif mark == EXPLICIT:
            explicitness[tag] = EXPLICIT

    explicit_items: list[tuple[Tag, tuple[int, int] | None]] = []
    implicit_items: list[Tag] = []
    for tag in order:
        if explicitness[tag] == EXPLICIT:
            span = _locate_span(tag, taxonomy, query_text) if query_text else None
            explicit_items.append((tag, span))
        else:
            implicit_items.append(tag)

    predictions = _assemble(explicit_items, implicit_items, max_tags)
    if not predictions:
        raise NoTagsExtracted(f"all {dropped} returned tags were dropped" if dropped else "response held no tags")
    return ExtractionResult(predictions=tuple(predictions), backend_used="llm", dropped=dropped)


def _locate_span(tag: Tag, taxonomy: TagTaxonomy, query_text: str) -> tuple[int, int] | None:
    for form in taxonomy.surface_forms(tag):
        m = re.search(rf"(?<!\w){re.escape(form)}(?!\w)", query_text, re.IGNORECASE)
        if m:
            return (m.start(), m.end())
    return None


class Extractor:
    """Backend dispatcher. The llm backend degrades to the rule backend on any
    gateway or parsing failure; replay is strict and surfaces fixture misses."""

    def __init__(
        self,
        taxonomy: TagTaxonomy,
        lexicon: Lexicon,
        gateways: dict[str, LlmGateway] | None = None,
        max_tags: int = MAX_PREDICTIONS,
        max_output_tokens: int = 256,
    ):
        self.taxonomy = taxonomy
        self.lexicon = lexicon
        self.gateways = gateways or {}
        self.max_tags = max_tags
        self.max_output_tokens = max_output_tokens

    def extract(self, query: Query, backend: str = "rule") -> ExtractionResult:
        if backend == "rule":
            return extract_rule_based(query, self.taxonomy, self.lexicon, self.max_tags)
        if backend == "llm":
            gateway = self.gateways.get("llm")
            if gateway is None:
                return extract_rule_based(query, self.taxonomy, self.lexicon, self.max_tags)
            try:
                result = self._llm_extract(query, gateway)
            except (LlmUnavailable, UnparseableResponse, NoTagsExtracted):
                return extract_rule_based(query, self.taxonomy, self.lexicon, self.max_tags)
            return result
        if backend == "replay":
            gateway = self.gateways.get("replay")
            if gateway is None:
                raise ValueError("no replay gateway configured")
            result = self._llm_extract(query, gateway)
            return ExtractionResult(
                predictions=result.predictions, backend_used="replay", dropped=result.dropped
            )
        raise ValueError(f"unknown extraction backend {backend!r}")

    def _llm_extract(self, query: Query, gateway: LlmGateway) -> ExtractionResult:
        prompt = build_extraction_prompt(query, self.taxonomy, self.max_tags)
        response = gateway.complete(
            CompletionRequest(prompt=prompt, purpose="extraction", max_output_tokens=self.max_output_tokens)
        )
        return parse_llm_tags(response.text, self.taxonomy, query_text=query.text, max_tags=self.max_tags)
