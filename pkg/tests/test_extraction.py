"""Rule-based extraction, LLM prompt/response handling, and backend dispatch."""

import json

import httpx
import pytest

from t2p.catalog import Tag
from t2p.errors import FixtureMiss, InvalidQuery, NoTagsExtracted, UnparseableResponse
from t2p.extraction import (
    EXPLICIT,
    IMPLICIT,
    ExtractionResult,
    Extractor,
    Query,
    TagPrediction,
    build_extraction_prompt,
    extract_rule_based,
    parse_llm_tags,
)
from t2p.llm import LlmGateway, MockBackend, RemoteBackend, ReplayBackend

PAPER_QUERY = "I want music from the 90s for work"
CHILL_QUERY = "Chill vibes on a rainy afternoon"


def q(text: str) -> Query:
    return Query(text=text, user_id="U1")


def test_query_invariants():
    with pytest.raises(InvalidQuery):
        Query(text="   ", user_id="U1")
    with pytest.raises(InvalidQuery):
        Query(text="x" * 501, user_id="U1")
    Query(text="x" * 500, user_id="U1")


def test_prediction_invariants():
    with pytest.raises(ValueError):
        TagPrediction(tag=Tag("mood", "chill"), explicitness=IMPLICIT, source_span=(0, 5))
    with pytest.raises(ValueError):
        TagPrediction(tag=Tag("mood", "chill"), explicitness="maybe")


def test_result_rejects_duplicates_and_extra_decades():
    chill = TagPrediction(tag=Tag("mood", "chill"), explicitness=IMPLICIT)
    with pytest.raises(ValueError):
        ExtractionResult(predictions=(chill, chill), backend_used="rule")
    with pytest.raises(ValueError):
        ExtractionResult(
            predictions=(
                TagPrediction(tag=Tag("decade", "1990s"), explicitness=IMPLICIT),
                TagPrediction(tag=Tag("decade", "1980s"), explicitness=IMPLICIT),
            ),
            backend_used="rule",
        )


def test_paper_worked_example(taxonomy, lexicon):
    result = extract_rule_based(q(PAPER_QUERY), taxonomy, lexicon)
    assert result.backend_used == "rule"
    assert [(p.tag, p.explicitness) for p in result.predictions] == [
        (Tag("decade", "1990s"), EXPLICIT),
        (Tag("mood", "focus"), IMPLICIT),
    ]
    span = result.predictions[0].source_span
    assert PAPER_QUERY[span[0] : span[1]] == "90s"
    assert result.predictions[1].source_span is None


def test_chill_vibes_example(taxonomy, lexicon):
    result = extract_rule_based(q(CHILL_QUERY), taxonomy, lexicon)
    assert [(p.tag, p.explicitness) for p in result.predictions] == [(Tag("mood", "chill"), EXPLICIT)]
    span = result.predictions[0].source_span
    assert CHILL_QUERY[span[0] : span[1]] == "Chill"


def test_no_lexicon_hit(taxonomy, lexicon):
    with pytest.raises(NoTagsExtracted):
        extract_rule_based(q("asdf qwerty"), taxonomy, lexicon)


def test_longest_match_wins(taxonomy, lexicon):
    result = extract_rule_based(q("some classic rock please"), taxonomy, lexicon)
    assert [p.tag for p in result.predictions] == [Tag("genre", "rock")]
    span = result.predictions[0].source_span
    assert "some classic rock please"[span[0] : span[1]] == "classic rock"


def test_explicit_spans_resolve_to_their_value(taxonomy, lexicon):
    queries = [
        PAPER_QUERY,
        CHILL_QUERY,
        "eighties metal for the gym",
        "french jazz from the sixties",
        "feel good pop with female vocalists",
    ]
    for text in queries:
        for p in extract_rule_based(q(text), taxonomy, lexicon).predictions:
            if p.explicitness == EXPLICIT:
                sliced = text[p.source_span[0] : p.source_span[1]]
                assert taxonomy.normalize(p.tag.facet, sliced) == p.tag
            else:
                assert p.source_span is None


def test_one_decade_kept(taxonomy, lexicon):
    result = extract_rule_based(q("80s and 90s hits"), taxonomy, lexicon)
    decades = [p for p in result.predictions if p.tag.facet == "decade"]
    assert len(decades) == 1
    assert decades[0].tag == Tag("decade", "1980s")  # first span wins


def test_prediction_cap(taxonomy, lexicon):
    text = "happy french jazz and blues from the 60s for a sunny beach party with friends"
    result = extract_rule_based(q(text), taxonomy, lexicon)
    assert len(result.predictions) <= 6
    # explicit predictions survive the cap ahead of implicit ones
    explicits = [p for p in result.predictions if p.explicitness == EXPLICIT]
    assert len(explicits) >= 5


def test_rule_backend_is_pure(taxonomy, lexicon):
    first = extract_rule_based(q(PAPER_QUERY), taxonomy, lexicon)
    for _ in range(1000):
        assert extract_rule_based(q(PAPER_QUERY), taxonomy, lexicon) == first


def test_prompt_contains_query_and_facets(taxonomy):
    prompt = build_extraction_prompt(q("90s for work"), taxonomy)
    assert "90s for work" in prompt
    for facet in ("genre", "mood", "decade", "language", "artist_gender"):
        assert f"- {facet}:" in prompt
    assert prompt == build_extraction_prompt(q("90s for work"), taxonomy)


def test_prompt_omits_empty_facet(taxonomy):
    from types import MappingProxyType

    from t2p.catalog import TagTaxonomy

    no_lang = TagTaxonomy(
        facets=MappingProxyType({f: v for f, v in taxonomy.facets.items() if f != "language"}),
        synonyms=MappingProxyType({f: dict(m) for f, m in taxonomy.synonyms.items() if f != "language"}),
    )
    prompt = build_extraction_prompt(q("90s for work"), no_lang)
    assert "- language:" not in prompt


def test_parse_llm_tags_worked_example(taxonomy):
    response = json.dumps(
        {
            "tags": [
                {"facet": "decade", "value": "90s", "explicitness": "explicit"},
                {"facet": "mood", "value": "Focus", "explicitness": "implicit"},
            ]
        }
    )
    result = parse_llm_tags(response, taxonomy, query_text=PAPER_QUERY)
    assert [(p.tag, p.explicitness) for p in result.predictions] == [
        (Tag("decade", "1990s"), EXPLICIT),
        (Tag("mood", "focus"), IMPLICIT),
    ]
    span = result.predictions[0].source_span
    assert PAPER_QUERY[span[0] : span[1]] == "90s"
    assert result.dropped == 0


def test_parse_llm_tags_drops_out_of_taxonomy(taxonomy):
    response = json.dumps({"tags": [{"facet": "mood", "value": "zzz", "explicitness": "explicit"}]})
    with pytest.raises(NoTagsExtracted):
        parse_llm_tags(response, taxonomy)


def test_parse_llm_tags_dedups_keeping_explicit(taxonomy):
    response = json.dumps(
        {
            "tags": [
                {"facet": "mood", "value": "chill", "explicitness": "implicit"},
                {"facet": "mood", "value": "chill", "explicitness": "explicit"},
            ]
        }
    )
    result = parse_llm_tags(response, taxonomy)
    assert [(p.tag, p.explicitness) for p in result.predictions] == [(Tag("mood", "chill"), EXPLICIT)]


def test_parse_llm_tags_never_repeats_a_tag(taxonomy):
    tags = [{"facet": "mood", "value": v, "explicitness": e} for v in ("chill", "party") for e in ("implicit", "explicit")] * 3
    result = parse_llm_tags(json.dumps({"tags": tags}), taxonomy)
    keys = [(p.tag.facet, p.tag.value) for p in result.predictions]
    assert len(keys) == len(set(keys))


def test_parse_llm_tags_accepts_fenced_json(taxonomy):
    response = "Here you go:\n```json\n" + json.dumps(
        {"tags": [{"facet": "mood", "value": "party", "explicitness": "explicit"}]}
    ) + "\n```"
    result = parse_llm_tags(response, taxonomy)
    assert result.predictions[0].tag == Tag("mood", "party")


def test_parse_llm_tags_counts_malformed_entries(taxonomy):
    response = json.dumps(
        {
            "tags": [
                {"facet": "mood", "value": "party", "explicitness": "explicit"},
                {"facet": "mood"},
                "junk",
                {"facet": "tempo", "value": "fast", "explicitness": "explicit"},
            ]
        }
    )
    result = parse_llm_tags(response, taxonomy)
    assert result.dropped == 3
    assert len(result.predictions) == 1


@pytest.mark.parametrize("text", ["", "no json here", "[1, 2, 3]", '{"notags": []}'])
def test_parse_llm_tags_unparseable(taxonomy, text):
    with pytest.raises(UnparseableResponse):
        parse_llm_tags(text, taxonomy)


def test_extract_dispatch_rule(taxonomy, lexicon):
    extractor = Extractor(taxonomy, lexicon)
    result = extractor.extract(q(PAPER_QUERY), "rule")
    assert result.backend_used == "rule"


def test_extract_llm_falls_back_on_timeout(taxonomy, lexicon):
    def explode(_request):
        raise httpx.ConnectTimeout("boom")

    backend = RemoteBackend("http://llm.test/v1/chat", transport=httpx.MockTransport(explode))
    gateway = LlmGateway(backend, max_retries=1, sleep=lambda _s: None)
    extractor = Extractor(taxonomy, lexicon, gateways={"llm": gateway})
    result = extractor.extract(q(PAPER_QUERY), "llm")
    assert result.backend_used == "rule"
    assert result.explicit_tags() == {Tag("decade", "1990s")}


def test_extract_llm_uses_gateway_response(taxonomy, lexicon):
    backend = MockBackend()
    prompt = build_extraction_prompt(q(PAPER_QUERY), taxonomy)
    backend.register(
        "extraction",
        prompt,
        json.dumps({"tags": [{"facet": "mood", "value": "party", "explicitness": "explicit"}]}),
    )
    extractor = Extractor(taxonomy, lexicon, gateways={"llm": LlmGateway(backend)})
    result = extractor.extract(q(PAPER_QUERY), "llm")
    assert result.backend_used == "llm"
    assert result.predictions[0].tag == Tag("mood", "party")


def test_extract_replay_returns_fixture_verbatim(taxonomy, lexicon, tmp_path):
    replay = ReplayBackend(tmp_path / "fixtures")
    prompt = build_extraction_prompt(q(PAPER_QUERY), taxonomy)
    replay.record(
        prompt,
        json.dumps(
            {
                "tags": [
                    {"facet": "decade", "value": "90s", "explicitness": "explicit"},
                    {"facet": "mood", "value": "focus", "explicitness": "implicit"},
                ]
            }
        ),
    )
    extractor = Extractor(taxonomy, lexicon, gateways={"replay": LlmGateway(replay)})
    result = extractor.extract(q(PAPER_QUERY), "replay")
    assert result.backend_used == "replay"
    assert result.explicit_tags() == {Tag("decade", "1990s")}
    assert result.implicit_tags() == {Tag("mood", "focus")}


def test_extract_replay_miss_is_strict(taxonomy, lexicon, tmp_path):
    extractor = Extractor(taxonomy, lexicon, gateways={"replay": LlmGateway(ReplayBackend(tmp_path))})
    with pytest.raises(FixtureMiss):
        extractor.extract(q(PAPER_QUERY), "replay")
