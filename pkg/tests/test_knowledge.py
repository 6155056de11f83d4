"""Article catalog, token-cosine similarity, and the retrieval store."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdprkit.errors import ConfigurationError, UnknownArticleError
from gdprkit.knowledge import (
    ARTICLE_TEXT,
    VIOLATION_EXAMPLE,
    KbDoc,
    KnowledgeBase,
    article_catalog,
    article_lookup,
    build_kb,
    similarity,
    tokenize,
)


class TestArticleCatalog:
    def test_lookup_titles(self):
        assert article_lookup(5).title == "Principles of processing"
        assert article_lookup(6).title == "Lawfulness of processing"
        assert article_lookup(7).title == "Conditions for consent"
        assert article_lookup(32).title == "Security of processing"

    def test_unknown_article_rejected(self):
        with pytest.raises(UnknownArticleError):
            article_lookup(999)

    def test_catalog_covers_twenty_three_articles(self):
        catalog = article_catalog()
        assert len(catalog) == 23
        assert all(info.summary for info in catalog.values())


class TestSimilarity:
    def test_identity(self):
        assert similarity("a b", "a b") == 1.0

    def test_disjoint(self):
        assert similarity("a", "b") == 0.0

    def test_hand_computed_cosine(self):
        # vectors over (a, b, c): (2,1,0) and (1,0,1); dot=2, norms sqrt(5), sqrt(2)
        expected = 2 / math.sqrt(5 * 2)
        assert similarity("a a b", "a c") == pytest.approx(expected, abs=1e-12)

    def test_both_empty_defined_as_zero(self):
        assert similarity("", "") == 0.0
        assert similarity("...", "!!!") == 0.0

    def test_tokenize_lowercases_alphanumerics(self):
        assert tokenize("OpenCamera(x); HTTP_2") == ["opencamera", "x", "http", "2"]

    @given(a=st.text(max_size=60), b=st.text(max_size=60))
    @settings(max_examples=150, deadline=None)
    def test_symmetric_and_bounded(self, a, b):
        s = similarity(a, b)
        assert 0.0 <= s <= 1.0 + 1e-12
        assert s == similarity(b, a)

    @given(a=st.text(alphabet="abc ", min_size=1, max_size=40))
    @settings(max_examples=100, deadline=None)
    def test_self_similarity_is_maximal(self, a):
        if tokenize(a):
            assert similarity(a, a) == pytest.approx(1.0, abs=1e-12)


class TestBuildKb:
    def test_fixture_corpus_doc_count(self, fixture_corpus):
        kb = build_kb(fixture_corpus)
        # 23 article texts plus one example per distinct snippet location
        assert len(kb) == 33
        kinds = [d.kind for d in kb.docs]
        assert kinds.count(ARTICLE_TEXT) == 23
        assert kinds.count(VIOLATION_EXAMPLE) == 10

    def test_empty_corpus_keeps_article_docs_only(self):
        kb = build_kb([])
        assert len(kb) == 23
        assert all(d.kind == ARTICLE_TEXT for d in kb.docs)

    def test_shared_path_merges_into_one_example(self, camera_record_pair):
        kb = build_kb(camera_record_pair, include_articles=False)
        assert len(kb) == 1
        doc = kb.docs[0]
        assert doc.kind == VIOLATION_EXAMPLE
        assert doc.labels == frozenset({6, 32})
        assert "openCamera" in doc.body

    def test_example_body_carries_both_notes(self, camera_record_pair):
        kb = build_kb(camera_record_pair, include_articles=False)
        body = kb.docs[0].body
        for record in camera_record_pair:
            assert record.annotation_note in body


class TestRetrieve:
    def test_exact_snippet_query_ranks_its_doc_first(self, fixture_corpus):
        kb = build_kb(fixture_corpus)
        snippet = fixture_corpus[0].code_snippet
        top_doc, score = kb.retrieve(snippet, top_n=1)[0]
        assert top_doc.kind == VIOLATION_EXAMPLE
        assert "openCamera" in top_doc.body

    def test_ranking_matches_brute_force_scorer(self, fixture_corpus):
        kb = build_kb(fixture_corpus)
        query = "openCamera"
        got = [doc.doc_id for doc, _ in kb.retrieve(query, top_n=5)]
        brute = sorted(
            ((similarity(query, d.body), d.doc_id) for d in kb.docs),
            key=lambda pair: (-pair[0], pair[1]),
        )
        assert got == [doc_id for _, doc_id in brute[:5]]

    def test_camera_query_surfaces_camera_example(self, fixture_corpus):
        kb = build_kb(fixture_corpus)
        hits = kb.retrieve("openCamera", top_n=3)
        assert any(
            d.kind == VIOLATION_EXAMPLE and "openCamera" in d.body for d, _ in hits
        )

    def test_top_n_beyond_size_returns_everything(self):
        kb = build_kb([])
        assert len(kb.retrieve("processing", top_n=999)) == 23

    def test_scores_are_descending(self, fixture_corpus):
        kb = build_kb(fixture_corpus)
        scores = [score for _, score in kb.retrieve("location consent", top_n=10)]
        assert scores == sorted(scores, reverse=True)


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path, fixture_corpus):
        kb = build_kb(fixture_corpus)
        path = tmp_path / "kb.json"
        kb.save(path)
        loaded = KnowledgeBase.load(path)
        assert loaded.docs == kb.docs

    def test_duplicate_doc_ids_rejected(self):
        doc = KbDoc(doc_id="d1", kind=ARTICLE_TEXT, body="x", labels=frozenset())
        with pytest.raises(ConfigurationError):
            KnowledgeBase([doc, doc])
