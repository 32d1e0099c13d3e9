"""Quote extraction, chunk flagging, and exclusion sets."""

import logging

import pytest

from precocity.corpus import DocumentRecord, chunk_embedding_granularity
from precocity.reuse import (
    CitationLink,
    build_exclusions,
    extract_quotes,
    flag_chunk,
)


def doc(doc_id, text, year=1950, authors=()):
    return DocumentRecord(doc_id=doc_id, year=year, text=text, author_ids=tuple(authors))


def one_chunk(document):
    chunks = chunk_embedding_granularity(document, max_tokens=512)
    assert len(chunks) == 1
    return chunks[0]


class TestExtractQuotes:
    def test_double_quoted_span(self):
        quotes = extract_quotes('He said "the raven flies at night always" here.')
        assert quotes == [("the", "raven", "flies", "at", "night", "always")]

    def test_no_quotes(self):
        assert extract_quotes("Nothing quoted in this text.") == []

    def test_single_and_double(self):
        quotes = extract_quotes("'a b' and \"c d\"")
        assert quotes == [("a", "b"), ("c", "d")]

    def test_typographic_quotes(self):
        quotes = extract_quotes("She wrote “old words return” and ‘new ones’ too.")
        assert quotes == [("old", "words", "return"), ("new", "ones")]

    def test_nested_yields_outermost(self):
        quotes = extract_quotes("He said \"she wrote 'a b' there\" once.")
        assert quotes == [("she", "wrote", "a", "b", "there")]

    def test_apostrophes_do_not_open(self):
        assert extract_quotes("don't touch the critics' words") == []

    def test_unmatched_quote_ignored_with_warning(self, caplog):
        with caplog.at_level(logging.WARNING, logger="precocity.reuse"):
            quotes = extract_quotes('An "unterminated span goes nowhere')
        assert quotes == []
        assert any("unmatched" in rec.message for rec in caplog.records)


CITED_TEXT = (
    "Criticism begins when the raven flies at night always and returns "
    "to the same branch. Other sentences follow with different words entirely."
)


class TestFlagChunk:
    link = CitationLink("citing", "cited", ("Marlowe",))
    cited = doc("cited", CITED_TEXT)

    def test_six_word_quote_fires(self):
        chunk = one_chunk(doc("citing", 'As noted, "the raven flies at night always" resonates.'))
        assert flag_chunk(chunk, self.cited, self.link) is True

    def test_five_word_quote_does_not(self):
        chunk = one_chunk(doc("citing", 'As noted, "the raven flies at night" resonates.'))
        assert flag_chunk(chunk, self.cited, self.link) is False

    def test_author_name_fires_without_quotes(self):
        chunk = one_chunk(doc("citing", "Marlowe made this point earlier in passing."))
        assert flag_chunk(chunk, self.cited, self.link) is True

    def test_name_match_case_insensitive(self):
        chunk = one_chunk(doc("citing", "Consider what MARLOWE argued here."))
        assert flag_chunk(chunk, self.cited, self.link) is True

    def test_unquoted_six_words_do_not_fire(self):
        chunk = one_chunk(doc("citing", "Indeed the raven flies at night always unquoted."))
        assert flag_chunk(chunk, self.cited, self.link) is False

    def test_long_quote_with_six_word_run_fires(self):
        chunk = one_chunk(
            doc("citing", 'Note "surely the raven flies at night always somewhere" fully.')
        )
        assert flag_chunk(chunk, self.cited, self.link) is True

    def test_punctuation_stripped_match(self):
        chunk = one_chunk(doc("citing", 'So "the raven, flies at night: always" holds.'))
        assert flag_chunk(chunk, self.cited, self.link) is True


class TestBuildExclusions:
    def corpus(self):
        docs = {
            "a1": doc("a1", 'First piece. It quotes "the raven flies at night always" once.',
                      authors=("smith",)),
            "a2": doc("a2", "Second piece with nothing quoted at all.", authors=("smith",)),
            "b": doc("b", CITED_TEXT, authors=("jones",)),
            "c": doc("c", "Unrelated text by someone else entirely.", authors=("lee",)),
        }
        chunks = []
        for d in docs.values():
            chunks.extend(chunk_embedding_granularity(d, max_tokens=8))
        return docs, chunks

    def test_same_author_pairs_excluded(self):
        docs, chunks = self.corpus()
        ex = build_exclusions(chunks, [], docs)
        a1 = [c for c in chunks if c.doc_id == "a1"]
        a2 = [c for c in chunks if c.doc_id == "a2"]
        for c1 in a1:
            for c2 in a2:
                assert ex.is_excluded_pair(c1.chunk_id, c2.chunk_id)

    def test_quote_excludes_only_offending_chunk(self):
        docs, chunks = self.corpus()
        link = CitationLink("a1", "b", ())
        ex = build_exclusions(chunks, [link], docs)
        a1 = [c for c in chunks if c.doc_id == "a1"]
        b = [c for c in chunks if c.doc_id == "b"]
        quoting = [c for c in a1 if "raven" in " ".join(c.tokens).lower()]
        clean = [c for c in a1 if c not in quoting]
        assert quoting and clean
        for c2 in b:
            for c1 in quoting:
                assert ex.is_excluded_pair(c1.chunk_id, c2.chunk_id)
                assert ex.is_excluded_pair(c2.chunk_id, c1.chunk_id)
            for c1 in clean:
                assert not ex.is_excluded_pair(c1.chunk_id, c2.chunk_id)

    def test_no_metadata_empty_exclusions(self):
        docs = {
            "x": doc("x", "Plain text one here."),
            "y": doc("y", "Plain text two here."),
        }
        chunks = [one_chunk(d) for d in docs.values()]
        ex = build_exclusions(chunks, [], docs)
        assert ex.excluded_chunk_pairs(chunks) == set()

    def test_monotone_under_added_links(self):
        docs, chunks = self.corpus()
        link = CitationLink("a1", "b", ())
        before = build_exclusions(chunks, [], docs).excluded_chunk_pairs(chunks)
        after = build_exclusions(chunks, [link], docs).excluded_chunk_pairs(chunks)
        assert before <= after

    def test_same_doc_pairs_never_excluded(self):
        docs, chunks = self.corpus()
        ex = build_exclusions(chunks, [], docs)
        a1 = [c for c in chunks if c.doc_id == "a1"]
        for i, c1 in enumerate(a1):
            for c2 in a1[i + 1:]:
                assert not ex.is_excluded_pair(c1.chunk_id, c2.chunk_id)

    def test_self_citation_rejected(self):
        with pytest.raises(ValueError):
            CitationLink("a", "a", ())
