"""Ingestion, tokenization, and chunking."""

import json

import pytest

from precocity.corpus import (
    DocumentRecord,
    IngestError,
    chunk_embedding_granularity,
    chunk_from_text,
    chunk_topic_granularity,
    ingest_corpus,
    read_chunks_jsonl,
    sentence_token_bounds,
    tokenize,
    tokenize_spans,
    trim_paratext,
    write_chunks_jsonl,
)


def make_doc(text, doc_id="d1", year=1950, **kwargs):
    return DocumentRecord(doc_id=doc_id, year=year, text=text, **kwargs)


def sentences_text(lengths, word="tok"):
    """One sentence per length, each capitalized and period-terminated."""
    parts = []
    for n in lengths:
        words = [f"{word}{i}" for i in range(n)]
        words[0] = words[0].capitalize()
        parts.append(" ".join(words) + ".")
    return " ".join(parts)


class TestTokenize:
    def test_punctuation_is_separator(self):
        assert tokenize("Hello, world! (Really.)") == ["Hello", "world", "Really"]

    def test_internal_apostrophe_kept(self):
        assert tokenize("don't stop") == ["don't", "stop"]

    def test_lowercase_flag(self):
        assert tokenize("Hello World", lowercase=True) == ["hello", "world"]

    def test_spans_match_text(self):
        text = "Alpha beta, gamma."
        for tok, start, end in tokenize_spans(text):
            assert text[start:end] == tok


class TestSentenceSplit:
    def test_basic_split(self):
        text = "The cat sat. The dog ran. All was well."
        spans = tokenize_spans(text)
        bounds = sentence_token_bounds(text, spans)
        assert bounds == [(0, 3), (3, 6), (6, 9)]

    def test_abbreviation_no_split(self):
        text = "Dr. Smith arrived. He sat down."
        spans = tokenize_spans(text)
        bounds = sentence_token_bounds(text, spans)
        assert bounds == [(0, 3), (3, 6)]

    def test_initials_no_split(self):
        text = "W. E. B. Du Bois wrote it. Nobody disagreed."
        spans = tokenize_spans(text)
        bounds = sentence_token_bounds(text, spans)
        assert len(bounds) == 2

    def test_lowercase_continuation_no_split(self):
        text = "It cost 3.50 dollars total. Then we left."
        spans = tokenize_spans(text)
        bounds = sentence_token_bounds(text, spans)
        assert len(bounds) == 2

    def test_question_and_exclamation(self):
        text = "Really? Yes! Fine."
        spans = tokenize_spans(text)
        assert sentence_token_bounds(text, spans) == [(0, 1), (1, 2), (2, 3)]


class TestIngest:
    def write_jsonl(self, tmp_path, records):
        path = tmp_path / "corpus.jsonl"
        path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
        return path

    def test_three_valid_records(self, tmp_path):
        path = self.write_jsonl(
            tmp_path,
            [{"doc_id": f"d{i}", "year": 1950 + i, "text": "Some text."} for i in range(3)],
        )
        docs = ingest_corpus(path)
        assert len(docs) == 3
        assert docs[0].doc_id == "d0"

    def test_missing_year_names_line_and_field(self, tmp_path):
        path = self.write_jsonl(
            tmp_path,
            [{"doc_id": "d0", "year": 1950, "text": "ok"}, {"doc_id": "d1", "text": "no year"}],
        )
        with pytest.raises(IngestError, match=r"line 2.*'year'"):
            ingest_corpus(path)

    def test_duplicate_doc_id(self, tmp_path):
        path = self.write_jsonl(
            tmp_path,
            [{"doc_id": "dup", "year": 1950, "text": "a"},
             {"doc_id": "dup", "year": 1951, "text": "b"}],
        )
        with pytest.raises(IngestError, match="duplicate doc_id 'dup'"):
            ingest_corpus(path)

    def test_field_map(self, tmp_path):
        path = self.write_jsonl(tmp_path, [{"id": "d0", "date": 1950, "body": "words here"}])
        docs = ingest_corpus(path, schema={"doc_id": "id", "year": "date", "text": "body"})
        assert docs[0].year == 1950
        assert docs[0].text == "words here"

    def test_negative_citations_rejected(self, tmp_path):
        path = self.write_jsonl(
            tmp_path, [{"doc_id": "d0", "year": 1950, "text": "x", "citation_count": -1}]
        )
        with pytest.raises(IngestError, match="citation_count"):
            ingest_corpus(path)

    def test_year_range_enforced(self, tmp_path):
        path = self.write_jsonl(tmp_path, [{"doc_id": "d0", "year": 1800, "text": "x"}])
        with pytest.raises(IngestError, match="outside corpus range"):
            ingest_corpus(path, year_range=(1900, 2000))


class TestTrimParatext:
    def test_ten_percent_of_1000(self):
        text = " ".join(f"w{i}" for i in range(1000))
        doc = make_doc(text)
        trimmed = trim_paratext(doc, 0.10)
        tokens = tokenize(trimmed.text)
        assert tokens[0] == "w100"
        assert tokens[-1] == "w899"
        assert len(tokens) == 800

    def test_zero_fraction_identity(self):
        doc = make_doc("A few words here.")
        assert trim_paratext(doc, 0.0) is doc

    def test_floor_boundary_nine_tokens(self):
        text = " ".join(f"w{i}" for i in range(9))
        doc = make_doc(text)
        trimmed = trim_paratext(doc, 0.10)
        assert tokenize(trimmed.text) == tokenize(text)

    def test_half_or_more_rejected(self):
        with pytest.raises(ValueError):
            trim_paratext(make_doc("a b c"), 0.5)


class TestEmbeddingChunking:
    def test_greedy_packing(self):
        doc = make_doc(sentences_text([200, 200, 200]))
        chunks = chunk_embedding_granularity(doc, max_tokens=512)
        assert [c.token_count for c in chunks] == [400, 200]
        assert [len(c.sentence_spans) for c in chunks] == [2, 1]

    def test_overlong_sentence_truncated(self):
        doc = make_doc(sentences_text([600]))
        chunks = chunk_embedding_granularity(doc, max_tokens=512)
        assert len(chunks) == 1
        assert chunks[0].token_count == 512

    def test_empty_document(self):
        assert chunk_embedding_granularity(make_doc("")) == []

    def test_text_concatenation_reproduces_document(self):
        doc = make_doc(sentences_text([10, 30, 7, 25, 3]))
        chunks = chunk_embedding_granularity(doc, max_tokens=32)
        assert "".join(c.text for c in chunks) == doc.text

    def test_token_conservation(self):
        doc = make_doc(sentences_text([10, 30, 7, 25, 3]))
        chunks = chunk_embedding_granularity(doc, max_tokens=32)
        assert sum(c.token_count for c in chunks) == len(tokenize(doc.text))

    def test_chunks_ordered_and_ids_unique(self):
        doc = make_doc(sentences_text([20] * 10))
        chunks = chunk_embedding_granularity(doc, max_tokens=64)
        assert [c.seq for c in chunks] == list(range(len(chunks)))
        assert len({c.chunk_id for c in chunks}) == len(chunks)

    def test_deterministic(self):
        doc = make_doc(sentences_text([13, 17, 19, 23]))
        a = chunk_embedding_granularity(doc, max_tokens=40)
        b = chunk_embedding_granularity(doc, max_tokens=40)
        assert a == b


class TestTopicChunking:
    def chunks_of_sizes(self, sizes, max_tokens=1024):
        doc = make_doc(sentences_text(sizes))
        chunks = chunk_embedding_granularity(doc, max_tokens=max_tokens)
        assert [c.token_count for c in chunks] == sizes
        return chunks

    def test_remainder_merged_into_previous(self):
        # 400+400 reaches the floor, the trailing 400 merges back
        chunks = self.chunks_of_sizes([400, 400, 400], max_tokens=400)
        merged = chunk_topic_granularity(chunks, min_tokens=512)
        assert [c.token_count for c in merged] == [1200]

    def test_exact_threshold(self):
        chunks = self.chunks_of_sizes([512, 512], max_tokens=512)
        merged = chunk_topic_granularity(chunks, min_tokens=512)
        assert [c.token_count for c in merged] == [512, 512]

    def test_single_short_document_kept_alone(self):
        chunks = self.chunks_of_sizes([300], max_tokens=512)
        merged = chunk_topic_granularity(chunks, min_tokens=512)
        assert [c.token_count for c in merged] == [300]

    def test_token_conservation(self):
        chunks = self.chunks_of_sizes([180, 170, 150, 160, 50], max_tokens=200)
        merged = chunk_topic_granularity(chunks, min_tokens=300)
        assert [c.token_count for c in merged] == [350, 360]
        assert sum(c.token_count for c in merged) == 710
        assert "".join(c.text for c in merged) == "".join(c.text for c in chunks)

    def test_sentence_spans_cover_all_tokens(self):
        chunks = self.chunks_of_sizes([100, 200, 150], max_tokens=200)
        merged = chunk_topic_granularity(chunks, min_tokens=250)
        for chunk in merged:
            covered = sum(e - s for s, e in chunk.sentence_spans)
            assert covered == chunk.token_count


class TestChunkRoundTrip:
    def test_jsonl_round_trip(self, tmp_path):
        doc = make_doc(sentences_text([12, 40, 9, 33]), doc_id="doc9", year=1972)
        chunks = chunk_embedding_granularity(doc, max_tokens=48)
        path = tmp_path / "chunks.jsonl"
        write_chunks_jsonl(chunks, {"doc9": 1972}, path)
        loaded, years = read_chunks_jsonl(path)
        assert years == {"doc9": 1972}
        assert loaded == chunks

    def test_truncated_chunk_round_trip(self, tmp_path):
        doc = make_doc(sentences_text([70]), doc_id="long")
        chunks = chunk_embedding_granularity(doc, max_tokens=64)
        assert chunks[0].token_count == 64
        path = tmp_path / "chunks.jsonl"
        write_chunks_jsonl(chunks, {"long": 1950}, path)
        loaded, _ = read_chunks_jsonl(path)
        assert loaded == chunks

    def test_chunk_from_text_matches(self):
        doc = make_doc(sentences_text([5, 8, 3]))
        chunks = chunk_embedding_granularity(doc, max_tokens=100)
        c = chunks[0]
        rebuilt = chunk_from_text(c.chunk_id, c.doc_id, c.seq, c.text, c.token_count)
        assert rebuilt == c
