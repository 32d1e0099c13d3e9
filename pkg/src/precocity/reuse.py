"""Exclusion of chunk pairs that would make scoring circular.

Two rules: documents sharing an author are never compared, and a chunk
that names a cited author or quotes six or more consecutive words from
a cited document is dropped from comparisons against that document.
Only the offending chunk is excluded, never its whole document.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Chunk, DocumentRecord, tokenize

logger = logging.getLogger(__name__)

QUOTE_MATCH_LEN = 6

_DOUBLE_OPEN = {'"', "“", "„"}
_DOUBLE_CLOSE = {'"', "”"}
_SINGLE_OPEN = {"'", "‘"}
_SINGLE_CLOSE = {"'", "’"}


@dataclass(frozen=True)
class CitationLink:
    citing_doc_id: str
    cited_doc_id: str
    cited_author_last_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.citing_doc_id == self.cited_doc_id:
            raise ValueError("a document cannot cite itself")


def _word_boundary_before(text: str, i: int) -> bool:
    return i == 0 or not text[i - 1].isalnum()


def _word_boundary_after(text: str, i: int) -> bool:
    return i + 1 >= len(text) or not text[i + 1].isalnum()


def extract_quotes(text: str) -> list[tuple[str, ...]]:
    """Token sequences enclosed in matched single or double quotes.

    Straight and typographic quote characters both count; nested quotes
    yield only the outermost span.  An unmatched opener is ignored with
    a warning.  Apostrophes inside or at the edge of words never open a
    single-quoted span.
    """
    quotes: list[tuple[str, ...]] = []
    open_kind: str | None = None
    open_pos = 0
    for i, ch in enumerate(text):
        if open_kind is None:
            if ch in _DOUBLE_OPEN:
                open_kind, open_pos = "double", i
            elif ch in _SINGLE_OPEN and _word_boundary_before(text, i) and not _word_boundary_after(text, i):
                open_kind, open_pos = "single", i
        elif open_kind == "double":
            if ch in _DOUBLE_CLOSE and i > open_pos:
                tokens = tuple(tokenize(text[open_pos + 1 : i]))
                if tokens:
                    quotes.append(tokens)
                open_kind = None
        else:
            # An apostrophe between letters ("don't") fails the boundary
            # test and stays inside the span.
            if ch in _SINGLE_CLOSE and _word_boundary_after(text, i) and i > open_pos:
                tokens = tuple(tokenize(text[open_pos + 1 : i]))
                if tokens:
                    quotes.append(tokens)
                open_kind = None
    if open_kind is not None:
        logger.warning("unmatched %s quote at offset %d; span ignored", open_kind, open_pos)
    return quotes


def _ngrams(tokens: Sequence[str], n: int) -> set[tuple[str, ...]]:
    return {tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)}


def flag_chunk(
    citing_chunk: Chunk,
    cited_doc: DocumentRecord,
    link: CitationLink,
    _cited_ngrams: set[tuple[str, ...]] | None = None,
) -> bool:
    """Whether a citing chunk names or quotes the cited document.

    True iff a cited author's last name appears as a token of the chunk
    (case-insensitive), or any quoted span contains a run of
    ``QUOTE_MATCH_LEN`` consecutive tokens that occurs contiguously in
    the cited document's text (case-insensitive, punctuation stripped).
    """
    chunk_tokens = [t.lower() for t in citing_chunk.tokens]
    names = {n.lower() for n in link.cited_author_last_names}
    if names and names.intersection(chunk_tokens):
        return True
    quotes = extract_quotes(citing_chunk.text)
    if not quotes:
        return False
    if _cited_ngrams is None:
        _cited_ngrams = _ngrams(tokenize(cited_doc.text, lowercase=True), QUOTE_MATCH_LEN)
    for quote in quotes:
        lowered = [t.lower() for t in quote]
        if len(lowered) < QUOTE_MATCH_LEN:
            continue
        for i in range(len(lowered) - QUOTE_MATCH_LEN + 1):
            if tuple(lowered[i : i + QUOTE_MATCH_LEN]) in _cited_ngrams:
                return True
    return False


@dataclass
class ExclusionSet:
    """Chunk pairs removed from comparison.

    Same-author exclusion is symmetric and document-wide; quote/name
    exclusion is directional (citing chunk -> cited document) but the
    pair is skipped in both comparison directions.  Stored compactly as
    per-document author sets plus per-link flagged chunk ids; the
    explicit pair set can be materialized for small corpora.
    """

    doc_authors: dict[str, frozenset[str]] = field(default_factory=dict)
    # (citing_doc_id, cited_doc_id) -> chunk ids of the citing doc that fired
    excluded_chunks_per_link: dict[tuple[str, str], frozenset[str]] = field(default_factory=dict)
    chunk_doc: dict[str, str] = field(default_factory=dict)

    def share_author(self, doc_a: str, doc_b: str) -> bool:
        if doc_a == doc_b:
            return False
        a = self.doc_authors.get(doc_a)
        b = self.doc_authors.get(doc_b)
        return bool(a and b and a & b)

    def is_excluded_pair(self, chunk_a: str, chunk_b: str) -> bool:
        doc_a = self.chunk_doc.get(chunk_a)
        doc_b = self.chunk_doc.get(chunk_b)
        if doc_a is None or doc_b is None or doc_a == doc_b:
            return False
        if self.share_author(doc_a, doc_b):
            return True
        if chunk_a in self.excluded_chunks_per_link.get((doc_a, doc_b), ()):
            return True
        if chunk_b in self.excluded_chunks_per_link.get((doc_b, doc_a), ()):
            return True
        return False

    def excluded_docs_for(self, doc_id: str) -> set[str]:
        """Documents whose every chunk is off-limits for ``doc_id``."""
        authors = self.doc_authors.get(doc_id, frozenset())
        if not authors:
            return set()
        return {
            other
            for other, theirs in self.doc_authors.items()
            if other != doc_id and authors & theirs
        }

    def excluded_chunk_pairs(self, chunks: Sequence[Chunk]) -> set[tuple[str, str]]:
        """Materialize all excluded unordered pairs (small corpora only)."""
        pairs = set()
        for i, a in enumerate(chunks):
            for b in chunks[i + 1 :]:
                if self.is_excluded_pair(a.chunk_id, b.chunk_id):
                    pairs.add((a.chunk_id, b.chunk_id))
        return pairs

    @property
    def empty(self) -> bool:
        return not self.excluded_chunks_per_link and not any(
            a & b
            for ids, a in self.doc_authors.items()
            for other, b in self.doc_authors.items()
            if ids < other
        )


def build_exclusions(
    chunks: Iterable[Chunk],
    links: Iterable[CitationLink],
    docs: Mapping[str, DocumentRecord],
    authorship: Mapping[str, Sequence[str]] | None = None,
) -> ExclusionSet:
    """Construct the exclusion set for a corpus.

    ``authorship`` overrides the author ids taken from ``docs``; pass it
    when author metadata lives outside the document records.
    """
    chunks = list(chunks)
    if authorship is None:
        authorship = {doc_id: doc.author_ids for doc_id, doc in docs.items()}
    exclusions = ExclusionSet(
        doc_authors={d: frozenset(a) for d, a in authorship.items() if a},
        chunk_doc={c.chunk_id: c.doc_id for c in chunks},
    )
    by_doc: dict[str, list[Chunk]] = {}
    for c in chunks:
        by_doc.setdefault(c.doc_id, []).append(c)
    for link in links:
        cited = docs.get(link.cited_doc_id)
        citing_chunks = by_doc.get(link.citing_doc_id, [])
        if cited is None or not citing_chunks:
            continue
        cited_ngrams = _ngrams(tokenize(cited.text, lowercase=True), QUOTE_MATCH_LEN)
        flagged = frozenset(
            c.chunk_id
            for c in citing_chunks
            if flag_chunk(c, cited, link, _cited_ngrams=cited_ngrams)
        )
        if flagged:
            key = (link.citing_doc_id, link.cited_doc_id)
            existing = exclusions.excluded_chunks_per_link.get(key, frozenset())
            exclusions.excluded_chunks_per_link[key] = existing | flagged
    return exclusions


def read_citation_links(path: str | Path) -> list[CitationLink]:
    """Citation links from CSV or JSONL.

    CSV columns: citing_doc_id, cited_doc_id, cited_author_last_names
    (last names separated by ``;``).  JSONL: same field names, names as
    a list.
    """
    path = Path(path)
    links = []
    if path.suffix.lower() in (".jsonl", ".json"):
        with path.open("r", encoding="utf-8") as fh:
            for raw in fh:
                raw = raw.strip()
                if not raw:
                    continue
                rec = json.loads(raw)
                links.append(
                    CitationLink(
                        citing_doc_id=str(rec["citing_doc_id"]),
                        cited_doc_id=str(rec["cited_doc_id"]),
                        cited_author_last_names=tuple(rec.get("cited_author_last_names", ())),
                    )
                )
    else:
        with path.open("r", encoding="utf-8", newline="") as fh:
            for rec in csv.DictReader(fh):
                names = (rec.get("cited_author_last_names") or "").strip()
                links.append(
                    CitationLink(
                        citing_doc_id=rec["citing_doc_id"],
                        cited_doc_id=rec["cited_doc_id"],
                        cited_author_last_names=tuple(
                            n.strip() for n in names.split(";") if n.strip()
                        ),
                    )
                )
    return links
