"""Corpus ingestion, tokenization, and sentence-bounded chunking.

Documents enter as JSONL records with a year and full text.  They are
tokenized with a whitespace-and-punctuation word tokenizer, split into
sentences with a rule-based splitter, and packed into chunks at two
granularities: small chunks capped at ``max_tokens`` (embedding
granularity) and large chunks of at least ``min_tokens`` built by
concatenating consecutive small ones (topic granularity).  Chunks never
cross sentence boundaries except when a single sentence alone exceeds
the cap, in which case its surplus tokens are dropped.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence


class IngestError(ValueError):
    """Malformed corpus input; message names the line and field."""


# Word tokens: runs of letters/digits, keeping internal apostrophes
# ("don't" is one token).  Underscore is treated as punctuation.
TOKEN_RE = re.compile(r"[^\W_]+(?:['’][^\W_]+)*")

# Sentence-terminal runs, with optional closing quotes/brackets.
_TERMINAL_RE = re.compile(r"[.!?]+[\"'’”)\]]*")

_OPENERS = "\"'‘“([«"

_ABBREVIATIONS = frozenset({
    "mr", "mrs", "ms", "dr", "prof", "rev", "hon", "fr", "st", "jr", "sr",
    "vs", "etc", "e.g", "eg", "i.e", "ie", "cf", "al", "ca", "fig", "figs",
    "eq", "eqs", "no", "nos", "vol", "vols", "pp", "ch", "chap", "sec",
    "dept", "univ", "inc", "ltd", "co", "corp", "approx", "min", "max",
})


@dataclass(frozen=True)
class DocumentRecord:
    """A dated text plus the social metadata used for validation."""

    doc_id: str
    year: int
    text: str
    author_ids: tuple[str, ...] = ()
    citation_count: int | None = None
    author_birth_year: int | None = None
    group_tags: tuple[str, ...] = ()
    discussed_flag: bool | None = None


@dataclass(frozen=True)
class Chunk:
    """A contiguous, sentence-bounded token span of one document.

    ``text`` is the exact substring of the retained document text that
    the chunk covers; concatenating a document's chunk texts in ``seq``
    order reproduces the retained text.  ``tokens`` are the word tokens
    of that span (surface casing preserved), and ``sentence_spans`` are
    half-open ``(start, end)`` token-index pairs within the chunk.
    """

    chunk_id: str
    doc_id: str
    seq: int
    tokens: tuple[str, ...]
    sentence_spans: tuple[tuple[int, int], ...]
    text: str

    @property
    def token_count(self) -> int:
        return len(self.tokens)


def tokenize_spans(text: str) -> list[tuple[str, int, int]]:
    """Word tokens with their character spans, in order."""
    return [(m.group(), m.start(), m.end()) for m in TOKEN_RE.finditer(text)]


def tokenize(text: str, lowercase: bool = False) -> list[str]:
    toks = TOKEN_RE.findall(text)
    if lowercase:
        toks = [t.lower() for t in toks]
    return toks


def _is_abbreviation(text: str, period_pos: int) -> bool:
    """Whether the '.' at ``period_pos`` ends an abbreviation or initial."""
    b = period_pos
    while b > 0 and (text[b - 1].isalnum() or text[b - 1] in ".'’"):
        b -= 1
    word = text[b:period_pos].lower().strip(".")
    if not word:
        return False
    if word in _ABBREVIATIONS:
        return True
    # Single-letter initials: "J. Smith"
    last = word.rsplit(".", 1)[-1]
    return len(last) == 1 and last.isalpha()


def sentence_break_positions(text: str) -> list[int]:
    """Character offsets at which a new sentence starts.

    A break requires a terminal run ([.!?] plus closing quotes), then
    whitespace, then an uppercase letter, digit, or opening quote.
    Periods after known abbreviations and single-letter initials do not
    break.
    """
    breaks = []
    n = len(text)
    for m in _TERMINAL_RE.finditer(text):
        j = m.end()
        k = j
        while k < n and text[k].isspace():
            k += 1
        if k == j or k >= n:
            continue
        nxt = text[k]
        if not (nxt.isupper() or nxt.isdigit() or nxt in _OPENERS):
            continue
        if text[m.start()] == "." and "!" not in m.group() and "?" not in m.group():
            if _is_abbreviation(text, m.start()):
                continue
        breaks.append(k)
    return breaks


def sentence_token_bounds(
    text: str, spans: Sequence[tuple[str, int, int]]
) -> list[tuple[int, int]]:
    """Half-open token-index spans of the sentences covering ``spans``."""
    if not spans:
        return []
    bounds = []
    start = 0
    breaks = sentence_break_positions(text)
    bi = 0
    for i, (_, tstart, _) in enumerate(spans):
        while bi < len(breaks) and breaks[bi] <= tstart:
            if i > start:
                bounds.append((start, i))
                start = i
            bi += 1
    bounds.append((start, len(spans)))
    return bounds


def _coerce_int(value, line: int, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise IngestError(f"line {line}: field '{name}' must be an integer, got {value!r}")
    return value


def ingest_corpus(
    path: str | Path,
    schema: Mapping[str, str] | None = None,
    year_range: tuple[int, int] | None = None,
) -> list[DocumentRecord]:
    """Read a JSONL corpus, one document per line.

    ``schema`` maps canonical field names (doc_id, year, text, ...) to
    the names used in the file.  Raises :class:`IngestError` naming the
    offending line and field for malformed records or duplicate ids.
    """
    schema = dict(schema or {})
    field = lambda name: schema.get(name, name)
    docs: list[DocumentRecord] = []
    seen: set[str] = set()
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise IngestError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise IngestError(f"line {lineno}: record is not an object")
            for required in ("doc_id", "year", "text"):
                if field(required) not in rec or rec[field(required)] is None:
                    raise IngestError(f"line {lineno}: missing field '{field(required)}'")
            doc_id = str(rec[field("doc_id")])
            if doc_id in seen:
                raise IngestError(f"line {lineno}: duplicate doc_id '{doc_id}'")
            seen.add(doc_id)
            year = _coerce_int(rec[field("year")], lineno, field("year"))
            if year_range is not None and not (year_range[0] <= year <= year_range[1]):
                raise IngestError(
                    f"line {lineno}: field '{field('year')}' value {year} outside "
                    f"corpus range {year_range[0]}..{year_range[1]}"
                )
            text = rec[field("text")]
            if not isinstance(text, str):
                raise IngestError(f"line {lineno}: field '{field('text')}' must be a string")
            citation = rec.get(field("citation_count"))
            if citation is not None:
                citation = _coerce_int(citation, lineno, field("citation_count"))
                if citation < 0:
                    raise IngestError(
                        f"line {lineno}: field '{field('citation_count')}' must be >= 0"
                    )
            birth = rec.get(field("author_birth_year"))
            if birth is not None:
                birth = _coerce_int(birth, lineno, field("author_birth_year"))
            docs.append(
                DocumentRecord(
                    doc_id=doc_id,
                    year=year,
                    text=text,
                    author_ids=tuple(str(a) for a in rec.get(field("author_ids"), []) or ()),
                    citation_count=citation,
                    author_birth_year=birth,
                    group_tags=tuple(str(g) for g in rec.get(field("group_tags"), []) or ()),
                    discussed_flag=rec.get(field("discussed_flag")),
                )
            )
    return docs


def trim_paratext(doc: DocumentRecord, fraction: float = 0.10) -> DocumentRecord:
    """Drop the first and last ``floor(fraction * n_tokens)`` tokens.

    Used to strip front and back matter from book-length texts; 0.0
    leaves the document untouched.
    """
    if not (0.0 <= fraction < 0.5):
        raise ValueError(f"trim fraction must be in [0, 0.5), got {fraction}")
    if fraction == 0.0:
        return doc
    spans = tokenize_spans(doc.text)
    n = len(spans)
    cut = int(fraction * n)
    if cut == 0:
        return doc
    start = spans[cut][1]
    end = spans[n - cut - 1][2]
    return replace(doc, text=doc.text[start:end])


def chunk_embedding_granularity(
    doc: DocumentRecord, max_tokens: int = 512
) -> list[Chunk]:
    """Greedy sentence packing into chunks of at most ``max_tokens``.

    Whole sentences are appended until the next would overflow.  A
    single sentence longer than the cap becomes its own chunk with its
    surplus tokens dropped (the chunk text keeps the full sentence so
    that document text concatenation stays exact).
    """
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    spans = tokenize_spans(doc.text)
    if not spans:
        return []
    sentences = sentence_token_bounds(doc.text, spans)
    groups: list[tuple[int, int, int]] = []  # (tok_start, tok_end, kept)
    cur_start = None
    cur_end = None
    for ts, te in sentences:
        length = te - ts
        if length > max_tokens and cur_start is None:
            groups.append((ts, te, max_tokens))
            continue
        if cur_start is None:
            cur_start, cur_end = ts, te
        elif (te - cur_start) <= max_tokens:
            cur_end = te
        else:
            groups.append((cur_start, cur_end, cur_end - cur_start))
            if length > max_tokens:
                groups.append((ts, te, max_tokens))
                cur_start = cur_end = None
            else:
                cur_start, cur_end = ts, te
    if cur_start is not None:
        groups.append((cur_start, cur_end, cur_end - cur_start))

    chunks = []
    for seq, (ts, te, kept) in enumerate(groups):
        char_start = 0 if seq == 0 else spans[ts][1]
        char_end = spans[groups[seq + 1][0]][1] if seq + 1 < len(groups) else len(doc.text)
        tokens = tuple(s[0] for s in spans[ts : ts + kept])
        sent_spans = tuple(
            (max(s - ts, 0), min(e - ts, kept))
            for s, e in sentences
            if s < ts + kept and e > ts and s >= ts
        )
        chunks.append(
            Chunk(
                chunk_id=f"{doc.doc_id}/e{seq:04d}",
                doc_id=doc.doc_id,
                seq=seq,
                tokens=tokens,
                sentence_spans=sent_spans,
                text=doc.text[char_start:char_end],
            )
        )
    return chunks


def chunk_topic_granularity(
    embedding_chunks: Sequence[Chunk], min_tokens: int = 512
) -> list[Chunk]:
    """Concatenate consecutive chunks until each has >= ``min_tokens``.

    A trailing remainder shorter than the floor is merged into the
    previous chunk if one exists, else kept alone.
    """
    if not embedding_chunks:
        return []
    doc_id = embedding_chunks[0].doc_id
    if any(c.doc_id != doc_id for c in embedding_chunks):
        raise ValueError("chunks from multiple documents passed to one call")
    groups: list[list[Chunk]] = []
    cur: list[Chunk] = []
    total = 0
    for chunk in embedding_chunks:
        cur.append(chunk)
        total += chunk.token_count
        if total >= min_tokens:
            groups.append(cur)
            cur, total = [], 0
    if cur:
        if groups:
            groups[-1].extend(cur)
        else:
            groups.append(cur)

    merged = []
    for seq, members in enumerate(groups):
        tokens: list[str] = []
        sent_spans: list[tuple[int, int]] = []
        for member in members:
            offset = len(tokens)
            tokens.extend(member.tokens)
            sent_spans.extend((s + offset, e + offset) for s, e in member.sentence_spans)
        merged.append(
            Chunk(
                chunk_id=f"{doc_id}/t{seq:04d}",
                doc_id=doc_id,
                seq=seq,
                tokens=tuple(tokens),
                sentence_spans=tuple(sent_spans),
                text="".join(m.text for m in members),
            )
        )
    return merged


def chunk_from_text(
    chunk_id: str, doc_id: str, seq: int, text: str, token_count: int | None = None
) -> Chunk:
    """Rebuild a chunk from its stored text (inverse of JSONL export)."""
    spans = tokenize_spans(text)
    kept = len(spans) if token_count is None else min(token_count, len(spans))
    sentences = sentence_token_bounds(text, spans)
    sent_spans = tuple(
        (s, min(e, kept)) for s, e in sentences if s < kept
    )
    return Chunk(
        chunk_id=chunk_id,
        doc_id=doc_id,
        seq=seq,
        tokens=tuple(s[0] for s in spans[:kept]),
        sentence_spans=sent_spans,
        text=text,
    )


def write_chunks_jsonl(
    chunks: Iterable[Chunk], years: Mapping[str, int], path: str | Path
) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for c in chunks:
            fh.write(
                json.dumps(
                    {
                        "chunk_id": c.chunk_id,
                        "doc_id": c.doc_id,
                        "seq": c.seq,
                        "year": years[c.doc_id],
                        "token_count": c.token_count,
                        "text": c.text,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_chunks_jsonl(path: str | Path) -> tuple[list[Chunk], dict[str, int]]:
    chunks = []
    years: dict[str, int] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            rec = json.loads(raw)
            try:
                chunk = chunk_from_text(
                    rec["chunk_id"], rec["doc_id"], rec["seq"], rec["text"],
                    rec.get("token_count"),
                )
                years[rec["doc_id"]] = rec["year"]
            except KeyError as exc:
                raise IngestError(f"line {lineno}: missing field {exc}") from exc
            chunks.append(chunk)
    return chunks, years


def write_chunk_table_csv(chunks: Iterable[Chunk], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["chunk_id", "doc_id", "seq", "token_count"])
        for c in chunks:
            writer.writerow([c.chunk_id, c.doc_id, c.seq, c.token_count])
