"""Lexical n-gram language models for the perplexity scoring path.

Period models are trained on year ranges of chunks and evaluated per
sentence: a sentence's perplexity is exp(-mean token log-probability),
and a chunk's value is the mean over its sentences.  The normalized
past/future contrast

    2 * (pp_past - pp_future) / (pp_past + pp_future)

is bounded in (-2, 2), antisymmetric, and invariant under jointly
rescaling both perplexities.  Externally computed perplexities can be
ingested through the same record type.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Chunk

logger = logging.getLogger(__name__)

UNK = "<unk>"
BOS = "<s>"

ADD_K = "add_k"
KNESER_NEY = "interpolated_kneser_ney"

BACKEND_BUILTIN = "builtin_ngram"
BACKEND_EXTERNAL = "external"

KN_DISCOUNT = 0.75


@dataclass(frozen=True)
class PerplexityRecord:
    chunk_id: str
    perplexity_past: float
    perplexity_future: float
    backend: str

    def __post_init__(self):
        for name in ("perplexity_past", "perplexity_future"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{self.chunk_id}: {name} must be positive and finite")


class NgramModel:
    """Count-based n-gram model with add-k or interpolated Kneser-Ney.

    Singleton training tokens are replaced by an UNK symbol, which also
    absorbs out-of-vocabulary tokens at evaluation time.  Sentences are
    padded with BOS context only; no end-of-sentence event is scored.
    """

    def __init__(
        self,
        order: int = 3,
        smoothing: str = ADD_K,
        k: float = 0.01,
        training_range: tuple[int, int] | None = None,
    ):
        if order < 1:
            raise ValueError("order must be >= 1")
        if smoothing not in (ADD_K, KNESER_NEY):
            raise ValueError(f"unknown smoothing {smoothing!r}")
        if k <= 0:
            raise ValueError("k must be > 0")
        self.order = order
        self.smoothing = smoothing
        self.k = k
        self.training_range = training_range
        self.vocab: set[str] = set()
        # counts[n] maps a length-(n-1) context tuple to a Counter of
        # next tokens; context_totals[n] caches the context sums.
        self.counts: list[dict[tuple[str, ...], Counter]] = [
            {} for _ in range(order + 1)
        ]
        self.context_totals: list[dict[tuple[str, ...], int]] = [
            {} for _ in range(order + 1)
        ]
        # Kneser-Ney continuation tables (built lazily from the raw
        # counts): level n maps a length-(n-1) context to the number of
        # distinct left-extensions of each continuation word.
        self._cont: list[dict[tuple[str, ...], Counter]] | None = None
        self._cont_totals: list[dict[tuple[str, ...], int]] | None = None

    def _sentences(self, chunk: Chunk) -> Iterable[list[str]]:
        for start, end in chunk.sentence_spans:
            sent = [t.lower() for t in chunk.tokens[start:end]]
            if sent:
                yield sent

    def fit(self, chunks: Sequence[Chunk]) -> "NgramModel":
        raw = Counter()
        sentences: list[list[str]] = []
        for chunk in chunks:
            for sent in self._sentences(chunk):
                sentences.append(sent)
                raw.update(sent)
        if not sentences:
            raise ValueError("no sentences in training chunks")
        singletons = {w for w, c in raw.items() if c == 1}
        self.vocab = {w for w in raw if w not in singletons}
        self.vocab.add(UNK)
        for sent in sentences:
            mapped = [w if w in self.vocab else UNK for w in sent]
            padded = [BOS] * (self.order - 1) + mapped
            for n in range(1, self.order + 1):
                table = self.counts[n]
                for i in range(self.order - 1, len(padded)):
                    ctx = tuple(padded[i - n + 1 : i])
                    table.setdefault(ctx, Counter())[padded[i]] += 1
        for n in range(1, self.order + 1):
            self.context_totals[n] = {
                ctx: sum(c.values()) for ctx, c in self.counts[n].items()
            }
        return self

    def _map_token(self, token: str) -> str:
        return token if token in self.vocab else UNK

    def log_prob(self, token: str, context: Sequence[str] = ()) -> float:
        """Natural-log probability of ``token`` after ``context``."""
        token = self._map_token(token.lower())
        ctx = [BOS if t == BOS else self._map_token(t.lower()) for t in context]
        if self.order > 1:
            ctx = tuple(([BOS] * (self.order - 1) + ctx)[-(self.order - 1) :])
        else:
            ctx = ()
        return self._log_prob_mapped(token, ctx)

    def _log_prob_mapped(self, token: str, ctx: tuple[str, ...]) -> float:
        if self.smoothing == ADD_K:
            return math.log(self._prob_add_k(token, ctx))
        return math.log(self._prob_kn(token, ctx, self.order))

    def _prob_add_k(self, token: str, ctx: tuple[str, ...]) -> float:
        v = len(self.vocab)
        counter = self.counts[self.order].get(ctx)
        c = counter[token] if counter is not None else 0
        total = self.context_totals[self.order].get(ctx, 0)
        return (c + self.k) / (total + self.k * v)

    def _ensure_continuation(self):
        """Distinct-left-extension counts for levels 1..order-1."""
        if self._cont is not None:
            return
        cont: list[dict[tuple[str, ...], Counter]] = [{} for _ in range(self.order)]
        for n in range(2, self.order + 1):
            for ctx, counter in self.counts[n].items():
                reduced = ctx[1:]
                table = cont[n - 1].setdefault(reduced, Counter())
                for w in counter:
                    table[w] += 1
        self._cont = cont
        self._cont_totals = [
            {ctx: sum(c.values()) for ctx, c in level.items()} for level in cont
        ]

    def _prob_kn(self, token: str, ctx: tuple[str, ...], n: int) -> float:
        if n == 0:
            return 1.0 / len(self.vocab)
        self._ensure_continuation()
        if n == self.order:
            counter = self.counts[n].get(ctx)
            total = self.context_totals[n].get(ctx, 0)
        else:
            sub = ctx[-(n - 1) :] if n > 1 else ()
            counter = self._cont[n].get(sub)
            total = self._cont_totals[n].get(sub, 0)
        if not total:
            return self._prob_kn(token, ctx, n - 1)
        c = counter[token]
        d = KN_DISCOUNT
        distinct = len(counter)
        lower = self._prob_kn(token, ctx, n - 1)
        return max(c - d, 0.0) / total + (d * distinct / total) * lower

    def sentence_log_prob(self, tokens: Sequence[str]) -> tuple[float, int]:
        padded = [BOS] * (self.order - 1) + [self._map_token(t.lower()) for t in tokens]
        lp = 0.0
        for i in range(self.order - 1, len(padded)):
            lp += self._log_prob_mapped(padded[i], tuple(padded[i - self.order + 1 : i]))
        return lp, len(tokens)

    def to_payload(self) -> dict:
        return {
            "format_version": 1,
            "order": self.order,
            "smoothing": self.smoothing,
            "k": self.k,
            "training_range": list(self.training_range) if self.training_range else None,
            "vocab": sorted(self.vocab),
            "counts": [
                {" ".join(ctx): dict(counter) for ctx, counter in level.items()}
                for level in self.counts
            ],
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "NgramModel":
        model = cls(
            order=payload["order"],
            smoothing=payload["smoothing"],
            k=payload["k"],
            training_range=tuple(payload["training_range"]) if payload["training_range"] else None,
        )
        model.vocab = set(payload["vocab"])
        model.counts = [
            {
                tuple(ctx.split(" ")) if ctx else (): Counter(counter)
                for ctx, counter in level.items()
            }
            for level in payload["counts"]
        ]
        model.context_totals = [
            {ctx: sum(c.values()) for ctx, c in level.items()} for level in model.counts
        ]
        return model


def train_lm(
    chunks: Sequence[Chunk],
    order: int = 3,
    smoothing: str = ADD_K,
    k: float = 0.01,
    seed: int = 0,
    training_range: tuple[int, int] | None = None,
) -> NgramModel:
    """Train a period model; raises if the training set is empty.

    ``seed`` is accepted for interface symmetry; counting is already
    deterministic.
    """
    if not chunks:
        label = f"{training_range[0]}-{training_range[1]}" if training_range else "(unspecified)"
        raise ValueError(f"no training chunks in range {label}")
    model = NgramModel(order=order, smoothing=smoothing, k=k, training_range=training_range)
    return model.fit(chunks)


def perplexity(model: NgramModel, chunk: Chunk, token_pooling: bool = False) -> float:
    """Chunk perplexity: mean of per-sentence perplexities.

    Each sentence contributes exp(-mean log-prob per token); with
    ``token_pooling`` the chunk is scored as one token pool instead.
    """
    pairs = [model.sentence_log_prob(chunk.tokens[s:e]) for s, e in chunk.sentence_spans if e > s]
    pairs = [(lp, n) for lp, n in pairs if n > 0]
    if not pairs:
        raise ValueError(f"chunk {chunk.chunk_id} has no tokens")
    if token_pooling:
        lp = sum(p for p, _ in pairs)
        n = sum(n for _, n in pairs)
        return math.exp(-lp / n)
    return float(sum(math.exp(-lp / n) for lp, n in pairs) / len(pairs))


def perplexity_precocity(perp_past: float, perp_future: float) -> float:
    """Normalized past/future perplexity contrast, in (-2, 2)."""
    for name, value in (("perp_past", perp_past), ("perp_future", perp_future)):
        if not (math.isfinite(value) and value > 0):
            raise ValueError(f"{name} must be positive and finite, got {value!r}")
    return 2.0 * (perp_past - perp_future) / (perp_past + perp_future)


def ingest_external_perplexities(
    path: str | Path, known_chunk_ids: Iterable[str]
) -> tuple[list[PerplexityRecord], list[str]]:
    """Validate an external perplexity CSV.

    Expected header: chunk_id,perplexity_past,perplexity_future.
    Returns (records, report) where the report lists rejected rows with
    reasons; rejected rows never become records.
    """
    known = set(known_chunk_ids)
    records = []
    report = []
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"chunk_id", "perplexity_past", "perplexity_future"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(
                f"{path}: header must contain {sorted(required)}, got {reader.fieldnames}"
            )
        for lineno, row in enumerate(reader, start=2):
            chunk_id = row["chunk_id"]
            if chunk_id not in known:
                report.append(f"line {lineno}: unknown chunk_id '{chunk_id}'")
                continue
            try:
                past = float(row["perplexity_past"])
                future = float(row["perplexity_future"])
            except (TypeError, ValueError):
                report.append(f"line {lineno}: non-numeric perplexity for '{chunk_id}'")
                continue
            try:
                records.append(
                    PerplexityRecord(
                        chunk_id=chunk_id,
                        perplexity_past=past,
                        perplexity_future=future,
                        backend=BACKEND_EXTERNAL,
                    )
                )
            except ValueError as exc:
                report.append(f"line {lineno}: {exc}")
    if report:
        logger.warning("rejected %d external perplexity rows", len(report))
    return records, report


def write_perplexities_csv(records: Sequence[PerplexityRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["chunk_id", "perplexity_past", "perplexity_future", "backend"])
        for r in records:
            writer.writerow(
                [r.chunk_id, repr(r.perplexity_past), repr(r.perplexity_future), r.backend]
            )


def save_lm(model: NgramModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_payload()), encoding="utf-8")


def load_lm(path: str | Path) -> NgramModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format_version") != 1:
        raise ValueError(f"unsupported model format version: {payload.get('format_version')!r}")
    return NgramModel.from_payload(payload)
