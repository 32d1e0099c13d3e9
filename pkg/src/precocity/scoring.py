"""Novelty, transience, and precocity scoring against windowed comparison sets.

Each target chunk is compared to every eligible chunk in its past and
future windows: novelty is the mean divergence from the past side,
transience the mean from the future side, and precocity their
difference.  The corpus-level driver organizes comparison vectors into
per-year blocks so each target streams over contiguous matrices; the
per-pair divergences it produces are identical to calling the scalar
metric functions pair by pair.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .metrics import (
    KL_EPSILON,
    FeatureVector,
    cosine_distance,
    kl_divergence,
)
from .reuse import ExclusionSet
from .timeline import WindowConfig, comparison_window, is_central

METRIC_KL = "kl"
METRIC_COSINE = "cosine"

DEFAULT_MIN_COMPARISONS = 10

REASON_TOO_FEW_PAST = "too_few_past"
REASON_TOO_FEW_FUTURE = "too_few_future"
REASON_NO_SCORED_CHUNKS = "no_scored_chunks"


class InsufficientComparisons(Exception):
    """Raised when a chunk has too few eligible comparison partners."""

    def __init__(self, reason: str, n_past: int, n_future: int):
        super().__init__(f"{reason}: n_past={n_past}, n_future={n_future}")
        self.reason = reason
        self.n_past = n_past
        self.n_future = n_future


@dataclass(frozen=True)
class ChunkScore:
    chunk_id: str
    novelty: float
    transience: float
    precocity: float
    n_past: int
    n_future: int


@dataclass(frozen=True)
class AggregationSpec:
    """How chunk scores roll up to a document score.

    ``fraction`` selects the ceil(fraction * n) chunks with highest
    precocity; 1.0 is a plain mean.  With ``full_novelty_transience``
    the novelty/transience means run over all scored chunks instead of
    the selected ones.
    """

    fraction: float = 0.25
    full_novelty_transience: bool = False

    def __post_init__(self):
        if not (0.0 < self.fraction <= 1.0):
            raise ValueError("fraction must be in (0, 1]")


@dataclass(frozen=True)
class DocScore:
    doc_id: str
    novelty: float
    transience: float
    precocity: float
    fraction: float
    n_chunks: int


def _divergence(metric: str, target: FeatureVector, other: FeatureVector) -> float:
    if metric == METRIC_KL:
        return kl_divergence(target.values, other.values)
    if metric == METRIC_COSINE:
        return cosine_distance(target.values, other.values)
    raise ValueError(f"unknown metric {metric!r}")


def _eligible(
    target: FeatureVector,
    others: Iterable[FeatureVector],
    exclusions: ExclusionSet | None,
) -> list[FeatureVector]:
    if exclusions is None:
        return list(others)
    return [
        o for o in others if not exclusions.is_excluded_pair(target.chunk_id, o.chunk_id)
    ]


def score_chunk(
    target: FeatureVector,
    past: Sequence[FeatureVector],
    future: Sequence[FeatureVector],
    metric: str,
    exclusions: ExclusionSet | None = None,
    min_comparisons: int = DEFAULT_MIN_COMPARISONS,
) -> ChunkScore:
    """Score one chunk against explicit past/future comparison sets.

    The target is the KL reference distribution.  Raises
    :class:`InsufficientComparisons` when either side has fewer than
    ``min_comparisons`` eligible chunks.
    """
    past_ok = _eligible(target, past, exclusions)
    future_ok = _eligible(target, future, exclusions)
    if len(past_ok) < min_comparisons:
        raise InsufficientComparisons(REASON_TOO_FEW_PAST, len(past_ok), len(future_ok))
    if len(future_ok) < min_comparisons:
        raise InsufficientComparisons(REASON_TOO_FEW_FUTURE, len(past_ok), len(future_ok))
    novelty = float(np.mean([_divergence(metric, target, o) for o in past_ok]))
    transience = float(np.mean([_divergence(metric, target, o) for o in future_ok]))
    return ChunkScore(
        chunk_id=target.chunk_id,
        novelty=novelty,
        transience=transience,
        precocity=novelty - transience,
        n_past=len(past_ok),
        n_future=len(future_ok),
    )


def _top_similar(divergences: np.ndarray, top_fraction: float) -> np.ndarray:
    keep = max(1, math.ceil(top_fraction * divergences.size))
    if keep >= divergences.size:
        return divergences
    return np.partition(divergences, keep - 1)[:keep]


def score_chunk_similar_subset(
    target: FeatureVector,
    past: Sequence[FeatureVector],
    future: Sequence[FeatureVector],
    metric: str,
    exclusions: ExclusionSet | None = None,
    top_fraction: float = 0.05,
    min_comparisons: int = DEFAULT_MIN_COMPARISONS,
) -> ChunkScore:
    """Like :func:`score_chunk`, but each side is first restricted to the
    ceil(top_fraction * n) chunks most similar to the target (smallest
    divergence), with a floor of one.
    """
    if not (0.0 < top_fraction <= 1.0):
        raise ValueError("top_fraction must be in (0, 1]")
    past_ok = _eligible(target, past, exclusions)
    future_ok = _eligible(target, future, exclusions)
    if len(past_ok) < min_comparisons:
        raise InsufficientComparisons(REASON_TOO_FEW_PAST, len(past_ok), len(future_ok))
    if len(future_ok) < min_comparisons:
        raise InsufficientComparisons(REASON_TOO_FEW_FUTURE, len(past_ok), len(future_ok))
    d_past = _top_similar(
        np.array([_divergence(metric, target, o) for o in past_ok]), top_fraction
    )
    d_future = _top_similar(
        np.array([_divergence(metric, target, o) for o in future_ok]), top_fraction
    )
    novelty = float(d_past.mean())
    transience = float(d_future.mean())
    return ChunkScore(
        chunk_id=target.chunk_id,
        novelty=novelty,
        transience=transience,
        precocity=novelty - transience,
        n_past=int(d_past.size),
        n_future=int(d_future.size),
    )


def aggregate_document(
    chunk_scores: Sequence[ChunkScore], spec: AggregationSpec, doc_id: str | None = None
) -> DocScore:
    """Mean of the ceil(fraction * n) highest-precocity chunks."""
    if not chunk_scores:
        raise ValueError(REASON_NO_SCORED_CHUNKS)
    if doc_id is None:
        doc_id = chunk_scores[0].chunk_id.rsplit("/", 1)[0]
    n = len(chunk_scores)
    keep = math.ceil(spec.fraction * n)
    ranked = sorted(chunk_scores, key=lambda s: (-s.precocity, s.chunk_id))
    selected = ranked[:keep]
    nt_pool = chunk_scores if spec.full_novelty_transience else selected
    return DocScore(
        doc_id=doc_id,
        novelty=float(np.mean([s.novelty for s in nt_pool])),
        transience=float(np.mean([s.transience for s in nt_pool])),
        precocity=float(np.mean([s.precocity for s in selected])),
        fraction=spec.fraction,
        n_chunks=n,
    )


class _YearBlocks:
    """Comparison vectors grouped by year, as contiguous matrices."""

    def __init__(self, features: Sequence[FeatureVector], years: Mapping[str, int], metric: str):
        order = sorted(range(len(features)), key=lambda i: (years[features[i].chunk_id], features[i].chunk_id))
        self.metric = metric
        self.chunk_ids = [features[i].chunk_id for i in order]
        self.row_of = {cid: r for r, cid in enumerate(self.chunk_ids)}
        self.years = np.array([years[c] for c in self.chunk_ids])
        matrix = np.vstack([np.asarray(features[i].values, dtype=np.float64) for i in order])
        if metric == METRIC_KL:
            matrix = np.maximum(matrix, KL_EPSILON)
            matrix /= matrix.sum(axis=1, keepdims=True)
            self.probs = matrix
            self.log_probs = np.log(matrix)
        elif metric == METRIC_COSINE:
            norms = np.linalg.norm(matrix, axis=1, keepdims=True)
            if np.any(norms == 0):
                bad = self.chunk_ids[int(np.argmin(norms))]
                raise ValueError(f"zero-norm embedding for chunk {bad}")
            self.unit = matrix / norms
        else:
            raise ValueError(f"unknown metric {metric!r}")
        self.year_slices: dict[int, slice] = {}
        start = 0
        for r in range(1, len(self.years) + 1):
            if r == len(self.years) or self.years[r] != self.years[start]:
                self.year_slices[int(self.years[start])] = slice(start, r)
                start = r

    def rows_in_range(self, lo: int, hi: int) -> list[slice]:
        return [self.year_slices[y] for y in range(lo, hi + 1) if y in self.year_slices]

    def divergences_from(self, row: int, block: slice) -> np.ndarray:
        """Per-pair divergences target->others, matching the scalar ops."""
        if self.metric == METRIC_KL:
            p = self.probs[row]
            h = float(np.sum(p * self.log_probs[row]))
            return h - self.log_probs[block] @ p
        return 1.0 - self.unit[block] @ self.unit[row]


def score_corpus(
    features: Sequence[FeatureVector],
    chunk_years: Mapping[str, int],
    chunk_docs: Mapping[str, str],
    window: WindowConfig,
    metric: str,
    exclusions: ExclusionSet | None = None,
    min_comparisons: int = DEFAULT_MIN_COMPARISONS,
    top_similar_fraction: float | None = None,
    targets: Sequence[str] | None = None,
) -> tuple[list[ChunkScore], list[tuple[str, str]]]:
    """Score every central-period chunk against its comparison windows.

    Returns (scores, withheld) where withheld lists (chunk_id, reason)
    for chunks with too few eligible comparisons.  Comparison sets are
    drawn from ``features`` by year; targets default to all chunks whose
    year is central under ``window``.
    """
    blocks = _YearBlocks(features, chunk_years, metric)
    if targets is None:
        targets = [
            cid for cid in blocks.chunk_ids if is_central(chunk_years[cid], window)
        ]

    rows_by_doc: dict[str, list[int]] = {}
    for r, cid in enumerate(blocks.chunk_ids):
        rows_by_doc.setdefault(chunk_docs[cid], []).append(r)
    # inbound: rows of flagged chunks in documents citing this one;
    # outbound: (flagged chunk ids, cited doc) per citing document.
    inbound: dict[str, list[int]] = {}
    outbound: dict[str, list[tuple[frozenset[str], str]]] = {}
    same_author_rows: dict[str, list[int]] = {}
    if exclusions is not None:
        for (citing, cited), flagged in exclusions.excluded_chunks_per_link.items():
            rows = [blocks.row_of[c] for c in flagged if c in blocks.row_of]
            inbound.setdefault(cited, []).extend(rows)
            outbound.setdefault(citing, []).append((flagged, cited))

    scores: list[ChunkScore] = []
    withheld: list[tuple[str, str]] = []
    for chunk_id in targets:
        row = blocks.row_of[chunk_id]
        year = chunk_years[chunk_id]
        doc_id = chunk_docs[chunk_id]
        (past_lo, past_hi), (future_lo, future_hi) = comparison_window(year, window)

        excluded_rows: set[int] = set()
        if exclusions is not None:
            if doc_id not in same_author_rows:
                same_author_rows[doc_id] = [
                    r
                    for other in exclusions.excluded_docs_for(doc_id)
                    for r in rows_by_doc.get(other, ())
                ]
            excluded_rows.update(same_author_rows[doc_id])
            excluded_rows.update(inbound.get(doc_id, ()))
            for flagged, cited in outbound.get(doc_id, ()):
                if chunk_id in flagged:
                    excluded_rows.update(rows_by_doc.get(cited, ()))

        sides = []
        counts = []
        for lo, hi in ((past_lo, past_hi), (future_lo, future_hi)):
            values = []
            for block in blocks.rows_in_range(lo, hi):
                d = blocks.divergences_from(row, block)
                if excluded_rows:
                    mask = np.array(
                        [r not in excluded_rows for r in range(block.start, block.stop)]
                    )
                    d = d[mask]
                if d.size:
                    values.append(d)
            side = np.concatenate(values) if values else np.empty(0)
            sides.append(side)
            counts.append(int(side.size))

        if counts[0] < min_comparisons:
            withheld.append((chunk_id, REASON_TOO_FEW_PAST))
            continue
        if counts[1] < min_comparisons:
            withheld.append((chunk_id, REASON_TOO_FEW_FUTURE))
            continue
        past_d, future_d = sides
        if top_similar_fraction is not None:
            past_d = _top_similar(past_d, top_similar_fraction)
            future_d = _top_similar(future_d, top_similar_fraction)
        novelty = float(past_d.mean())
        transience = float(future_d.mean())
        scores.append(
            ChunkScore(
                chunk_id=chunk_id,
                novelty=novelty,
                transience=transience,
                precocity=novelty - transience,
                n_past=int(past_d.size),
                n_future=int(future_d.size),
            )
        )
    return scores, withheld


def aggregate_corpus(
    chunk_scores: Sequence[ChunkScore],
    chunk_docs: Mapping[str, str],
    spec: AggregationSpec,
) -> list[DocScore]:
    """Roll chunk scores up to per-document scores, one per scored doc."""
    by_doc: dict[str, list[ChunkScore]] = {}
    for score in chunk_scores:
        by_doc.setdefault(chunk_docs[score.chunk_id], []).append(score)
    return [
        aggregate_document(by_doc[doc_id], spec, doc_id=doc_id)
        for doc_id in sorted(by_doc)
    ]


def write_chunk_scores_csv(
    scores: Sequence[ChunkScore],
    chunk_docs: Mapping[str, str],
    chunk_years: Mapping[str, int],
    method: str,
    path: str | Path,
) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["chunk_id", "doc_id", "year", "novelty", "transience", "precocity",
             "n_past", "n_future", "method"]
        )
        for s in scores:
            writer.writerow(
                [s.chunk_id, chunk_docs[s.chunk_id], chunk_years[s.chunk_id],
                 repr(s.novelty), repr(s.transience), repr(s.precocity),
                 s.n_past, s.n_future, method]
            )


def write_doc_scores_csv(
    scores: Sequence[DocScore],
    doc_years: Mapping[str, int],
    method: str,
    path: str | Path,
) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["doc_id", "year", "novelty", "transience", "precocity",
             "fraction", "n_chunks", "method"]
        )
        for s in scores:
            writer.writerow(
                [s.doc_id, doc_years[s.doc_id], repr(s.novelty), repr(s.transience),
                 repr(s.precocity), repr(s.fraction), s.n_chunks, method]
            )


def read_doc_scores_csv(path: str | Path) -> list[dict]:
    rows = []
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                {
                    "doc_id": rec["doc_id"],
                    "year": int(rec["year"]),
                    "novelty": float(rec["novelty"]),
                    "transience": float(rec["transience"]),
                    "precocity": float(rec["precocity"]),
                    "fraction": float(rec["fraction"]),
                    "n_chunks": int(rec["n_chunks"]),
                    "method": rec["method"],
                }
            )
    return rows
