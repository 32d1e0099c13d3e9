"""Synthetic corpora with drifting topics and planted forward-looking documents.

Each year has a latent topic mixture that random-walks on the simplex.
Ordinary documents sample every chunk from their own year's mixture;
innovator documents sample a fraction of their chunks from the mixture
``lead_years`` ahead.  The planted labels give the ground truth that
real corpora cannot: rank correlation and AUC of any scoring method can
be computed directly, and the gain from top-quartile aggregation over
whole-document means can be measured.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import DocumentRecord
from .scoring import DocScore


@dataclass(frozen=True)
class SynthConfig:
    year_start: int = 1960
    year_end: int = 1999
    docs_per_year: int = 50
    vocab_size: int = 5000
    k_true: int = 20
    drift_rate: float = 0.1
    innovator_fraction: float = 0.25
    lead_years: int = 10
    innovator_chunk_fraction: float = 0.25
    chunks_per_doc: int = 8
    sentences_per_chunk: int = 4
    tokens_per_sentence: int = 16
    topic_concentration: float = 0.05
    mixture_concentration: float = 1.0
    seed: int = 42

    def __post_init__(self):
        if self.year_start > self.year_end:
            raise ValueError("year_start must be <= year_end")
        if not (0.0 < self.innovator_fraction < 1.0):
            raise ValueError("innovator_fraction must be in (0, 1)")
        if self.lead_years < 1:
            raise ValueError("lead_years must be >= 1")
        if not (0.0 < self.innovator_chunk_fraction <= 1.0):
            raise ValueError("innovator_chunk_fraction must be in (0, 1]")
        if self.drift_rate < 0:
            raise ValueError("drift_rate must be >= 0")

    @property
    def years(self) -> range:
        return range(self.year_start, self.year_end + 1)

    @property
    def chunk_tokens(self) -> int:
        return self.sentences_per_chunk * self.tokens_per_sentence


@dataclass(frozen=True)
class DocTruth:
    is_innovator: bool
    lead_years: int
    forward_chunk_ids: frozenset[str] = frozenset()


@dataclass
class GroundTruth:
    docs: dict[str, DocTruth] = field(default_factory=dict)

    def lead_of(self, doc_id: str) -> int:
        truth = self.docs.get(doc_id)
        return truth.lead_years if truth and truth.is_innovator else 0

    def innovators(self) -> set[str]:
        return {d for d, t in self.docs.items() if t.is_innovator}

    def to_json(self, path: str | Path) -> None:
        payload = {
            doc_id: {
                "is_innovator": t.is_innovator,
                "lead_years": t.lead_years,
                "forward_chunk_ids": sorted(t.forward_chunk_ids),
            }
            for doc_id, t in sorted(self.docs.items())
        }
        Path(path).write_text(json.dumps(payload, indent=1), encoding="utf-8")

    @classmethod
    def from_json(cls, path: str | Path) -> "GroundTruth":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            docs={
                doc_id: DocTruth(
                    is_innovator=rec["is_innovator"],
                    lead_years=rec["lead_years"],
                    forward_chunk_ids=frozenset(rec["forward_chunk_ids"]),
                )
                for doc_id, rec in payload.items()
            }
        )


def _drift_mixtures(config: SynthConfig, rng: np.random.Generator) -> dict[int, np.ndarray]:
    """Year-level topic mixtures: a Dirichlet-perturbed random walk.

    Each year's mixture is a Dirichlet draw centered on the previous
    year's (a martingale, so distances grow with the year gap instead
    of reverting); ``drift_rate`` sets the per-year step size.
    """
    k = config.k_true
    mixture = rng.dirichlet(np.full(k, config.mixture_concentration))
    mixtures = {}
    for year in config.years:
        mixtures[year] = mixture
        if config.drift_rate > 0:
            concentration = 1.0 / config.drift_rate**2
            mixture = rng.dirichlet(mixture * concentration + 1e-2)
            mixture = mixture / mixture.sum()
    return mixtures


def _sample_chunk_tokens(
    mixture: np.ndarray, phi_cum: np.ndarray, n_tokens: int, rng: np.random.Generator
) -> np.ndarray:
    counts = rng.multinomial(n_tokens, mixture)
    words = np.empty(n_tokens, dtype=np.int64)
    pos = 0
    for topic, c in enumerate(counts):
        if c:
            words[pos : pos + c] = np.searchsorted(phi_cum[topic], rng.random(c))
            pos += c
    rng.shuffle(words)
    return np.minimum(words, phi_cum.shape[1] - 1)


def _render_text(word_ids: np.ndarray, config: SynthConfig) -> str:
    sentences = []
    per = config.tokens_per_sentence
    for s in range(0, len(word_ids), per):
        words = [f"w{w:04d}" for w in word_ids[s : s + per]]
        words[0] = words[0].capitalize()
        sentences.append(" ".join(words) + ".")
    return " ".join(sentences)


def generate(config: SynthConfig) -> tuple[list[DocumentRecord], GroundTruth]:
    """Generate a corpus and its planted ground truth, deterministically.

    Innovators appear only in years whose lead target stays inside the
    corpus; a lead reaching past the final year for every year is an
    error.
    """
    if config.year_start + config.lead_years > config.year_end:
        raise ValueError(
            f"lead_years={config.lead_years} reaches beyond the corpus end for every year"
        )
    rng = np.random.default_rng(config.seed)
    mixtures = _drift_mixtures(config, rng)
    phi = np.vstack(
        [rng.dirichlet(np.full(config.vocab_size, config.topic_concentration))
         for _ in range(config.k_true)]
    )
    phi_cum = np.cumsum(phi, axis=1)

    docs: list[DocumentRecord] = []
    truth = GroundTruth()
    last_innovator_year = config.year_end - config.lead_years
    n_forward = max(1, round(config.innovator_chunk_fraction * config.chunks_per_doc))
    for year in config.years:
        eligible = year <= last_innovator_year
        flags = rng.random(config.docs_per_year) < config.innovator_fraction
        for d in range(config.docs_per_year):
            doc_id = f"y{year}d{d:03d}"
            is_innovator = bool(flags[d]) and eligible
            forward_idx: set[int] = set()
            if is_innovator:
                forward_idx = set(
                    rng.choice(config.chunks_per_doc, size=n_forward, replace=False).tolist()
                )
            word_ids = []
            for c in range(config.chunks_per_doc):
                mixture = mixtures[year + config.lead_years] if c in forward_idx else mixtures[year]
                word_ids.append(
                    _sample_chunk_tokens(mixture, phi_cum, config.chunk_tokens, rng)
                )
            text = " ".join(_render_text(w, config) for w in word_ids)
            citations = int(rng.poisson(12.0 if is_innovator else 3.0))
            docs.append(
                DocumentRecord(
                    doc_id=doc_id,
                    year=year,
                    text=text,
                    author_ids=(f"author_{doc_id}",),
                    citation_count=citations,
                    group_tags=("synthetic",),
                )
            )
            truth.docs[doc_id] = DocTruth(
                is_innovator=is_innovator,
                lead_years=config.lead_years if is_innovator else 0,
                forward_chunk_ids=frozenset(
                    f"{doc_id}/t{i:04d}" for i in sorted(forward_idx)
                ),
            )
    return docs, truth


def write_corpus_jsonl(docs: Sequence[DocumentRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(
                json.dumps(
                    {
                        "doc_id": doc.doc_id,
                        "year": doc.year,
                        "text": doc.text,
                        "author_ids": list(doc.author_ids),
                        "citation_count": doc.citation_count,
                        "group_tags": list(doc.group_tags),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def rankdata(values: Sequence[float]) -> np.ndarray:
    """Average ranks (1-based), ties sharing their mean rank."""
    arr = np.asarray(values, dtype=np.float64)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(arr.size, dtype=np.float64)
    i = 0
    while i < arr.size:
        j = i
        while j + 1 < arr.size and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Rank correlation with average-tie handling."""
    rx = rankdata(x)
    ry = rankdata(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0.0:
        raise ValueError("spearman undefined for constant input")
    return float(rx @ ry) / denom


def auc_score(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """P(random positive outranks random negative), ties counting half."""
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc undefined without both classes")
    ranks = rankdata(scores)
    rank_sum = float(ranks[labels].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def evaluate(
    doc_scores: Sequence[DocScore],
    truth: GroundTruth,
    headline_fraction: float = 0.25,
) -> dict:
    """Scoring quality against planted ground truth.

    ``doc_scores`` may mix aggregation fractions; spearman and auc are
    reported for the headline fraction (falling back to the only one
    present), and top_quartile_gain is auc(0.25) - auc(1.0) when both
    are available.
    """
    by_fraction: dict[float, list[DocScore]] = {}
    for score in doc_scores:
        if score.doc_id in truth.docs:
            by_fraction.setdefault(score.fraction, []).append(score)
    if not by_fraction:
        raise ValueError("no scored documents with ground truth")
    if not truth.innovators():
        raise ValueError("auc undefined: ground truth contains no innovators")

    auc_by_fraction = {}
    spearman_by_fraction = {}
    for fraction, scores in by_fraction.items():
        values = [s.precocity for s in scores]
        labels = [truth.docs[s.doc_id].is_innovator for s in scores]
        leads = [float(truth.lead_of(s.doc_id)) for s in scores]
        auc_by_fraction[fraction] = auc_score(values, labels)
        spearman_by_fraction[fraction] = spearman(values, leads)

    headline = headline_fraction if headline_fraction in by_fraction else sorted(by_fraction)[0]
    gain = None
    if 0.25 in auc_by_fraction and 1.0 in auc_by_fraction:
        gain = auc_by_fraction[0.25] - auc_by_fraction[1.0]
    return {
        "spearman": spearman_by_fraction[headline],
        "auc": auc_by_fraction[headline],
        "top_quartile_gain": gain,
        "headline_fraction": headline,
        "auc_by_fraction": auc_by_fraction,
        "n_docs": {f: len(v) for f, v in by_fraction.items()},
    }
