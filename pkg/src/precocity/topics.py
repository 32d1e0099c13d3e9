"""LDA topic model: collapsed Gibbs training and held-out inference.

Training runs on a temporally balanced subsample so topic granularity
does not track corpus density over time; every other chunk gets its
distribution from the inferencer, which holds the topic-word table
fixed and resamples only the chunk's own assignments.

The sampler's inner loop uses plain Python lists (faster than per-token
numpy calls at small K); all randomness flows from a single seeded
generator, so training and inference are bit-reproducible.
"""

from __future__ import annotations

import json
import logging
from bisect import bisect_left
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Chunk, DocumentRecord

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1

DEFAULT_ALPHA_SUM = 5.0
DEFAULT_BETA = 0.01
DEFAULT_ITERATIONS = 1000
DEFAULT_MIN_CHUNK_FREQ = 5
DEFAULT_INFER_SAMPLES = 100
DEFAULT_INFER_BURN_IN = 50


@dataclass
class TopicModelState:
    """Trained sampler state: counts, priors, and vocabulary."""

    k: int
    alpha: float  # per-topic symmetric prior
    beta: float
    vocabulary: dict[str, int]
    topic_word_counts: np.ndarray  # (K, V) ints
    topic_totals: np.ndarray  # (K,)
    doc_topic_counts: np.ndarray  # (n_training_chunks, K)
    train_chunk_ids: list[str]
    rng_seed: int
    iterations: int

    @property
    def vocab_size(self) -> int:
        return len(self.vocabulary)

    def train_distribution(self, index: int) -> np.ndarray:
        """Smoothed topic distribution of training chunk ``index``."""
        counts = self.doc_topic_counts[index].astype(np.float64)
        probs = counts + self.alpha
        return probs / probs.sum()


def default_stoplist() -> frozenset[str]:
    data = resources.files("precocity").joinpath("data/stoplist.txt").read_text("utf-8")
    return frozenset(w.strip() for w in data.splitlines() if w.strip())


def balanced_subsample(
    docs: Sequence[DocumentRecord], per_year_quota: int, seed: int
) -> list[DocumentRecord]:
    """Up to ``per_year_quota`` documents per year, sampled uniformly.

    Deterministic for a fixed seed regardless of input order.
    """
    if per_year_quota < 1:
        raise ValueError("per_year_quota must be >= 1")
    if not docs:
        raise ValueError("empty corpus")
    by_year: dict[int, list[DocumentRecord]] = {}
    for doc in docs:
        by_year.setdefault(doc.year, []).append(doc)
    rng = np.random.default_rng(seed)
    picked: list[DocumentRecord] = []
    for year in sorted(by_year):
        group = sorted(by_year[year], key=lambda d: d.doc_id)
        if len(group) <= per_year_quota:
            picked.extend(group)
        else:
            idx = rng.choice(len(group), size=per_year_quota, replace=False)
            picked.extend(group[i] for i in sorted(idx))
    return picked


def build_vocabulary(
    chunks: Sequence[Chunk],
    min_chunk_freq: int = DEFAULT_MIN_CHUNK_FREQ,
    stoplist: frozenset[str] | None = None,
) -> dict[str, int]:
    """Token -> index map, pruning rare tokens and stopwords."""
    if stoplist is None:
        stoplist = default_stoplist()
    freq: dict[str, int] = {}
    for chunk in chunks:
        for tok in set(t.lower() for t in chunk.tokens):
            freq[tok] = freq.get(tok, 0) + 1
    kept = sorted(t for t, f in freq.items() if f >= min_chunk_freq and t not in stoplist)
    return {t: i for i, t in enumerate(kept)}


def _encode(chunk: Chunk, vocab: Mapping[str, int]) -> list[int]:
    return [vocab[t] for t in (tok.lower() for tok in chunk.tokens) if t in vocab]


def train(
    chunks: Sequence[Chunk],
    k: int,
    iterations: int = DEFAULT_ITERATIONS,
    seed: int = 0,
    alpha_sum: float = DEFAULT_ALPHA_SUM,
    beta: float = DEFAULT_BETA,
    min_chunk_freq: int = DEFAULT_MIN_CHUNK_FREQ,
    stoplist: frozenset[str] | None = None,
) -> TopicModelState:
    """Collapsed Gibbs sampling over the training chunks.

    Symmetric priors, no hyperparameter optimization; the returned state
    is the final sweep's counts.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    vocab = build_vocabulary(chunks, min_chunk_freq=min_chunk_freq, stoplist=stoplist)
    if not vocab:
        raise ValueError("vocabulary empty after pruning")
    alpha = alpha_sum / k
    v = len(vocab)
    vbeta = v * beta

    token_words: list[int] = []
    token_docs: list[int] = []
    chunk_ids = []
    for d, chunk in enumerate(chunks):
        ids = _encode(chunk, vocab)
        token_words.extend(ids)
        token_docs.extend([d] * len(ids))
        chunk_ids.append(chunk.chunk_id)
    n_tokens = len(token_words)
    n_docs = len(chunk_ids)
    if n_tokens == 0:
        raise ValueError("no in-vocabulary tokens in training chunks")

    rng = np.random.default_rng(seed)
    z = rng.integers(0, k, n_tokens).tolist()

    # Priors folded into the count tables; the per-topic normalizer is
    # kept as reciprocals and patched at the two entries each move touches.
    nvk = [[beta] * k for _ in range(v)]
    ndk = [[alpha] * k for _ in range(n_docs)]
    nk = [vbeta] * k
    for i in range(n_tokens):
        nvk[token_words[i]][z[i]] += 1.0
        ndk[token_docs[i]][z[i]] += 1.0
        nk[z[i]] += 1.0
    inv = [1.0 / x for x in nk]

    cp = [0.0] * k
    k_range = range(k)
    for sweep in range(iterations):
        u = rng.random(n_tokens).tolist()
        for i in range(n_tokens):
            w = token_words[i]
            d = token_docs[i]
            old = z[i]
            nvk_w = nvk[w]
            ndk_d = ndk[d]
            nvk_w[old] -= 1.0
            ndk_d[old] -= 1.0
            nk[old] -= 1.0
            inv[old] = 1.0 / nk[old]
            total = 0.0
            for kk in k_range:
                total += nvk_w[kk] * ndk_d[kk] * inv[kk]
                cp[kk] = total
            new = bisect_left(cp, u[i] * total)
            if new >= k:
                new = k - 1
            z[i] = new
            nvk_w[new] += 1.0
            ndk_d[new] += 1.0
            nk[new] += 1.0
            inv[new] = 1.0 / nk[new]
        if (sweep + 1) % 50 == 0:
            logger.debug("gibbs sweep %d/%d", sweep + 1, iterations)

    topic_word = np.rint(np.array(nvk, dtype=np.float64).T - beta).astype(np.int64)
    doc_topic = np.rint(np.array(ndk, dtype=np.float64) - alpha).astype(np.int64)
    return TopicModelState(
        k=k,
        alpha=alpha,
        beta=beta,
        vocabulary=vocab,
        topic_word_counts=topic_word,
        topic_totals=topic_word.sum(axis=1),
        doc_topic_counts=doc_topic,
        train_chunk_ids=chunk_ids,
        rng_seed=seed,
        iterations=iterations,
    )


def infer(
    state: TopicModelState,
    chunk: Chunk,
    sampling_iterations: int = DEFAULT_INFER_SAMPLES,
    burn_in: int = DEFAULT_INFER_BURN_IN,
    seed: int = 0,
) -> np.ndarray:
    """Topic distribution of an unseen chunk under a trained model.

    Topic-word counts stay fixed; the chunk's own assignments are Gibbs
    sampled for ``burn_in + sampling_iterations`` sweeps and the
    post-burn-in counts are averaged, then smoothed by alpha.
    Out-of-vocabulary tokens are skipped; a chunk with no in-vocabulary
    tokens gets the uniform prior distribution and a warning.
    """
    ids = _encode(chunk, state.vocabulary)
    return _infer_ids(state, ids, sampling_iterations, burn_in, seed, chunk.chunk_id)


def _infer_ids(
    state: TopicModelState,
    ids: list[int],
    sampling_iterations: int,
    burn_in: int,
    seed: int,
    chunk_id: str,
) -> np.ndarray:
    k = state.k
    if not ids:
        logger.warning("chunk %s has no in-vocabulary tokens; returning uniform prior", chunk_id)
        return np.full(k, 1.0 / k)
    if sampling_iterations < 1 or burn_in < 0:
        raise ValueError("sampling_iterations must be >= 1 and burn_in >= 0")
    alpha = state.alpha
    vbeta = state.vocab_size * state.beta
    denom = state.topic_totals.astype(np.float64) + vbeta
    # Per-word fixed factors (the "phi" side of the sampler).
    needed = sorted(set(ids))
    phi = {
        w: ((state.topic_word_counts[:, w].astype(np.float64) + state.beta) / denom).tolist()
        for w in needed
    }
    rng = np.random.default_rng(seed)
    n = len(ids)
    z = rng.integers(0, k, n).tolist()
    local = [alpha] * k
    for t in z:
        local[t] += 1.0
    acc = [0.0] * k
    cp = [0.0] * k
    k_range = range(k)
    total_sweeps = burn_in + sampling_iterations
    for sweep in range(total_sweeps):
        u = rng.random(n).tolist()
        for i in range(n):
            w = ids[i]
            old = z[i]
            local[old] -= 1.0
            phi_w = phi[w]
            total = 0.0
            for kk in k_range:
                total += phi_w[kk] * local[kk]
                cp[kk] = total
            new = bisect_left(cp, u[i] * total)
            if new >= k:
                new = k - 1
            z[i] = new
            local[new] += 1.0
        if sweep >= burn_in:
            for kk in k_range:
                acc[kk] += local[kk] - alpha
    mean_counts = np.array(acc) / sampling_iterations
    probs = mean_counts + alpha
    return probs / probs.sum()


def _infer_worker(args):
    index, ids, chunk_id = args
    seeds = np.random.SeedSequence(
        entropy=_WORKER_STATE["base_seed"], spawn_key=(index,)
    ).generate_state(1)
    return index, _infer_ids(
        _WORKER_STATE["state"],
        ids,
        _WORKER_STATE["sampling_iterations"],
        _WORKER_STATE["burn_in"],
        int(seeds[0]),
        chunk_id,
    )


_WORKER_STATE: dict = {}


def _init_worker(state, sampling_iterations, burn_in, base_seed):
    _WORKER_STATE.update(
        state=state,
        sampling_iterations=sampling_iterations,
        burn_in=burn_in,
        base_seed=base_seed,
    )


def infer_many(
    state: TopicModelState,
    chunks: Sequence[Chunk],
    sampling_iterations: int = DEFAULT_INFER_SAMPLES,
    burn_in: int = DEFAULT_INFER_BURN_IN,
    seed: int = 0,
    workers: int = 1,
) -> list[np.ndarray]:
    """Inferencer over many chunks, optionally in parallel.

    Each chunk gets its own stream spawned from ``seed`` and its
    position, so results do not depend on worker scheduling.
    """
    jobs = [(i, _encode(c, state.vocabulary), c.chunk_id) for i, c in enumerate(chunks)]
    if workers <= 1:
        _init_worker(state, sampling_iterations, burn_in, seed)
        results = [_infer_worker(job) for job in jobs]
    else:
        import multiprocessing as mp

        ctx = mp.get_context("fork")
        with ctx.Pool(
            workers, initializer=_init_worker,
            initargs=(state, sampling_iterations, burn_in, seed),
        ) as pool:
            results = pool.map(_infer_worker, jobs, chunksize=64)
    out: list[np.ndarray | None] = [None] * len(chunks)
    for index, probs in results:
        out[index] = probs
    return out  # type: ignore[return-value]


def save_model(state: TopicModelState, path: str | Path) -> None:
    vocab_list = [None] * len(state.vocabulary)
    for tok, i in state.vocabulary.items():
        vocab_list[i] = tok
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "k": state.k,
        "alpha": state.alpha,
        "beta": state.beta,
        "rng_seed": state.rng_seed,
        "iterations": state.iterations,
        "vocabulary": vocab_list,
        "topic_word_counts": state.topic_word_counts.tolist(),
        "doc_topic_counts": state.doc_topic_counts.tolist(),
        "train_chunk_ids": state.train_chunk_ids,
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_model(path: str | Path) -> TopicModelState:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version: {version!r}")
    topic_word = np.asarray(payload["topic_word_counts"], dtype=np.int64)
    return TopicModelState(
        k=payload["k"],
        alpha=payload["alpha"],
        beta=payload["beta"],
        vocabulary={t: i for i, t in enumerate(payload["vocabulary"])},
        topic_word_counts=topic_word,
        topic_totals=topic_word.sum(axis=1),
        doc_topic_counts=np.asarray(payload["doc_topic_counts"], dtype=np.int64),
        train_chunk_ids=list(payload["train_chunk_ids"]),
        rng_seed=payload["rng_seed"],
        iterations=payload["iterations"],
    )
