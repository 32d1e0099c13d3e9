"""Synthetic corpus generation and evaluation against planted truth."""

import numpy as np
import pytest

from precocity.corpus import tokenize
from precocity.scoring import DocScore
from precocity.synth import (
    GroundTruth,
    SynthConfig,
    auc_score,
    evaluate,
    generate,
    rankdata,
    spearman,
    write_corpus_jsonl,
)

SMALL = dict(
    year_start=1970, year_end=1979, docs_per_year=6, vocab_size=300,
    k_true=6, lead_years=4, chunks_per_doc=4, sentences_per_chunk=2,
    tokens_per_sentence=8, seed=5,
)


class TestGenerate:
    def test_counts_and_shape(self):
        docs, truth = generate(SynthConfig(**SMALL))
        assert len(docs) == 60
        assert len(truth.docs) == 60
        for doc in docs[:5]:
            assert len(tokenize(doc.text)) == 4 * 2 * 8

    def test_deterministic(self):
        a_docs, a_truth = generate(SynthConfig(**SMALL))
        b_docs, b_truth = generate(SynthConfig(**SMALL))
        assert a_docs == b_docs
        assert a_truth.docs == b_truth.docs

    def test_innovators_only_in_eligible_years(self):
        docs, truth = generate(SynthConfig(**SMALL))
        for doc in docs:
            if truth.docs[doc.doc_id].is_innovator:
                assert doc.year + 4 <= 1979

    def test_forward_chunk_count(self):
        config = SynthConfig(**{**SMALL, "innovator_chunk_fraction": 0.25})
        _, truth = generate(config)
        innovators = [t for t in truth.docs.values() if t.is_innovator]
        assert innovators
        for t in innovators:
            assert len(t.forward_chunk_ids) == 1  # round(0.25 * 4)

    def test_lead_beyond_range_rejected(self):
        with pytest.raises(ValueError, match="lead_years"):
            generate(SynthConfig(**{**SMALL, "lead_years": 15}))

    def test_zero_drift_shares_mixture(self):
        config = SynthConfig(**{**SMALL, "drift_rate": 0.0})
        from precocity.synth import _drift_mixtures

        rng = np.random.default_rng(0)
        mixtures = _drift_mixtures(config, rng)
        first = mixtures[config.year_start]
        for m in mixtures.values():
            assert np.array_equal(m, first)

    def test_truth_round_trip(self, tmp_path):
        _, truth = generate(SynthConfig(**SMALL))
        path = tmp_path / "truth.json"
        truth.to_json(path)
        loaded = GroundTruth.from_json(path)
        assert loaded.docs == truth.docs

    def test_corpus_jsonl_ingestable(self, tmp_path):
        from precocity.corpus import ingest_corpus

        docs, _ = generate(SynthConfig(**SMALL))
        path = tmp_path / "corpus.jsonl"
        write_corpus_jsonl(docs, path)
        loaded = ingest_corpus(path)
        assert len(loaded) == len(docs)
        assert loaded[0].text == docs[0].text


class TestGeneratedCorpusScoring:
    def word_features(self, docs, vocab_size):
        """Chunk-level word distributions as floored simplices."""
        from precocity.corpus import chunk_embedding_granularity
        from precocity.metrics import TOPIC_SIMPLEX, FeatureVector, floor_simplex

        features, years, owners = [], {}, {}
        for doc in docs:
            for chunk in chunk_embedding_granularity(doc, max_tokens=16):
                counts = np.zeros(vocab_size)
                for tok in chunk.tokens:
                    counts[int(tok[1:])] += 1
                features.append(
                    FeatureVector(chunk.chunk_id, TOPIC_SIMPLEX, floor_simplex(counts))
                )
                years[chunk.chunk_id] = doc.year
                owners[chunk.chunk_id] = doc.doc_id
        return features, years, owners

    def test_time_reversal_negates_planted_precocity(self):
        from precocity.scoring import AggregationSpec, aggregate_corpus, score_corpus
        from precocity.timeline import WindowConfig

        config = SynthConfig(**{**SMALL, "docs_per_year": 8, "drift_rate": 0.2,
                                "innovator_chunk_fraction": 1.0})
        docs, truth = generate(config)
        features, years, owners = self.word_features(docs, config.vocab_size)
        window = WindowConfig(corpus_start=1970, corpus_end=1979,
                              past_years=3, future_years=3)
        rev_window = WindowConfig(corpus_start=-1979, corpus_end=-1970,
                                  past_years=3, future_years=3)

        def innovator_mean(chunk_scores):
            doc_scores = aggregate_corpus(chunk_scores, owners, AggregationSpec(1.0))
            values = [s.precocity for s in doc_scores
                      if truth.docs[s.doc_id].is_innovator]
            assert values
            return float(np.mean(values))

        forward, _ = score_corpus(features, years, owners, window, "kl",
                                  min_comparisons=5)
        backward, _ = score_corpus(features, {c: -y for c, y in years.items()},
                                   owners, rev_window, "kl", min_comparisons=5)
        fwd = innovator_mean(forward)
        bwd = innovator_mean(backward)
        assert fwd > 0
        assert bwd == pytest.approx(-fwd, abs=1e-12)


class TestRankStats:
    def test_rankdata_ties(self):
        assert rankdata([10.0, 20.0, 20.0, 30.0]).tolist() == [1.0, 2.5, 2.5, 4.0]

    def test_spearman_perfect(self):
        x = [1.0, 2.0, 3.0, 4.0]
        assert spearman(x, [10, 20, 30, 40]) == pytest.approx(1.0)
        assert spearman(x, [40, 30, 20, 10]) == pytest.approx(-1.0)

    def test_spearman_constant_rejected(self):
        with pytest.raises(ValueError):
            spearman([1.0, 1.0], [1.0, 2.0])

    def test_auc_perfect_and_random(self):
        rng = np.random.default_rng(50)
        labels = [True] * 30 + [False] * 70
        perfect = list(range(100, 70, -1)) + list(range(70, 0, -1))
        assert auc_score(perfect, labels) == 1.0
        random_scores = rng.normal(size=100).tolist()
        assert abs(auc_score(random_scores, labels) - 0.5) < 0.2

    def test_auc_complement_symmetry(self):
        rng = np.random.default_rng(51)
        labels = (rng.random(60) < 0.3).tolist()
        if not any(labels):
            labels[0] = True
        scores = rng.normal(size=60).tolist()
        a = auc_score(scores, labels)
        b = auc_score([-s for s in scores], labels)
        assert a + b == pytest.approx(1.0, abs=1e-12)

    def test_auc_needs_both_classes(self):
        with pytest.raises(ValueError):
            auc_score([1.0, 2.0], [True, True])


class TestEvaluate:
    def truth_for(self, n_innovators=5, n_others=15, lead=4):
        from precocity.synth import DocTruth

        truth = GroundTruth()
        for i in range(n_innovators):
            truth.docs[f"i{i}"] = DocTruth(True, lead)
        for i in range(n_others):
            truth.docs[f"o{i}"] = DocTruth(False, 0)
        return truth

    def scores_from(self, truth, fraction, noise, rng):
        out = []
        for doc_id, t in truth.docs.items():
            value = t.lead_years + float(rng.normal(scale=noise))
            out.append(DocScore(doc_id, 1.0, 1.0 - value, value, fraction, 8))
        return out

    def test_perfect_scores(self):
        truth = self.truth_for()
        scores = [
            DocScore(doc_id, 1.0, 1.0 - t.lead_years, float(t.lead_years), 0.25, 8)
            for doc_id, t in truth.docs.items()
        ]
        report = evaluate(scores, truth)
        assert report["auc"] == pytest.approx(1.0)
        assert report["spearman"] == pytest.approx(1.0, abs=1e-12)

    def test_inverted_scores(self):
        rng = np.random.default_rng(53)
        truth = self.truth_for()
        scores = [
            DocScore(s.doc_id, s.novelty, s.transience, -s.precocity, s.fraction, s.n_chunks)
            for s in self.scores_from(truth, 0.25, noise=1e-9, rng=rng)
        ]
        report = evaluate(scores, truth)
        assert report["auc"] == pytest.approx(0.0, abs=1e-12)

    def test_gain_needs_both_fractions(self):
        rng = np.random.default_rng(54)
        truth = self.truth_for()
        quarter = self.scores_from(truth, 0.25, noise=0.5, rng=rng)
        assert evaluate(quarter, truth)["top_quartile_gain"] is None
        full = self.scores_from(truth, 1.0, noise=4.0, rng=rng)
        report = evaluate(quarter + full, truth)
        assert report["top_quartile_gain"] is not None
        assert report["headline_fraction"] == 0.25

    def test_no_innovators_rejected(self):
        from precocity.synth import DocTruth

        truth = GroundTruth(docs={"a": DocTruth(False, 0), "b": DocTruth(False, 0)})
        scores = [DocScore("a", 1, 1, 0.0, 0.25, 4), DocScore("b", 1, 1, 0.1, 0.25, 4)]
        with pytest.raises(ValueError, match="no innovators"):
            evaluate(scores, truth)
