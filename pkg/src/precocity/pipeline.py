"""Config-driven orchestration: ingest, chunk, represent, score, regress.

A single JSON config describes the whole run; each stage writes its
artifacts into the output directory and records a content signature in
``manifest.json``.  Re-running with an unchanged config and inputs
skips completed stages.  All randomness descends from the config seed,
so two runs with the same config produce byte-identical score tables.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import __version__
from .corpus import (
    Chunk,
    DocumentRecord,
    chunk_embedding_granularity,
    chunk_topic_granularity,
    ingest_corpus,
    read_chunks_jsonl,
    trim_paratext,
    write_chunk_table_csv,
    write_chunks_jsonl,
    IngestError,
)
from .lm import (
    BACKEND_BUILTIN,
    ingest_external_perplexities,
    perplexity,
    train_lm,
)
from .metrics import EMBEDDING, TOPIC_SIMPLEX, FeatureVector
from .regression import (
    CollinearityError,
    RegressionSpec,
    fit_ols,
    summarize_groups,
    write_group_summaries_csv,
    write_results_json,
    write_results_table_csv,
)
from .reuse import build_exclusions, read_citation_links
from .scoring import (
    AggregationSpec,
    ChunkScore,
    METRIC_COSINE,
    METRIC_KL,
    aggregate_corpus,
    read_doc_scores_csv,
    score_corpus,
    write_chunk_scores_csv,
    write_doc_scores_csv,
)
from .synth import GroundTruth, SynthConfig, evaluate, generate, write_corpus_jsonl
from .timeline import (
    PeriodScheme,
    WindowConfig,
    period_is_central,
    perplexity_periods,
)
from . import topics as topics_mod

logger = logging.getLogger(__name__)

METHOD_TOPICS = "topics"
METHOD_EMBEDDINGS = "embeddings"
METHOD_PERPLEXITY = "perplexity"
METHODS = (METHOD_TOPICS, METHOD_EMBEDDINGS, METHOD_PERPLEXITY)

VARIANT_TWO_SIDED = "two_sided"
VARIANT_PRESCIENCE = "prescience"


class PipelineError(Exception):
    exit_code = 3


class ConfigError(PipelineError):
    exit_code = 1


class DataError(PipelineError):
    exit_code = 2


class ComputeError(PipelineError):
    exit_code = 3


DEFAULT_CONFIG: dict[str, Any] = {
    "seed": 42,
    "threads": 1,
    "output_dir": "out",
    "method": METHOD_TOPICS,
    "corpus": {
        "path": None,
        "field_map": {},
        "year_range": None,
        "trim_fraction": 0.0,
    },
    "chunking": {"embedding_max_tokens": 512, "topic_min_tokens": 512},
    "window": {"past_years": 20, "future_years": 20, "central_end_margin": 0},
    "periods": {"window_len": 12, "offset": 4, "anchor_year": 1968},
    "topics": {
        "k": 250,
        "iterations": 1000,
        "per_year_quota": 100,
        "alpha_sum": 5.0,
        "beta": 0.01,
        "min_chunk_freq": 5,
        "infer_samples": 100,
        "infer_burn_in": 50,
        "use_training_counts": True,
    },
    "embeddings": {"path": None},
    "perplexity": {
        "order": 3,
        "smoothing": "add_k",
        "k": 0.01,
        "variant": VARIANT_TWO_SIDED,
        "external_path": None,
        "token_pooling": False,
        "min_training_chunks": 10,
    },
    "scoring": {
        "min_comparisons": 10,
        "fractions": [0.25, 1.0],
        "top_similar_fraction": None,
        "full_novelty_transience": False,
    },
    "exclusions": {"citations_path": None},
    "regression": {
        "responses": ["citation_count"],
        "citation_transform": "log1p",
        "group_field": "group_tags",
    },
    "synth": {"params": {}, "corpus_path": None, "truth_path": None},
    "report": {"ground_truth_path": None},
}


def _deep_merge(base: dict, override: Mapping) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if key in merged and isinstance(merged[key], dict) and isinstance(value, Mapping):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(path: str | Path | None, overrides: Mapping | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            user = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        user = {k: v for k, v in user.items() if not k.startswith("_")}
        unknown = set(user) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = _deep_merge(cfg, user)
    if overrides:
        cfg = _deep_merge(cfg, overrides)
    return cfg


def apply_set_overrides(cfg: dict, assignments: Sequence[str]) -> dict:
    """Apply ``--set dotted.key=json_value`` style overrides."""
    cfg = copy.deepcopy(cfg)
    for assignment in assignments:
        if "=" not in assignment:
            raise ConfigError(f"--set expects key=value, got {assignment!r}")
        key, _, raw = assignment.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config section {key!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node[parts[-1]] = value
    return cfg


def validate_config(
    cfg: dict, require_corpus: bool = True, require_method_inputs: bool = True
) -> None:
    """Fail fast on impossible configs, before any compute starts."""
    if cfg["method"] not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {cfg['method']!r}")
    if require_corpus:
        path = cfg["corpus"]["path"]
        if not path:
            raise ConfigError("corpus.path is required")
        if not Path(path).exists():
            raise ConfigError(f"corpus file does not exist: {path}")
    if require_method_inputs and cfg["method"] == METHOD_EMBEDDINGS:
        path = cfg["embeddings"]["path"]
        if not path:
            raise ConfigError("embeddings.path is required for the embeddings method")
        if not Path(path).exists():
            raise ConfigError(f"embeddings file does not exist: {path}")
    external = cfg["perplexity"]["external_path"]
    if require_method_inputs and external and not Path(external).exists():
        raise ConfigError(f"external perplexity file does not exist: {external}")
    citations = cfg["exclusions"]["citations_path"]
    if citations and not Path(citations).exists():
        raise ConfigError(f"citation links file does not exist: {citations}")
    for fraction in cfg["scoring"]["fractions"]:
        if not (0.0 < fraction <= 1.0):
            raise ConfigError(f"aggregation fraction must be in (0, 1], got {fraction}")
    if cfg["perplexity"]["variant"] not in (VARIANT_TWO_SIDED, VARIANT_PRESCIENCE):
        raise ConfigError(f"unknown perplexity variant {cfg['perplexity']['variant']!r}")


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, default=str).encode("utf-8")
    ).hexdigest()


def _file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _signature(parts: Mapping[str, Any]) -> str:
    return hashlib.sha256(
        json.dumps(parts, sort_keys=True, default=str).encode("utf-8")
    ).hexdigest()


class Run:
    """One pipeline run rooted at the config's output directory."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.out = Path(cfg["output_dir"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.out / "manifest.json"
        self.manifest = self._load_manifest()

    # -- manifest -------------------------------------------------------

    def _load_manifest(self) -> dict:
        if self.manifest_path.exists():
            try:
                return json.loads(self.manifest_path.read_text(encoding="utf-8"))
            except json.JSONDecodeError:
                logger.warning("manifest unreadable; starting fresh")
        return {"stages": {}}

    def _save_manifest(self) -> None:
        self.manifest["config_hash"] = config_hash(self.cfg)
        self.manifest["seed"] = self.cfg["seed"]
        self.manifest["version"] = __version__
        tmp = self.manifest_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self.manifest, indent=1, sort_keys=True), encoding="utf-8")
        tmp.replace(self.manifest_path)

    def _stage_fresh(self, name: str, signature: str, outputs: Sequence[Path]) -> bool:
        record = self.manifest["stages"].get(name)
        if not record or record.get("signature") != signature:
            return False
        return all(Path(p).exists() for p in record.get("outputs", [])) and all(
            p.exists() for p in outputs
        )

    def _record_stage(self, name: str, signature: str, outputs: Sequence[Path]) -> None:
        self.manifest["stages"][name] = {
            "signature": signature,
            "outputs": [str(p) for p in outputs],
        }
        self._save_manifest()

    # -- shared inputs --------------------------------------------------

    @property
    def docs_path(self) -> Path:
        return self.out / "docs.jsonl"

    @property
    def chunks_embedding_path(self) -> Path:
        return self.out / "chunks_embedding.jsonl"

    @property
    def chunks_topic_path(self) -> Path:
        return self.out / "chunks_topic.jsonl"

    @property
    def model_path(self) -> Path:
        return self.out / "topic_model.json"

    @property
    def features_topics_path(self) -> Path:
        return self.out / "features_topics.csv"

    @property
    def perplexities_path(self) -> Path:
        return self.out / "perplexities.csv"

    def load_docs(self) -> list[DocumentRecord]:
        if not self.docs_path.exists():
            raise DataError("docs.jsonl missing; run the ingest stage first")
        try:
            return ingest_corpus(self.docs_path)
        except IngestError as exc:
            raise DataError(str(exc)) from exc

    def corpus_years(self, docs: Sequence[DocumentRecord]) -> tuple[int, int]:
        configured = self.cfg["corpus"]["year_range"]
        if configured:
            return int(configured[0]), int(configured[1])
        years = [d.year for d in docs]
        return min(years), max(years)

    def window_config(self, docs: Sequence[DocumentRecord]) -> WindowConfig:
        start, end = self.corpus_years(docs)
        w = self.cfg["window"]
        return WindowConfig(
            corpus_start=start,
            corpus_end=end,
            past_years=w["past_years"],
            future_years=w["future_years"],
            central_end_margin=w["central_end_margin"],
        )

    def period_scheme(self) -> PeriodScheme:
        p = self.cfg["periods"]
        return PeriodScheme(
            window_len=p["window_len"], offset=p["offset"], anchor_year=p["anchor_year"]
        )

    # -- stages ---------------------------------------------------------

    def stage_ingest(self, force: bool = False) -> Path:
        corpus_cfg = self.cfg["corpus"]
        src = Path(corpus_cfg["path"])
        if not src.exists():
            raise ConfigError(f"corpus file does not exist: {src}")
        signature = _signature(
            {"corpus": corpus_cfg, "input": _file_digest(src)}
        )
        if not force and self._stage_fresh("ingest", signature, [self.docs_path]):
            logger.info("ingest: up to date")
            return self.docs_path
        try:
            year_range = corpus_cfg["year_range"]
            docs = ingest_corpus(
                src,
                schema=corpus_cfg["field_map"],
                year_range=tuple(year_range) if year_range else None,
            )
        except IngestError as exc:
            raise DataError(str(exc)) from exc
        if not docs:
            raise DataError(f"no documents in {src}")
        fraction = corpus_cfg["trim_fraction"]
        if fraction:
            docs = [trim_paratext(d, fraction) for d in docs]
        write_corpus_jsonl(docs, self.docs_path)
        self._record_stage("ingest", signature, [self.docs_path])
        logger.info("ingest: %d documents", len(docs))
        return self.docs_path

    def stage_chunk(self, force: bool = False) -> None:
        chunk_cfg = self.cfg["chunking"]
        outputs = [
            self.chunks_embedding_path,
            self.chunks_topic_path,
            self.out / "chunk_table.csv",
            self.out / "period_assignments.csv",
        ]
        signature = _signature(
            {
                "chunking": chunk_cfg,
                "periods": self.cfg["periods"],
                "input": _file_digest(self.docs_path),
            }
        )
        if not force and self._stage_fresh("chunk", signature, outputs):
            logger.info("chunk: up to date")
            return
        docs = self.load_docs()
        years = {d.doc_id: d.year for d in docs}
        embedding_chunks: list[Chunk] = []
        topic_chunks: list[Chunk] = []
        for doc in docs:
            emb = chunk_embedding_granularity(doc, chunk_cfg["embedding_max_tokens"])
            embedding_chunks.extend(emb)
            topic_chunks.extend(chunk_topic_granularity(emb, chunk_cfg["topic_min_tokens"]))
        if not embedding_chunks:
            raise DataError("chunking produced no chunks (empty documents?)")
        write_chunks_jsonl(embedding_chunks, years, self.chunks_embedding_path)
        write_chunks_jsonl(topic_chunks, years, self.chunks_topic_path)
        write_chunk_table_csv(embedding_chunks + topic_chunks, self.out / "chunk_table.csv")
        self._write_period_assignments(embedding_chunks, years)
        self._record_stage("chunk", signature, outputs)
        logger.info(
            "chunk: %d embedding chunks, %d topic chunks",
            len(embedding_chunks),
            len(topic_chunks),
        )

    def _write_period_assignments(
        self, chunks: Sequence[Chunk], years: Mapping[str, int]
    ) -> None:
        scheme = self.period_scheme()
        with (self.out / "period_assignments.csv").open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["chunk_id", "year", "bucket_start", "bucket_end",
                 "past_start", "past_end", "own_start", "own_end",
                 "future_start", "future_end"]
            )
            for c in chunks:
                year = years[c.doc_id]
                pa = perplexity_periods(year, scheme)
                writer.writerow(
                    [c.chunk_id, year, pa.bucket[0], pa.bucket[1],
                     pa.past_range[0], pa.past_range[1],
                     pa.own_range[0], pa.own_range[1],
                     pa.future_range[0], pa.future_range[1]]
                )

    def stage_topics_train(self, force: bool = False) -> None:
        topics_cfg = self.cfg["topics"]
        signature = _signature(
            {
                "topics": topics_cfg,
                "seed": self.cfg["seed"],
                "input": _file_digest(self.chunks_topic_path),
                "docs": _file_digest(self.docs_path),
            }
        )
        if not force and self._stage_fresh("topics-train", signature, [self.model_path]):
            logger.info("topics-train: up to date")
            return
        docs = self.load_docs()
        chunks, _ = read_chunks_jsonl(self.chunks_topic_path)
        try:
            subsample = topics_mod.balanced_subsample(
                docs, topics_cfg["per_year_quota"], self.cfg["seed"]
            )
            keep = {d.doc_id for d in subsample}
            train_chunks = [c for c in chunks if c.doc_id in keep]
            state = topics_mod.train(
                train_chunks,
                k=topics_cfg["k"],
                iterations=topics_cfg["iterations"],
                seed=self.cfg["seed"],
                alpha_sum=topics_cfg["alpha_sum"],
                beta=topics_cfg["beta"],
                min_chunk_freq=topics_cfg["min_chunk_freq"],
            )
        except ValueError as exc:
            raise DataError(str(exc)) from exc
        topics_mod.save_model(state, self.model_path)
        self._record_stage("topics-train", signature, [self.model_path])
        logger.info(
            "topics-train: K=%d on %d chunks, vocab %d",
            state.k, len(state.train_chunk_ids), state.vocab_size,
        )

    def stage_topics_infer(self, force: bool = False) -> None:
        topics_cfg = self.cfg["topics"]
        signature = _signature(
            {
                "topics": topics_cfg,
                "seed": self.cfg["seed"],
                "model": _file_digest(self.model_path),
                "input": _file_digest(self.chunks_topic_path),
            }
        )
        if not force and self._stage_fresh(
            "topics-infer", signature, [self.features_topics_path]
        ):
            logger.info("topics-infer: up to date")
            return
        state = topics_mod.load_model(self.model_path)
        chunks, _ = read_chunks_jsonl(self.chunks_topic_path)
        train_index = {cid: i for i, cid in enumerate(state.train_chunk_ids)}
        use_training = topics_cfg["use_training_counts"]
        to_infer = [
            c for c in chunks if not (use_training and c.chunk_id in train_index)
        ]
        inferred = topics_mod.infer_many(
            state,
            to_infer,
            sampling_iterations=topics_cfg["infer_samples"],
            burn_in=topics_cfg["infer_burn_in"],
            seed=self.cfg["seed"],
            workers=max(1, int(self.cfg["threads"])),
        )
        inferred_by_id = {c.chunk_id: p for c, p in zip(to_infer, inferred)}
        with self.features_topics_path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["chunk_id"] + [f"k{i}" for i in range(state.k)])
            for c in chunks:
                if c.chunk_id in inferred_by_id:
                    probs = inferred_by_id[c.chunk_id]
                else:
                    probs = state.train_distribution(train_index[c.chunk_id])
                writer.writerow([c.chunk_id] + [repr(float(p)) for p in probs])
        self._record_stage("topics-infer", signature, [self.features_topics_path])
        logger.info("topics-infer: %d chunks (%d via inferencer)", len(chunks), len(to_infer))

    # -- feature loading ------------------------------------------------

    def _load_topic_features(self) -> list[FeatureVector]:
        features = []
        with self.features_topics_path.open("r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[0] != "chunk_id":
                raise DataError("features_topics.csv: first column must be chunk_id")
            for row in reader:
                features.append(
                    FeatureVector(
                        chunk_id=row[0],
                        kind=TOPIC_SIMPLEX,
                        values=np.array([float(x) for x in row[1:]]),
                    )
                )
        return features

    def _load_embedding_features(self, known_ids: set[str]) -> tuple[list[FeatureVector], list[str]]:
        path = Path(self.cfg["embeddings"]["path"])
        features = []
        report = []
        dim = None
        with path.open("r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[0] != "chunk_id":
                raise DataError(f"{path}: first column must be chunk_id")
            for lineno, row in enumerate(reader, start=2):
                chunk_id = row[0]
                if chunk_id not in known_ids:
                    report.append(f"line {lineno}: unknown chunk_id '{chunk_id}'")
                    continue
                values = np.array([float(x) for x in row[1:]], dtype=np.float64)
                if dim is None:
                    dim = values.size
                elif values.size != dim:
                    raise DataError(
                        f"{path} line {lineno}: dimension {values.size} != {dim}"
                    )
                if not np.all(np.isfinite(values)) or not np.any(values):
                    report.append(f"line {lineno}: invalid vector for '{chunk_id}'")
                    continue
                features.append(FeatureVector(chunk_id=chunk_id, kind=EMBEDDING, values=values))
        if report:
            logger.warning("embeddings: rejected %d rows", len(report))
        return features, report

    # -- scoring --------------------------------------------------------

    def _exclusions(self, chunks: Sequence[Chunk], docs: Sequence[DocumentRecord]):
        citations_path = self.cfg["exclusions"]["citations_path"]
        doc_map = {d.doc_id: d for d in docs}
        links = read_citation_links(citations_path) if citations_path else []
        return build_exclusions(chunks, links, doc_map)

    def stage_score(self, force: bool = False) -> None:
        method = self.cfg["method"]
        if method == METHOD_PERPLEXITY:
            self.stage_perplexity(force=force)
            return
        chunks_path = (
            self.chunks_topic_path if method == METHOD_TOPICS else self.chunks_embedding_path
        )
        features_digest = (
            _file_digest(self.features_topics_path)
            if method == METHOD_TOPICS
            else _file_digest(Path(self.cfg["embeddings"]["path"]))
        )
        outputs = self._score_outputs(method)
        signature = _signature(
            {
                "method": method,
                "scoring": self.cfg["scoring"],
                "window": self.cfg["window"],
                "exclusions": self.cfg["exclusions"],
                "features": features_digest,
                "chunks": _file_digest(chunks_path),
            }
        )
        if not force and self._stage_fresh(f"score-{method}", signature, outputs):
            logger.info("score[%s]: up to date", method)
            return
        docs = self.load_docs()
        chunks, chunk_years_by_doc = read_chunks_jsonl(chunks_path)
        chunk_years = {c.chunk_id: chunk_years_by_doc[c.doc_id] for c in chunks}
        chunk_docs = {c.chunk_id: c.doc_id for c in chunks}
        if method == METHOD_TOPICS:
            features = self._load_topic_features()
            metric = METRIC_KL
        else:
            features, rejects = self._load_embedding_features(set(chunk_docs))
            if rejects:
                (self.out / "embedding_rejects.txt").write_text(
                    "\n".join(rejects) + "\n", encoding="utf-8"
                )
            metric = METRIC_COSINE
        if not features:
            raise DataError(f"no usable feature vectors for method {method}")
        exclusions = self._exclusions(chunks, docs)
        window = self.window_config(docs)
        scoring_cfg = self.cfg["scoring"]
        try:
            chunk_scores, withheld = score_corpus(
                features,
                chunk_years,
                chunk_docs,
                window,
                metric,
                exclusions=exclusions,
                min_comparisons=scoring_cfg["min_comparisons"],
                top_similar_fraction=scoring_cfg["top_similar_fraction"],
            )
        except ValueError as exc:
            raise ComputeError(str(exc)) from exc
        self._write_scores(method, chunk_scores, withheld, chunk_docs, chunk_years)
        self._record_stage(f"score-{method}", signature, outputs)

    def _score_outputs(self, method: str) -> list[Path]:
        outputs = [self.out / f"scores_chunks_{method}.csv"]
        for fraction in self.cfg["scoring"]["fractions"]:
            outputs.append(self.out / f"scores_docs_{method}_{fraction}.csv")
        return outputs

    def _write_scores(
        self,
        method: str,
        chunk_scores: Sequence[ChunkScore],
        withheld: Sequence[tuple[str, str]],
        chunk_docs: Mapping[str, str],
        chunk_years: Mapping[str, int],
    ) -> None:
        if not chunk_scores:
            raise ComputeError(
                f"no chunks scored for method {method}; corpus may have no central period"
            )
        write_chunk_scores_csv(
            chunk_scores, chunk_docs, chunk_years, method,
            self.out / f"scores_chunks_{method}.csv",
        )
        if withheld:
            with (self.out / f"withheld_{method}.csv").open(
                "w", encoding="utf-8", newline=""
            ) as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["chunk_id", "reason"])
                writer.writerows(withheld)
        doc_years: dict[str, int] = {}
        for cid, doc_id in chunk_docs.items():
            doc_years[doc_id] = chunk_years[cid]
        for fraction in self.cfg["scoring"]["fractions"]:
            spec = AggregationSpec(
                fraction=fraction,
                full_novelty_transience=self.cfg["scoring"]["full_novelty_transience"],
            )
            doc_scores = aggregate_corpus(chunk_scores, chunk_docs, spec)
            write_doc_scores_csv(
                doc_scores, doc_years, method,
                self.out / f"scores_docs_{method}_{fraction}.csv",
            )
        logger.info(
            "score[%s]: %d chunks scored, %d withheld", method, len(chunk_scores), len(withheld)
        )

    # -- perplexity path --------------------------------------------------

    def stage_perplexity(self, force: bool = False) -> None:
        perp_cfg = self.cfg["perplexity"]
        outputs = self._score_outputs(METHOD_PERPLEXITY) + [self.perplexities_path]
        signature = _signature(
            {
                "perplexity": perp_cfg,
                "periods": self.cfg["periods"],
                "scoring": self.cfg["scoring"],
                "seed": self.cfg["seed"],
                "input": _file_digest(self.chunks_embedding_path),
                "external": (
                    _file_digest(Path(perp_cfg["external_path"]))
                    if perp_cfg["external_path"]
                    else None
                ),
            }
        )
        if not force and self._stage_fresh("perplexity", signature, outputs):
            logger.info("perplexity: up to date")
            return
        docs = self.load_docs()
        chunks, years_by_doc = read_chunks_jsonl(self.chunks_embedding_path)
        chunk_years = {c.chunk_id: years_by_doc[c.doc_id] for c in chunks}
        chunk_docs = {c.chunk_id: c.doc_id for c in chunks}
        scheme = self.period_scheme()
        corpus_range = self.corpus_years(docs)

        if perp_cfg["external_path"]:
            records, report = ingest_external_perplexities(
                perp_cfg["external_path"], chunk_years
            )
            if report:
                (self.out / "perplexity_rejects.txt").write_text(
                    "\n".join(report) + "\n", encoding="utf-8"
                )
            own_values: dict[str, float] = {}
            if perp_cfg["variant"] == VARIANT_PRESCIENCE:
                raise ConfigError(
                    "prescience variant needs own-period perplexities; "
                    "external files carry only past/future"
                )
            values = {
                r.chunk_id: (r.perplexity_past, None, r.perplexity_future) for r in records
            }
            backend = records[0].backend if records else "external"
        else:
            values = self._builtin_perplexities(chunks, chunk_years, scheme, corpus_range)
            backend = BACKEND_BUILTIN

        self._write_perplexities_csv(values, backend)
        chunk_scores, withheld = self._perplexity_scores(
            values, chunk_years, scheme, corpus_range, perp_cfg["variant"]
        )
        self._write_scores(METHOD_PERPLEXITY, chunk_scores, withheld, chunk_docs, chunk_years)
        self._record_stage("perplexity", signature, outputs)

    def _builtin_perplexities(
        self,
        chunks: Sequence[Chunk],
        chunk_years: Mapping[str, int],
        scheme: PeriodScheme,
        corpus_range: tuple[int, int],
    ) -> dict[str, tuple[float, float | None, float]]:
        perp_cfg = self.cfg["perplexity"]
        by_year: dict[int, list[Chunk]] = {}
        for c in chunks:
            by_year.setdefault(chunk_years[c.chunk_id], []).append(c)

        def chunks_in(rng: tuple[int, int]) -> list[Chunk]:
            out: list[Chunk] = []
            for y in range(rng[0], rng[1] + 1):
                out.extend(by_year.get(y, ()))
            return out

        buckets: dict[tuple[int, int], list[Chunk]] = {}
        for c in chunks:
            year = chunk_years[c.chunk_id]
            if not period_is_central(year, scheme, corpus_range):
                continue
            pa = perplexity_periods(year, scheme)
            buckets.setdefault(pa.bucket, []).append(c)

        min_chunks = perp_cfg["min_training_chunks"]
        values: dict[str, tuple[float, float | None, float]] = {}
        for bucket in sorted(buckets):
            pa = perplexity_periods(bucket[0], scheme)
            sets = {
                "past": chunks_in(pa.past_range),
                "own": chunks_in(pa.own_range),
                "future": chunks_in(pa.future_range),
            }
            if any(len(s) < min_chunks for s in sets.values()):
                logger.warning(
                    "bucket %s: training set below %d chunks; chunks withheld",
                    bucket, min_chunks,
                )
                continue
            models = {}
            for side, training in sets.items():
                rng_label = {"past": pa.past_range, "own": pa.own_range,
                             "future": pa.future_range}[side]
                try:
                    models[side] = train_lm(
                        training,
                        order=perp_cfg["order"],
                        smoothing=perp_cfg["smoothing"],
                        k=perp_cfg["k"],
                        seed=self.cfg["seed"],
                        training_range=rng_label,
                    )
                except ValueError as exc:
                    raise DataError(str(exc)) from exc
            pooling = perp_cfg["token_pooling"]
            for c in sorted(buckets[bucket], key=lambda c: c.chunk_id):
                values[c.chunk_id] = (
                    perplexity(models["past"], c, pooling),
                    perplexity(models["own"], c, pooling),
                    perplexity(models["future"], c, pooling),
                )
        return values

    def _write_perplexities_csv(
        self, values: Mapping[str, tuple[float, float | None, float]], backend: str
    ) -> None:
        with self.perplexities_path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["chunk_id", "perplexity_past", "perplexity_own", "perplexity_future", "backend"]
            )
            for chunk_id in sorted(values):
                past, own, future = values[chunk_id]
                writer.writerow(
                    [chunk_id, repr(past), "" if own is None else repr(own),
                     repr(future), backend]
                )

    def _perplexity_scores(
        self,
        values: Mapping[str, tuple[float, float | None, float]],
        chunk_years: Mapping[str, int],
        scheme: PeriodScheme,
        corpus_range: tuple[int, int],
        variant: str,
    ) -> tuple[list[ChunkScore], list[tuple[str, str]]]:
        by_year: dict[int, int] = {}
        for cid, year in chunk_years.items():
            by_year[year] = by_year.get(year, 0) + 1

        def count_in(rng: tuple[int, int]) -> int:
            return sum(by_year.get(y, 0) for y in range(rng[0], rng[1] + 1))

        scores = []
        withheld: list[tuple[str, str]] = []
        for chunk_id in sorted(values):
            year = chunk_years[chunk_id]
            if not period_is_central(year, scheme, corpus_range):
                withheld.append((chunk_id, "outside_central_period"))
                continue
            past, own, future = values[chunk_id]
            if variant == VARIANT_PRESCIENCE:
                if own is None:
                    withheld.append((chunk_id, "no_own_perplexity"))
                    continue
                reference = own
            else:
                reference = past
            total = reference + future
            novelty = 2.0 * reference / total
            transience = 2.0 * future / total
            pa = perplexity_periods(year, scheme)
            ref_range = pa.own_range if variant == VARIANT_PRESCIENCE else pa.past_range
            scores.append(
                ChunkScore(
                    chunk_id=chunk_id,
                    novelty=novelty,
                    transience=transience,
                    precocity=novelty - transience,
                    n_past=count_in(ref_range),
                    n_future=count_in(pa.future_range),
                )
            )
        return scores, withheld

    # -- regression and reporting ----------------------------------------

    def stage_regress(self, force: bool = False) -> None:
        reg_cfg = self.cfg["regression"]
        doc_score_files = sorted(self.out.glob("scores_docs_*.csv"))
        if not doc_score_files:
            raise DataError("no document score tables; run the score stage first")
        outputs = [
            self.out / "regression_results.json",
            self.out / "regression_table.csv",
        ]
        signature = _signature(
            {
                "regression": reg_cfg,
                "inputs": {str(p): _file_digest(p) for p in doc_score_files},
                "docs": _file_digest(self.docs_path),
            }
        )
        if not force and self._stage_fresh("regress", signature, outputs):
            logger.info("regress: up to date")
            return
        docs = {d.doc_id: d for d in self.load_docs()}
        results: dict[str, dict] = {}
        for path in doc_score_files:
            rows = read_doc_scores_csv(path)
            if not rows:
                continue
            method = rows[0]["method"]
            fraction = rows[0]["fraction"]
            combo = f"{method},{fraction}"
            doc_scores = [
                DocScoreView(r["doc_id"], r["novelty"], r["transience"],
                             r["precocity"], r["fraction"], r["n_chunks"])
                for r in rows
            ]
            for response in reg_cfg["responses"]:
                spec = RegressionSpec(
                    response=response, citation_transform=reg_cfg["citation_transform"]
                )
                try:
                    try:
                        result = fit_ols(doc_scores, docs, spec)
                    except CollinearityError:
                        # Eq.-style normalized scores make novelty affine in
                        # precocity; refit without the redundant column.
                        logger.info("regress %s/%s: dropping collinear novelty", combo, response)
                        result = fit_ols(
                            doc_scores, docs, spec,
                            predictors=("precocity", "precocity_sq", "year"),
                        )
                except ValueError as exc:
                    logger.warning("regress %s/%s skipped: %s", combo, response, exc)
                    continue
                results.setdefault(combo, {})[response] = result
        if not results:
            raise DataError("no regression could be fit (missing responses?)")
        write_results_json(results, outputs[0])
        write_results_table_csv(results, outputs[1])
        group_field = reg_cfg["group_field"]
        if group_field:
            try:
                path_025 = [p for p in doc_score_files if p.name.endswith("_0.25.csv")]
                rows = read_doc_scores_csv((path_025 or doc_score_files)[0])
                doc_scores = [
                    DocScoreView(r["doc_id"], r["novelty"], r["transience"],
                                 r["precocity"], r["fraction"], r["n_chunks"])
                    for r in rows
                ]
                groups = summarize_groups(doc_scores, docs, group_field)
                write_group_summaries_csv(groups, self.out / "group_summaries.csv")
            except ValueError as exc:
                logger.warning("group summaries skipped: %s", exc)
        self._record_stage("regress", signature, outputs)
        logger.info("regress: %d method/fraction combos", len(results))

    def stage_synth(self, force: bool = False) -> tuple[Path, Path]:
        synth_cfg = self.cfg["synth"]
        params = dict(synth_cfg["params"])
        params.setdefault("seed", self.cfg["seed"])
        try:
            config = SynthConfig(**params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad synth params: {exc}") from exc
        corpus_path = Path(synth_cfg["corpus_path"] or self.out / "synth_corpus.jsonl")
        truth_path = Path(synth_cfg["truth_path"] or self.out / "ground_truth.json")
        signature = _signature({"synth": params})
        if not force and self._stage_fresh("synth", signature, [corpus_path, truth_path]):
            logger.info("synth: up to date")
            return corpus_path, truth_path
        try:
            docs, truth = generate(config)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        corpus_path.parent.mkdir(parents=True, exist_ok=True)
        write_corpus_jsonl(docs, corpus_path)
        truth.to_json(truth_path)
        self._record_stage("synth", signature, [corpus_path, truth_path])
        logger.info("synth: %d documents -> %s", len(docs), corpus_path)
        return corpus_path, truth_path

    def stage_report(self, force: bool = False) -> dict:
        truth_path = self.cfg["report"]["ground_truth_path"]
        summary: dict[str, Any] = {"output_dir": str(self.out)}
        doc_score_files = sorted(self.out.glob("scores_docs_*.csv"))
        summary["score_tables"] = [p.name for p in doc_score_files]
        if (self.out / "regression_table.csv").exists():
            summary["regression_table"] = (self.out / "regression_table.csv").name
        if truth_path:
            if not Path(truth_path).exists():
                raise ConfigError(f"ground truth file does not exist: {truth_path}")
            truth = GroundTruth.from_json(truth_path)
            evaluations = {}
            by_method: dict[str, list] = {}
            for path in doc_score_files:
                rows = read_doc_scores_csv(path)
                if not rows:
                    continue
                method = rows[0]["method"]
                by_method.setdefault(method, []).extend(
                    DocScoreView(r["doc_id"], r["novelty"], r["transience"],
                                 r["precocity"], r["fraction"], r["n_chunks"])
                    for r in rows
                )
            for method, scores in sorted(by_method.items()):
                try:
                    evaluations[method] = evaluate(scores, truth)
                except ValueError as exc:
                    logger.warning("evaluation for %s skipped: %s", method, exc)
            summary["evaluation"] = evaluations
            (self.out / "evaluation.json").write_text(
                json.dumps(summary["evaluation"], indent=1, sort_keys=True, default=str),
                encoding="utf-8",
            )
        return summary

    # -- full pipeline ----------------------------------------------------

    def run(self, force: bool = False) -> dict:
        validate_config(self.cfg)
        self.stage_ingest(force=force)
        self.stage_chunk(force=force)
        method = self.cfg["method"]
        if method == METHOD_TOPICS:
            self.stage_topics_train(force=force)
            self.stage_topics_infer(force=force)
            self.stage_score(force=force)
        elif method == METHOD_EMBEDDINGS:
            self.stage_score(force=force)
        else:
            self.stage_perplexity(force=force)
        self.stage_regress(force=force)
        return self.stage_report(force=force)


class DocScoreView:
    """Row view with the DocScore attribute surface (for CSV reloads)."""

    __slots__ = ("doc_id", "novelty", "transience", "precocity", "fraction", "n_chunks")

    def __init__(self, doc_id, novelty, transience, precocity, fraction, n_chunks):
        self.doc_id = doc_id
        self.novelty = novelty
        self.transience = transience
        self.precocity = precocity
        self.fraction = fraction
        self.n_chunks = n_chunks
