import assert from "node:assert/strict";
import { test } from "node:test";
import { execFileSync } from "node:child_process";
import { existsSync, mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { main as adapterMain } from "../src/cli.js";

/**
 * Full round trip against the engine: synthesize a corpus, chunk it,
 * export embeddings and perplexities from this adapter, and feed both
 * back through the engine's scoring stages. Zero rejected rows and a
 * correct 1968-bucket range echo are the acceptance conditions.
 */

function python(args: string[]): string {
  return execFileSync("python3", ["-m", "precocity.cli", ...args], {
    encoding: "utf-8",
    stdio: ["ignore", "pipe", "pipe"],
  });
}

function setUpEngineRun(): { dir: string; out: string; cfgPath: string } {
  const dir = mkdtempSync(join(tmpdir(), "roundtrip-"));
  const out = join(dir, "out");
  const cfg = {
    seed: 77,
    output_dir: out,
    method: "topics",
    corpus: { path: join(out, "synth_corpus.jsonl") },
    chunking: { embedding_max_tokens: 32, topic_min_tokens: 32 },
    window: { past_years: 20, future_years: 20 },
    scoring: { min_comparisons: 5 },
    synth: {
      params: {
        year_start: 1950, year_end: 1999, docs_per_year: 2,
        vocab_size: 400, k_true: 6, lead_years: 10,
        chunks_per_doc: 2, sentences_per_chunk: 2, tokens_per_sentence: 16,
      },
    },
  };
  const cfgPath = join(dir, "cfg.json");
  writeFileSync(cfgPath, JSON.stringify(cfg), "utf-8");
  python(["synth", "-c", cfgPath]);
  python(["ingest", "-c", cfgPath]);
  python(["chunk", "-c", cfgPath]);
  return { dir, out, cfgPath };
}

const engine = setUpEngineRun();

test("embedding export is ingested by the engine with zero rejections", () => {
  const vectors = join(engine.dir, "vectors.csv");
  const code = adapterMain([
    "export-embeddings",
    "--chunks", join(engine.out, "chunks_embedding.jsonl"),
    "--out", vectors,
    "--dim", "32",
  ]);
  assert.equal(code, 0);
  const chunkLines = readFileSync(join(engine.out, "chunks_embedding.jsonl"), "utf-8")
    .trim().split("\n").length;
  const vectorLines = readFileSync(vectors, "utf-8").trim().split("\n").length - 1;
  assert.equal(vectorLines, chunkLines);
  assert.ok(vectorLines >= 100, `expected a 100-chunk sample, got ${vectorLines}`);

  python([
    "score", "-c", engine.cfgPath,
    "--set", "method=embeddings",
    "--set", `embeddings.path=${vectors}`,
  ]);
  // a rejects file would mean schema mismatches
  assert.ok(!existsSync(join(engine.out, "embedding_rejects.txt")));
  const scores = readFileSync(join(engine.out, "scores_chunks_embeddings.csv"), "utf-8")
    .trim().split("\n");
  assert.ok(scores.length > 1, "engine produced no embedding scores");
});

test("perplexity export is ingested by the engine with zero rejections", () => {
  const perp = join(engine.dir, "external_perplexities.csv");
  const code = adapterMain([
    "export-perplexities",
    "--chunks", join(engine.out, "chunks_embedding.jsonl"),
    "--periods", join(engine.out, "period_assignments.csv"),
    "--out", perp,
  ]);
  assert.equal(code, 0);
  const rows = readFileSync(perp, "utf-8").trim().split("\n");
  assert.ok(rows.length > 1, "no perplexity rows exported");

  // 1968-bucket rows must echo the reference past/future ranges
  const header = rows[0].split(",");
  const idx = (name: string) => header.indexOf(name);
  const bucketRows = rows.slice(1)
    .map((line) => line.split(","))
    .filter((cells) => {
      const year = Number(cells[idx("chunk_id")].slice(1, 5));
      return year >= 1968 && year <= 1971;
    });
  assert.ok(bucketRows.length > 0, "no chunks in the 1968 bucket");
  for (const cells of bucketRows) {
    assert.equal(cells[idx("past_start")], "1952");
    assert.equal(cells[idx("past_end")], "1963");
    assert.equal(cells[idx("future_start")], "1976");
    assert.equal(cells[idx("future_end")], "1987");
  }

  python([
    "perplexity", "-c", engine.cfgPath,
    "--set", "method=perplexity",
    "--set", `perplexity.external_path=${perp}`,
  ]);
  assert.ok(!existsSync(join(engine.out, "perplexity_rejects.txt")));
  const scores = readFileSync(join(engine.out, "scores_chunks_perplexity.csv"), "utf-8")
    .trim().split("\n");
  assert.ok(scores.length > 1, "engine produced no perplexity scores");
});
