import assert from "node:assert/strict";
import { test } from "node:test";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { HashEmbedder } from "../src/embedder.js";
import { exportEmbeddings } from "../src/exports.js";
import { readChunks } from "../src/io.js";
import type { ChunkRow } from "../src/types.js";

function chunk(id: string, text: string, tokenCount?: number): ChunkRow {
  return {
    chunk_id: id,
    doc_id: id.split("/")[0],
    seq: 0,
    year: 1960,
    token_count: tokenCount ?? text.split(/\s+/).length,
    text,
  };
}

test("identical text gives identical vectors", () => {
  const embedder = new HashEmbedder(32);
  const a = embedder.embed("The raven flies at night always.");
  const b = embedder.embed("The raven flies at night always.");
  assert.deepEqual(Array.from(a), Array.from(b));
});

test("vectors are unit norm and fixed dimension", () => {
  const embedder = new HashEmbedder(48);
  for (const text of ["One short text.", "A different and rather longer text about other things."]) {
    const v = embedder.embed(text);
    assert.equal(v.length, 48);
    const norm = Math.sqrt(Array.from(v).reduce((s, x) => s + x * x, 0));
    assert.ok(Math.abs(norm - 1.0) < 1e-12);
  }
});

test("different texts give different vectors", () => {
  const embedder = new HashEmbedder(64);
  const a = embedder.embed("Entirely about gardens and their seasonal flowers.");
  const b = embedder.embed("Wholly concerned with maritime trade routes instead.");
  assert.notDeepEqual(Array.from(a), Array.from(b));
});

test("empty text still yields a valid nonzero vector", () => {
  const embedder = new HashEmbedder(16);
  const v = embedder.embed("");
  const norm = Math.sqrt(Array.from(v).reduce((s, x) => s + x * x, 0));
  assert.ok(norm > 0);
});

test("export writes one row per chunk with constant dimension", () => {
  const dir = mkdtempSync(join(tmpdir(), "adapter-"));
  const out = join(dir, "vectors.csv");
  const chunks = Array.from({ length: 10 }, (_, i) => chunk(`d${i}/e0000`, `Text number ${i} here.`));
  const report = exportEmbeddings(chunks, new HashEmbedder(8), out);
  assert.equal(report.rows, 10);
  const lines = readFileSync(out, "utf-8").trim().split("\n");
  assert.equal(lines.length, 11);
  assert.equal(lines[0], "chunk_id," + Array.from({ length: 8 }, (_, i) => `v${i}`).join(","));
  for (const line of lines.slice(1)) {
    assert.equal(line.split(",").length, 9);
  }
  const meta = JSON.parse(readFileSync(out + ".meta.json", "utf-8"));
  assert.equal(meta.dim, 8);
  assert.equal(meta.rows, 10);
});

test("empty chunk table produces a valid header-only file", () => {
  const dir = mkdtempSync(join(tmpdir(), "adapter-"));
  const out = join(dir, "vectors.csv");
  const report = exportEmbeddings([], new HashEmbedder(4), out);
  assert.equal(report.rows, 0);
  assert.equal(readFileSync(out, "utf-8"), "chunk_id,v0,v1,v2,v3\n");
});

test("overlong chunk is truncated with a warning", () => {
  const dir = mkdtempSync(join(tmpdir(), "adapter-"));
  const out = join(dir, "vectors.csv");
  const words = Array.from({ length: 600 }, (_, i) => `w${i}`).join(" ");
  const report = exportEmbeddings([chunk("d0/e0000", words, 600)], new HashEmbedder(8, 512), out);
  assert.equal(report.rows, 1);
  assert.equal(report.warnings.length, 1);
  assert.match(report.warnings[0], /truncated/);
});

test("chunk JSONL reader round-trips engine-shaped records", () => {
  const dir = mkdtempSync(join(tmpdir(), "adapter-"));
  const path = join(dir, "chunks.jsonl");
  const rec = {
    chunk_id: "doc1/e0000", doc_id: "doc1", seq: 0, year: 1968,
    token_count: 4, text: "Alpha beta gamma delta.",
  };
  writeFileSync(path, JSON.stringify(rec) + "\n", "utf-8");
  const chunks = readChunks(path);
  assert.equal(chunks.length, 1);
  assert.equal(chunks[0].year, 1968);
  assert.equal(chunks[0].text, "Alpha beta gamma delta.");
});

test("chunk JSONL reader rejects missing fields", () => {
  const dir = mkdtempSync(join(tmpdir(), "adapter-"));
  const path = join(dir, "bad.jsonl");
  writeFileSync(path, JSON.stringify({ chunk_id: "x", doc_id: "x", seq: 0 }) + "\n", "utf-8");
  assert.throws(() => readChunks(path), /missing field 'year'/);
});
