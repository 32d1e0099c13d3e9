import { writeFileSync } from "node:fs";

import type { Embedder } from "./embedder.js";
import { LexicalLm } from "./lm.js";
import { writeCsv } from "./io.js";
import type { ChunkRow, PeriodRow, YearRange } from "./types.js";

export interface ExportReport {
  rows: number;
  warnings: string[];
}

/**
 * One vector per chunk as chunk_id,v0..vN CSV plus a JSON sidecar
 * recording the model tag and dimension. Chunks longer than the
 * model's context are truncated with a warning.
 */
export function exportEmbeddings(
  chunks: ChunkRow[],
  embedder: Embedder,
  outPath: string,
): ExportReport {
  const warnings: string[] = [];
  const header = ["chunk_id", ...Array.from({ length: embedder.dim }, (_, i) => `v${i}`)];
  const rows: (string | number)[][] = [];
  for (const chunk of chunks) {
    if (chunk.token_count > embedder.maxTokens) {
      warnings.push(
        `${chunk.chunk_id}: ${chunk.token_count} tokens exceed model context ` +
          `${embedder.maxTokens}; truncated`,
      );
    }
    const vector = embedder.embed(chunk.text);
    rows.push([chunk.chunk_id, ...Array.from(vector, (x) => String(x))]);
  }
  writeCsv(outPath, header, rows);
  writeFileSync(
    outPath + ".meta.json",
    JSON.stringify({ model_tag: embedder.modelTag, dim: embedder.dim, rows: rows.length }, null, 1),
    "utf-8",
  );
  return { rows: rows.length, warnings };
}

function rangeKey(range: YearRange): string {
  return `${range.start}-${range.end}`;
}

/**
 * Past/future pseudo-perplexities per chunk under period language
 * models. Period ranges come from the engine's assignment file and are
 * echoed into the output; buckets whose past or future period has no
 * training chunks are skipped and reported.
 */
export function exportPerplexities(
  chunks: ChunkRow[],
  periods: PeriodRow[],
  outPath: string,
  options: { order?: number; k?: number } = {},
): ExportReport {
  const order = options.order ?? 2;
  const k = options.k ?? 0.01;
  const byId = new Map(chunks.map((c) => [c.chunk_id, c]));
  const assignments = periods.filter((p) => byId.has(p.chunk_id));

  const trainingTexts = (range: YearRange): string[] =>
    chunks.filter((c) => c.year >= range.start && c.year <= range.end).map((c) => c.text);

  const models = new Map<string, LexicalLm | null>();
  const model = (range: YearRange): LexicalLm | null => {
    const key = rangeKey(range);
    if (!models.has(key)) {
      const texts = trainingTexts(range);
      models.set(key, texts.length ? new LexicalLm(order, k).train(texts) : null);
    }
    return models.get(key) ?? null;
  };

  const warnings: string[] = [];
  const rows: (string | number)[][] = [];
  const skippedBuckets = new Set<string>();
  for (const pa of assignments) {
    const past = { start: pa.past_start, end: pa.past_end };
    const future = { start: pa.future_start, end: pa.future_end };
    const pastModel = model(past);
    const futureModel = model(future);
    if (!pastModel || !futureModel) {
      const bucket = `${pa.bucket_start}-${pa.bucket_end}`;
      if (!skippedBuckets.has(bucket)) {
        skippedBuckets.add(bucket);
        warnings.push(
          `bucket ${bucket}: missing ${!pastModel ? "past" : "future"} period model; rows skipped`,
        );
      }
      continue;
    }
    const chunk = byId.get(pa.chunk_id)!;
    rows.push([
      chunk.chunk_id,
      String(pastModel.chunkPerplexity(chunk.text)),
      String(futureModel.chunkPerplexity(chunk.text)),
      pa.past_start,
      pa.past_end,
      pa.future_start,
      pa.future_end,
    ]);
  }
  writeCsv(
    outPath,
    ["chunk_id", "perplexity_past", "perplexity_future",
     "past_start", "past_end", "future_start", "future_end"],
    rows,
  );
  writeFileSync(
    outPath + ".meta.json",
    JSON.stringify(
      {
        model_tag: `lexical-lm-order${order}`,
        definition:
          "pseudo-perplexity: exp(-mean token log-prob) per sentence, " +
          "averaged over a chunk's sentences",
        rows: rows.length,
      },
      null,
      1,
    ),
    "utf-8",
  );
  return { rows: rows.length, warnings };
}
