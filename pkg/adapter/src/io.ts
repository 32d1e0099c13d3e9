import { readFileSync, writeFileSync } from "node:fs";

import type { ChunkRow, PeriodRow } from "./types.js";

/** Read the engine's chunk JSONL export (one chunk object per line). */
export function readChunks(path: string): ChunkRow[] {
  const chunks: ChunkRow[] = [];
  const lines = readFileSync(path, "utf-8").split("\n");
  for (const [i, line] of lines.entries()) {
    const trimmed = line.trim();
    if (!trimmed) continue;
    const rec = JSON.parse(trimmed);
    for (const field of ["chunk_id", "doc_id", "seq", "year", "text"]) {
      if (!(field in rec)) {
        throw new Error(`${path} line ${i + 1}: missing field '${field}'`);
      }
    }
    chunks.push(rec as ChunkRow);
  }
  return chunks;
}

/** Parse a simple headered CSV (no quoted fields; engine exports none). */
export function readCsv(path: string): Record<string, string>[] {
  const lines = readFileSync(path, "utf-8").split("\n").filter((l) => l.length > 0);
  if (lines.length === 0) throw new Error(`${path}: empty file`);
  const header = lines[0].split(",");
  return lines.slice(1).map((line) => {
    const cells = line.split(",");
    const row: Record<string, string> = {};
    header.forEach((name, i) => (row[name] = cells[i] ?? ""));
    return row;
  });
}

export function readPeriods(path: string): PeriodRow[] {
  return readCsv(path).map((row) => ({
    chunk_id: row.chunk_id,
    year: Number(row.year),
    bucket_start: Number(row.bucket_start),
    bucket_end: Number(row.bucket_end),
    past_start: Number(row.past_start),
    past_end: Number(row.past_end),
    own_start: Number(row.own_start),
    own_end: Number(row.own_end),
    future_start: Number(row.future_start),
    future_end: Number(row.future_end),
  }));
}

export function writeCsv(path: string, header: string[], rows: (string | number)[][]): void {
  const body = rows.map((r) => r.join(",")).join("\n");
  writeFileSync(path, header.join(",") + "\n" + (body ? body + "\n" : ""), "utf-8");
}
