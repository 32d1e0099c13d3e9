/** One chunk row from the engine's chunks_embedding.jsonl export. */
export interface ChunkRow {
  chunk_id: string;
  doc_id: string;
  seq: number;
  year: number;
  token_count: number;
  text: string;
}

/** One row of the engine's period_assignments.csv export. */
export interface PeriodRow {
  chunk_id: string;
  year: number;
  bucket_start: number;
  bucket_end: number;
  past_start: number;
  past_end: number;
  own_start: number;
  own_end: number;
  future_start: number;
  future_end: number;
}

export interface YearRange {
  start: number;
  end: number;
}
