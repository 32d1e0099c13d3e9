import { splitSentences, tokenize } from "./tokenize.js";

/**
 * Add-k bigram model over lowercased word tokens. Stands in for a
 * masked-LM scorer: sentenceLogProb plays the role of a pseudo
 * log-likelihood, so the exported quantity is a pseudo-perplexity
 * (exp of negative mean token log-probability per sentence, averaged
 * over a chunk's sentences). The definition is recorded in the export
 * sidecar so downstream users know what they ingested.
 */
export class LexicalLm {
  private counts = new Map<string, Map<string, number>>();
  private totals = new Map<string, number>();
  private vocab = new Set<string>();
  readonly order: number;
  readonly k: number;

  constructor(order = 2, k = 0.01) {
    if (order < 1 || order > 2) throw new Error("order must be 1 or 2");
    if (k <= 0) throw new Error("k must be > 0");
    this.order = order;
    this.k = k;
  }

  private context(prev: string | null): string {
    return this.order === 1 ? "" : prev ?? "<s>";
  }

  train(texts: string[]): this {
    for (const text of texts) {
      for (const sentence of splitSentences(text)) {
        const tokens = tokenize(sentence);
        let prev: string | null = null;
        for (const tok of tokens) {
          this.vocab.add(tok);
          const ctx = this.context(prev);
          let row = this.counts.get(ctx);
          if (!row) {
            row = new Map();
            this.counts.set(ctx, row);
          }
          row.set(tok, (row.get(tok) ?? 0) + 1);
          this.totals.set(ctx, (this.totals.get(ctx) ?? 0) + 1);
          prev = tok;
        }
      }
    }
    if (this.vocab.size === 0) throw new Error("no training tokens");
    return this;
  }

  logProb(token: string, prev: string | null): number {
    const ctx = this.context(prev);
    const c = this.counts.get(ctx)?.get(token) ?? 0;
    const total = this.totals.get(ctx) ?? 0;
    // +1 reserves smoothed mass for unseen eval tokens
    const v = this.vocab.size + 1;
    return Math.log((c + this.k) / (total + this.k * v));
  }

  sentencePerplexity(sentence: string): number | null {
    const tokens = tokenize(sentence);
    if (tokens.length === 0) return null;
    let lp = 0;
    let prev: string | null = null;
    for (const tok of tokens) {
      lp += this.logProb(tok, prev);
      prev = tok;
    }
    return Math.exp(-lp / tokens.length);
  }

  /** Mean of per-sentence pseudo-perplexities over the chunk text. */
  chunkPerplexity(text: string): number {
    const values: number[] = [];
    for (const sentence of splitSentences(text)) {
      const pp = this.sentencePerplexity(sentence);
      if (pp !== null) values.push(pp);
    }
    if (values.length === 0) {
      throw new Error("chunk has no scoreable sentences");
    }
    return values.reduce((a, b) => a + b, 0) / values.length;
  }
}
