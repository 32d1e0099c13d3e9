const TOKEN_RE = /[\p{L}\p{N}]+(?:['’][\p{L}\p{N}]+)*/gu;

/** Lowercased word tokens, punctuation as separators (engine-compatible). */
export function tokenize(text: string): string[] {
  return (text.match(TOKEN_RE) ?? []).map((t) => t.toLowerCase());
}

/**
 * Split on terminal punctuation followed by whitespace and an
 * uppercase letter, digit, or opening quote. Cruder than the engine's
 * splitter (no abbreviation list) but only used to delimit the
 * sentences whose perplexities get averaged.
 */
export function splitSentences(text: string): string[] {
  const parts = text.split(/(?<=[.!?]["'’”)\]]*)\s+(?=[A-Z0-9"'‘“([])/u);
  return parts.map((p) => p.trim()).filter((p) => p.length > 0);
}
