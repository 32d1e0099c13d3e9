#!/usr/bin/env node
import { parseArgs } from "node:util";

import { HashEmbedder } from "./embedder.js";
import { exportEmbeddings, exportPerplexities } from "./exports.js";
import { readChunks, readPeriods } from "./io.js";

const USAGE = `usage:
  precocity-adapter export-embeddings --chunks chunks_embedding.jsonl --out vectors.csv [--dim 64] [--max-tokens 512]
  precocity-adapter export-perplexities --chunks chunks_embedding.jsonl --periods period_assignments.csv --out perplexities.csv [--order 2] [--k 0.01]
`;

export function main(argv: string[]): number {
  const command = argv[0];
  const rest = argv.slice(1);
  try {
    if (command === "export-embeddings") {
      const { values } = parseArgs({
        args: rest,
        options: {
          chunks: { type: "string" },
          out: { type: "string" },
          dim: { type: "string", default: "64" },
          "max-tokens": { type: "string", default: "512" },
        },
      });
      if (!values.chunks || !values.out) throw new Error(USAGE);
      const chunks = readChunks(values.chunks);
      const embedder = new HashEmbedder(Number(values.dim), Number(values["max-tokens"]));
      const report = exportEmbeddings(chunks, embedder, values.out);
      for (const w of report.warnings) console.warn(`warning: ${w}`);
      console.log(`wrote ${report.rows} vectors (${embedder.modelTag}) to ${values.out}`);
      return 0;
    }
    if (command === "export-perplexities") {
      const { values } = parseArgs({
        args: rest,
        options: {
          chunks: { type: "string" },
          periods: { type: "string" },
          out: { type: "string" },
          order: { type: "string", default: "2" },
          k: { type: "string", default: "0.01" },
        },
      });
      if (!values.chunks || !values.periods || !values.out) throw new Error(USAGE);
      const chunks = readChunks(values.chunks);
      const periods = readPeriods(values.periods);
      const report = exportPerplexities(chunks, periods, values.out, {
        order: Number(values.order),
        k: Number(values.k),
      });
      for (const w of report.warnings) console.warn(`warning: ${w}`);
      console.log(`wrote ${report.rows} perplexity rows to ${values.out}`);
      return 0;
    }
    console.error(USAGE);
    return 1;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

if (import.meta.url === `file://${process.argv[1]}`) {
  process.exit(main(process.argv.slice(2)));
}
