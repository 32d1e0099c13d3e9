"""Command-line entry points for the scoring pipeline.

One declarative JSON config describes a run; subcommands execute single
stages, ``run`` executes the whole chain for the configured method.
Individual keys can be overridden with ``--set section.key=value``.

Exit codes: 0 success, 1 config error, 2 data error, 3 compute error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .pipeline import (
    ConfigError,
    PipelineError,
    Run,
    apply_set_overrides,
    load_config,
    validate_config,
)

STAGES = {
    "ingest": lambda run, force: run.stage_ingest(force=force),
    "chunk": lambda run, force: run.stage_chunk(force=force),
    "topics-train": lambda run, force: run.stage_topics_train(force=force),
    "topics-infer": lambda run, force: run.stage_topics_infer(force=force),
    "score": lambda run, force: run.stage_score(force=force),
    "perplexity": lambda run, force: run.stage_perplexity(force=force),
    "regress": lambda run, force: run.stage_regress(force=force),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="precocity",
        description="Score how far each document runs ahead of corpus-level change.",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("ingest", "validate and normalize the corpus"),
        ("chunk", "tokenize and chunk all documents"),
        ("topics-train", "train the topic model on a balanced subsample"),
        ("topics-infer", "infer topic distributions for every chunk"),
        ("score", "compute novelty/transience/precocity for the configured method"),
        ("perplexity", "train period language models and score the perplexity path"),
        ("regress", "fit precocity regressions against social covariates"),
        ("synth", "generate a synthetic corpus with planted ground truth"),
        ("report", "summarize artifacts and evaluate against ground truth"),
        ("run", "execute the full pipeline for the configured method"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", "-c", required=True, help="JSON config file")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key, e.g. --set topics.k=50",
        )
        p.add_argument("--output-dir", help="override output_dir")
        p.add_argument("--seed", type=int, help="override seed")
        p.add_argument("--threads", type=int, help="cap stage parallelism")
        p.add_argument("--force", action="store_true", help="rerun even if up to date")
    return parser


def _config_from_args(args) -> dict:
    cfg = load_config(args.config)
    cfg = apply_set_overrides(cfg, args.overrides)
    if args.output_dir:
        cfg["output_dir"] = args.output_dir
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.threads is not None:
        cfg["threads"] = args.threads
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _config_from_args(args)
        run = Run(cfg)
        if args.command == "synth":
            corpus_path, truth_path = run.stage_synth(force=args.force)
            print(f"corpus: {corpus_path}")
            print(f"ground truth: {truth_path}")
        elif args.command == "report":
            summary = run.stage_report(force=args.force)
            print(json.dumps(summary, indent=1, sort_keys=True, default=str))
        elif args.command == "run":
            summary = run.run(force=args.force)
            print(json.dumps(summary, indent=1, sort_keys=True, default=str))
        else:
            validate_config(
                cfg,
                require_corpus=args.command == "ingest",
                require_method_inputs=args.command in ("score", "perplexity"),
            )
            STAGES[args.command](run, args.force)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return exc.exit_code
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
