"""Command line interface.

Subcommands cover the whole workflow: corpus statistics, dataset
generation, one-off analysis of a file or snippet, configured benchmark
runs, standalone evaluation of stored predictions, and report formatting.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import compute_stats, detect_language, load_corpus
from .engine import analyze_source, load_rules
from .errors import GdprKitError
from .harness import (
    RunConfig,
    emit_report,
    evaluate_task1,
    evaluate_task2,
    load_predictions,
    report_from_dict,
    run,
    RunReport,
)
from .taskgen import build_task1, build_task2, dump_entries, load_task1, load_task2


def _cmd_stats(args) -> int:
    corpus = load_corpus(args.corpus)
    stats = compute_stats(corpus)
    print(json.dumps(stats.to_dict(), indent=2))
    return 0


def _cmd_gen_task1(args) -> int:
    corpus = load_corpus(args.corpus)
    entries = build_task1(corpus)
    dump_entries(entries, args.output)
    print(f"wrote {len(entries)} entries to {args.output}")
    return 0


def _cmd_gen_task2(args) -> int:
    corpus = load_corpus(args.corpus)
    entries = build_task2(corpus)
    dump_entries(entries, args.output)
    print(f"wrote {len(entries)} entries to {args.output}")
    return 0


def _cmd_analyze(args) -> int:
    target = Path(args.target)
    if target.exists() and target.is_file():
        source = target.read_text(encoding="utf-8")
        language = args.language or detect_language(str(target))
        path = str(target)
    else:
        source = args.target
        language = args.language or "java"
        path = "<snippet>"
    catalog = load_rules(args.rules) if args.rules else None
    result = analyze_source(source, language, path=path, catalog=catalog)
    if args.json:
        print(json.dumps(result.to_dict(), indent=2))
        return 0
    if not result.findings:
        print("no findings")
        return 0
    print(f"articles (most suspect first): {', '.join(str(a) for a in result.ranking.articles)}")
    ordered = sorted(result.findings, key=lambda f: (-f.confidence, f.article, f.rule_id))
    for finding in ordered:
        spans = ", ".join(
            f"{s.start_line}" if s.start_line == s.end_line else f"{s.start_line}-{s.end_line}"
            for s in finding.spans
        )
        where = f" [lines {spans}]" if spans else ""
        print(
            f"  article {finding.article}  {finding.rule_id}  "
            f"confidence {finding.confidence:.2f}{where}  {finding.explanation}"
        )
    return 0


def _cmd_run(args) -> int:
    if args.config:
        config = RunConfig.from_file(args.config)
        if args.task is not None:
            config.task = args.task
        if args.method:
            config.method = args.method
        if args.dataset:
            config.dataset_path = args.dataset
        if args.corpus:
            config.corpus_path = args.corpus
        if args.output_dir:
            config.output_dir = args.output_dir
        config.__post_init__()
    else:
        if args.task is None or not args.method or not args.dataset:
            raise GdprKitError("run needs --config or all of --task, --method, --dataset")
        config = RunConfig(
            task=args.task,
            method=args.method,
            dataset_path=args.dataset,
            corpus_path=args.corpus,
            output_dir=args.output_dir or "runs/latest",
        )
    result = run(config)
    counts = result.manifest["counts"]
    print(
        f"task {config.task} / {config.method}: "
        f"{counts['scored']} scored, {counts['errored']} errored, "
        f"{counts['skipped']} skipped -> {result.output_dir}"
    )
    print(emit_report(result.report, "markdown"))
    return 0


def _cmd_evaluate(args) -> int:
    records = load_predictions(args.predictions)
    if args.task == 1:
        entries = load_task1(args.dataset)
        ranking = evaluate_task1(entries, records)
        report = RunReport(
            task=1, method=args.method, universe_source="ground_truth",
            ranking=ranking, labels=None,
        )
    else:
        entries2 = load_task2(args.dataset)
        labels = evaluate_task2(entries2, records)
        report = RunReport(
            task=2, method=args.method, universe_source="ground_truth",
            ranking=None, labels=labels,
        )
    print(emit_report(report, args.format))
    return 0


def _cmd_report(args) -> int:
    report = report_from_dict(json.loads(Path(args.input).read_text(encoding="utf-8")))
    print(emit_report(report, args.format))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gdprkit",
        description="Source-level GDPR violation analysis and benchmark tooling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="summarize a violation corpus")
    p.add_argument("corpus")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("gen-task1", help="build the localization dataset")
    p.add_argument("corpus")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_gen_task1)

    p = sub.add_parser("gen-task2", help="build the snippet classification dataset")
    p.add_argument("corpus")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_gen_task2)

    p = sub.add_parser("analyze", help="analyze a source file or inline snippet")
    p.add_argument("target", help="path to a source file, or snippet text")
    p.add_argument("--language", help="language tag override (e.g. java, js)")
    p.add_argument("--rules", help="alternative rule catalog JSON")
    p.add_argument("--json", action="store_true", help="emit full JSON result")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("run", help="run one method over one task dataset")
    p.add_argument("--task", type=int, choices=(1, 2))
    p.add_argument("--method", choices=("formal", "zero_shot", "rag", "react"))
    p.add_argument("--config", help="run configuration JSON file")
    p.add_argument("--dataset", help="dataset path (overrides config)")
    p.add_argument("--corpus", help="corpus path (overrides config)")
    p.add_argument("--output-dir", help="output directory (overrides config)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("evaluate", help="evaluate stored predictions against a dataset")
    p.add_argument("--task", type=int, choices=(1, 2), required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--method", default="unknown", help="method name for the report")
    p.add_argument("--format", choices=("json", "markdown", "csv"), default="json")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="reformat a stored report.json")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("json", "markdown", "csv"), default="markdown")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GdprKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
