"""
Command-line interface.

Commands:
    segment   print a document's segments
    extract   run the pipeline for one keyword on one document
    evaluate  run a task file and write accuracy reports
    cache     show or clear the LLM response cache

Exit codes: 0 ok, 2 input error, 3 extraction failure, 4 transport failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.config import Config, load_config_file, resolve_config
from src.evaluation import AIE, EvalReport, compare_all, parse_levels, run_benchmark, write_reports
from src.exceptions import BackendError, DocumentNotFound, MalformedInput
from src.extraction import format_plain
from src.llm_backend import clear_cache, read_cache
from src.pipeline import (
    PipelineResult,
    build_backend,
    build_baseline_backend,
    build_embedder,
    load_templates,
    run_pipeline,
)
from src.segmentation import SegmenterConfig, segment_document
from src.tasks import DocumentStore, load_document, load_tasks

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_EXTRACTION = 3
EXIT_TRANSPORT = 4

# argparse dest -> PipelineConfig field
FLAG_FIELDS = {
    "format": "format",
    "max_tokens": "max_tokens_per_segment",
    "top_n": "top_n",
    "strategy": "strategy",
    "refine_order": "refine_order",
    "variant": "variant",
    "mode": "mode",
    "shots": "shot_count",
    "backend": "backend",
    "fixture": "fixture_path",
    "baseline_fixture": "baseline_fixture_path",
    "record": "record_path",
    "cache": "cache_path",
    "templates": "template_dir",
    "embedder": "embedder",
    "parallelism": "parallelism",
    "naive_tokens": "naive_context_tokens",
}
PATH_FLAGS = ("fixture", "baseline_fixture", "record", "cache", "templates")


def _error(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)


def cli_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Config settings given on the command line; unset flags are None."""
    overrides = {}
    for dest, key in FLAG_FIELDS.items():
        value = getattr(args, dest, None)
        if value is not None and dest in PATH_FLAGS:
            value = str(Path(value).resolve())
        overrides[key] = value
    return overrides


def file_settings(args: argparse.Namespace) -> Dict[str, Any]:
    path = getattr(args, "config", None) or Config.CONFIG_PATH
    return load_config_file(path) if path else {}


def cmd_segment(args: argparse.Namespace) -> int:
    try:
        config = resolve_config(file_settings(args), None, cli_overrides(args))
        document = load_document(args.doc)
        segments = segment_document(document, SegmenterConfig(config.max_tokens_per_segment, config.format))
    except DocumentNotFound as e:
        _error(f"document not found: {e.doc_ref}")
        return EXIT_INPUT
    except ValueError as e:
        _error(f"{args.doc}: {e}")
        return EXIT_INPUT

    if args.json:
        print(json.dumps([
            {
                "index": s.position,
                "token_count": s.token_count,
                "source_indices": list(s.source_indices),
                "text": s.text,
            }
            for s in segments
        ], indent=2))
        return EXIT_OK

    for s in segments:
        sources = ",".join(str(i) for i in s.source_indices)
        print(f"--- segment {s.position} | tokens={s.token_count} | sources={sources}")
        print(s.text)
    return EXIT_OK


def _extract_payload(result: PipelineResult) -> Dict[str, Any]:
    value = None
    if result.value is not None:
        value = {
            "magnitude": result.value.magnitude,
            "scale_applied": result.value.scale_applied.value,
            "is_percent": result.value.is_percent,
        }
    return {
        "completed_keyword": result.completed_keyword,
        "retrieved": [
            {"index": r.segment.position, "score": r.score, "source_indices": list(r.segment.source_indices)}
            for r in result.retrieved
        ],
        "calls": result.trace.purposes() + ["Extract"],
        "summary": result.trace.final_summary,
        "raw_answer": result.raw_answer,
        "value": value,
    }


def cmd_extract(args: argparse.Namespace) -> int:
    try:
        config = resolve_config(file_settings(args), None, cli_overrides(args))
        document = load_document(args.doc)
        backend = build_backend(config)
        templates = load_templates(config)
        embedder = build_embedder(config)
    except DocumentNotFound as e:
        _error(f"document not found: {e.doc_ref}")
        return EXIT_INPUT
    except ValueError as e:
        _error(str(e))
        return EXIT_INPUT

    try:
        result = run_pipeline(document, args.keyword, config, backend, templates, embedder)
    except BackendError as e:
        _error(f"backend failure: {type(e).__name__}: {e.describe()}")
        return EXIT_TRANSPORT
    except ValueError as e:
        _error(f"extraction failed: {type(e).__name__}: {e}")
        return EXIT_EXTRACTION

    payload = _extract_payload(result)
    if args.json:
        print(json.dumps(payload, indent=2))
        return EXIT_OK

    print(f"Completed keyword: {payload['completed_keyword']}")
    print("Retrieved segments: " + ", ".join(f"#{r['index']} ({r['score']:.4f})" for r in payload["retrieved"]))
    print(f"LLM calls: {', '.join(payload['calls'])}")
    print(f"Summary: {payload['summary']}")
    print(f"Raw answer: {payload['raw_answer']}")
    suffix = "%" if result.value.is_percent else ""
    print(f"Value: {format_plain(result.value.magnitude)}{suffix}")
    return EXIT_OK


def _document_store(task_file: Path, docs: Optional[str]) -> DocumentStore:
    if docs:
        return DocumentStore.from_directory(docs, base_dir=task_file.parent)
    return DocumentStore(base_dir=task_file.parent)


def _report_summary(report: EvalReport) -> Dict[str, Any]:
    return {"pipeline": report.name, "average_accuracy": round(report.average_accuracy, 6),
            "task_count": report.task_count, "failures": report.failures}


def cmd_evaluate(args: argparse.Namespace) -> int:
    task_file = Path(args.tasks)
    try:
        file_values = file_settings(args)
        overrides = cli_overrides(args)
        config = resolve_config(file_values, None, overrides)
        levels = parse_levels(args.levels)
        tasks = load_tasks(task_file)
        store = _document_store(task_file, args.docs)
        if args.compare:
            compare_file = Path(args.compare)
            compare_tasks = load_tasks(compare_file)
            compare_store = _document_store(compare_file, args.docs)
        backend = build_backend(config)
        reports = [run_benchmark(tasks, store, levels, backend, file_values, overrides)]
        if args.baseline == "naive":
            baseline_backend = build_baseline_backend(config)
            reports.append(run_benchmark(tasks, store, levels, baseline_backend, file_values, overrides, baseline=True))
        if args.compare:
            label = f"{AIE}_{compare_file.stem}"
            reports.append(run_benchmark(compare_tasks, compare_store, levels, backend, file_values, overrides,
                                         label=label))
        paths = write_reports(args.out, reports)
    except DocumentNotFound as e:
        _error(f"document not found: {e.doc_ref}")
        return EXIT_INPUT
    except MalformedInput as e:
        _error(f"malformed task file: {e}")
        return EXIT_INPUT
    except ValueError as e:
        _error(str(e))
        return EXIT_INPUT

    if args.json:
        payload = {"reports": [_report_summary(report) for report in reports], "comparisons": compare_all(reports)}
        print(json.dumps(payload, sort_keys=True))
        return EXIT_OK
    for report in reports:
        print(f"{report.name}: average accuracy {report.average_accuracy:.4f} over {report.task_count} tasks")
    for comparison in compare_all(reports):
        average = comparison["average"]
        shown = "n/a" if average is None else f"{average:.4f}"
        print(f"RPD {' vs '.join(comparison['pipelines'])}: average {shown}")
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_cache(args: argparse.Namespace) -> int:
    cache_path = args.cache
    if not cache_path:
        try:
            cache_path = resolve_config(file_settings(args)).cache_path
        except ValueError as e:
            _error(str(e))
            return EXIT_INPUT
    if not cache_path:
        _error("no cache configured; pass --cache or set cache_path in the config file")
        return EXIT_INPUT

    path = Path(cache_path)
    try:
        if args.action == "clear":
            removed = clear_cache(path)
            stats = {"path": str(path), "cleared": removed}
        else:
            entries = read_cache(path) if path.exists() else {}
            size = path.stat().st_size if path.exists() else 0
            stats = {"path": str(path), "entries": len(entries), "bytes": size}
    except MalformedInput as e:
        _error(str(e))
        return EXIT_INPUT

    if args.json:
        print(json.dumps(stats, sort_keys=True))
    else:
        print(" ".join(f"{key}={value}" for key, value in stats.items()))
    return EXIT_OK


def _pipeline_flags() -> argparse.ArgumentParser:
    flags = argparse.ArgumentParser(add_help=False)
    flags.add_argument("--config", help="JSON config file (default: $HLDX_CONFIG)")
    flags.add_argument("--format", type=str.upper, choices=["PLAIN", "CSV", "XML", "HTML"],
                       help="Table serialization format")
    flags.add_argument("--max-tokens", dest="max_tokens", type=int, help="Token budget per segment")
    flags.add_argument("--json", action="store_true", help="Machine-readable output")
    flags.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    return flags


def _llm_flags() -> argparse.ArgumentParser:
    flags = argparse.ArgumentParser(add_help=False)
    flags.add_argument("--top-n", dest="top_n", type=int, help="Segments to retrieve")
    flags.add_argument("--strategy", choices=["refine", "map-reduce"], help="Summarization strategy")
    flags.add_argument("--refine-order", dest="refine_order", choices=["document", "similarity"])
    flags.add_argument("--variant", help="Prompt variant (TD_O, TD_R, TD_S, TD_RS, TD_SP, TD_RSP)")
    flags.add_argument("--mode", help="Keyword completion mode (K, K_C, K_T, K_T_C)")
    flags.add_argument("--shots", type=int, help="Number of configured examples (0-3)")
    flags.add_argument("--backend", choices=["scripted", "replay", "http"])
    flags.add_argument("--fixture", help="Fixture / replay file for scripted and replay backends")
    flags.add_argument("--record", help="Record the session to this replay file")
    flags.add_argument("--cache", help="Persistent response cache file")
    flags.add_argument("--templates", help="Template pack directory")
    flags.add_argument("--embedder", choices=["tf", "http"])
    flags.add_argument("--parallelism", type=int, help="Concurrent LLM calls")
    return flags


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="run_extraction",
        description="Value extraction from hybrid long documents",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = _pipeline_flags()
    llm = _llm_flags()

    segment = sub.add_parser("segment", parents=[common], help="Print a document's segments")
    segment.add_argument("doc", help="Document file (.json or .html)")
    segment.set_defaults(func=cmd_segment)

    extract = sub.add_parser("extract", parents=[common, llm], help="Extract one keyword's value")
    extract.add_argument("doc", help="Document file (.json or .html)")
    extract.add_argument("keyword", help='Bare keyword, e.g. "Revenue"')
    extract.set_defaults(func=cmd_extract)

    evaluate = sub.add_parser("evaluate", parents=[common, llm], help="Run a task file and write reports")
    evaluate.add_argument("tasks", help="JSONL task file")
    evaluate.add_argument("--docs", help="Directory of documents referenced by id")
    evaluate.add_argument("--levels", help='RETA levels: comma list of fractions, "default" or "fine"')
    evaluate.add_argument("--baseline", choices=["naive"], help="Also run the Naive truncation baseline")
    evaluate.add_argument("--baseline-fixture", dest="baseline_fixture", help="Replay file for the baseline")
    evaluate.add_argument("--naive-tokens", dest="naive_tokens", type=int, help="Naive baseline context budget")
    evaluate.add_argument("--compare", help="Second task file; its AIE run is compared against the first by RPD")
    evaluate.add_argument("--out", default="reports", help="Report directory (default: reports)")
    evaluate.set_defaults(func=cmd_evaluate)

    cache = sub.add_parser("cache", help="Inspect or clear the response cache")
    cache.add_argument("action", choices=["stats", "clear"])
    cache.add_argument("--cache", help="Cache file (default: cache_path from the config file)")
    cache.add_argument("--config", help="JSON config file (default: $HLDX_CONFIG)")
    cache.add_argument("--json", action="store_true")
    cache.add_argument("--verbose", "-v", action="store_true")
    cache.set_defaults(func=cmd_cache)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    logger.debug(f"Running command {args.command}")
    return args.func(args)
