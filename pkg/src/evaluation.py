"""
Evaluation metrics and the benchmark harness.

RETA accuracy at several relative-error tolerances, RPD between two methods,
and run_benchmark, which runs the pipeline (or the Naive baseline) over a
task file and aggregates an EvalReport.
"""

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from src.config import resolve_config
from src.exceptions import BackendError, ConfigError, EmptyOutcomes, UndefinedRPD
from src.extraction import fold_text
from src.llm_backend import CachedBackend, CountingBackend, LLMBackend
from src.pipeline import build_embedder, load_templates, run_naive, run_pipeline
from src.tasks import DocumentStore, ExtractionTask
from src.templates import TemplatePack

logger = logging.getLogger(__name__)

__all__ = [
    "DEFAULT_LEVELS", "FINE_LEVELS", "EvalReport", "ExtractionTask", "TaskOutcome",
    "accuracy", "build_report", "compare_reports", "parse_levels", "relative_error",
    "reta_correct", "rpd", "run_benchmark", "string_match", "write_reports",
]

DEFAULT_LEVELS: Tuple[float, ...] = (0.01, 0.03, 0.05, 0.10)
FINE_LEVELS: Tuple[float, ...] = (0.0, 0.00001, 0.0001, 0.001)
JSON_DECIMALS = 6

AIE = "aie"
NAIVE = "naive"


def reta_correct(pred: float, truth: float, threshold: float) -> bool:
    """
    Relative error tolerance check, boundary inclusive.

    A zero truth only accepts an exact zero prediction.
    """
    if threshold < 0:
        raise ValueError(f"RETA threshold must be >= 0, got {threshold}")
    if pred is None or not math.isfinite(pred):
        return False
    if truth == 0:
        return pred == 0
    return abs(pred - truth) / abs(truth) <= threshold


def relative_error(pred: float, truth: float) -> Optional[float]:
    if pred is None or not math.isfinite(pred) or truth == 0:
        return None
    return abs(pred - truth) / abs(truth)


def accuracy(outcomes: Sequence[bool]) -> float:
    if not outcomes:
        raise EmptyOutcomes("Accuracy needs at least one outcome")
    return sum(1 for ok in outcomes if ok) / len(outcomes)


def rpd(acc_x: float, acc_y: float) -> float:
    """Relative percentage difference: |x - y| over the mean of x and y."""
    if acc_x + acc_y == 0:
        raise UndefinedRPD("RPD is undefined when both accuracies are 0")
    return abs(acc_x - acc_y) / ((acc_x + acc_y) / 2)


def string_match(pred: Optional[str], truth: str) -> bool:
    """Case-insensitive, whitespace-folded equality."""
    if pred is None:
        return False
    return fold_text(pred) == fold_text(truth)


def parse_levels(value: Union[str, Sequence[float], None]) -> Tuple[float, ...]:
    """
    Parse RETA levels: "default", "fine", a comma list ("0,0.001") or numbers.

    Raises:
        ConfigError: If a level is negative, not a number or out of order
    """
    if value is None or value == "default":
        return DEFAULT_LEVELS
    if value == "fine":
        return FINE_LEVELS
    if isinstance(value, str):
        try:
            levels = tuple(float(part) for part in value.split(",") if part.strip())
        except ValueError:
            raise ConfigError(f"Invalid RETA levels {value!r}") from None
    else:
        levels = tuple(float(v) for v in value)

    if not levels:
        raise ConfigError("At least one RETA level is required")
    if any(not math.isfinite(level) or level < 0 for level in levels):
        raise ConfigError(f"RETA levels must be finite and >= 0, got {levels}")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError(f"RETA levels must be strictly increasing, got {levels}")
    return levels


def level_label(level: float) -> str:
    return f"RETA {level * 100:g}%"


@dataclass(frozen=True)
class TaskOutcome:
    """Verdict for one task; correct holds one flag per RETA level."""

    index: int
    doc_ref: str
    keyword: str
    truth: Union[float, str]
    correct: Tuple[bool, ...]
    raw_answer: Optional[str] = None
    predicted: Optional[Union[float, str]] = None
    relative_error: Optional[float] = None
    failure: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "index": self.index,
            "doc": self.doc_ref,
            "keyword": self.keyword,
            "truth": self.truth,
            "raw_answer": self.raw_answer,
            "predicted": self.predicted,
            "relative_error": self.relative_error,
            "correct": list(self.correct),
            "failure": self.failure,
        }


def score_task(
    task: ExtractionTask,
    levels: Sequence[float],
    raw_answer: Optional[str],
    predicted: Optional[Union[float, str]],
    failure: Optional[str] = None,
) -> TaskOutcome:
    """Evaluate one prediction at every level; failures are wrong everywhere."""
    truth = task.ground_truth
    error = None
    if failure is not None or predicted is None:
        correct = tuple(False for _ in levels)
    elif isinstance(truth, str):
        correct = tuple(string_match(str(predicted), truth) for _ in levels)
    else:
        correct = tuple(reta_correct(predicted, truth, level) for level in levels)
        error = relative_error(predicted, truth)
    return TaskOutcome(
        index=task.index,
        doc_ref=task.doc_ref,
        keyword=task.keyword,
        truth=truth,
        correct=correct,
        raw_answer=raw_answer,
        predicted=predicted,
        relative_error=error,
        failure=failure,
    )


@dataclass
class EvalReport:
    pipeline: str
    levels: Tuple[float, ...]
    outcomes: List[TaskOutcome]
    llm_calls: int = 0
    backend_id: str = ""
    # names the run when two runs of one pipeline are compared
    label: Optional[str] = None
    # logged and kept here, never serialized
    wall_time: float = field(default=0.0, compare=False)

    @property
    def name(self) -> str:
        return self.label or self.pipeline

    @property
    def task_count(self) -> int:
        return len(self.outcomes)

    @property
    def failures(self) -> int:
        return sum(1 for o in self.outcomes if o.failure is not None)

    def accuracy_at(self, position: int) -> float:
        return accuracy([o.correct[position] for o in self.outcomes])

    def accuracies(self) -> List[float]:
        return [self.accuracy_at(i) for i in range(len(self.levels))]

    @property
    def average_accuracy(self) -> float:
        """Macro average over levels."""
        values = self.accuracies()
        return sum(values) / len(values)

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "pipeline": self.pipeline,
            "backend": self.backend_id,
            "levels": list(self.levels),
            "accuracy": [
                {"level": level, "accuracy": acc}
                for level, acc in zip(self.levels, self.accuracies())
            ],
            "average_accuracy": self.average_accuracy,
            "task_count": self.task_count,
            "failures": self.failures,
            "llm_calls": self.llm_calls,
            "tasks": [o.to_dict() for o in self.outcomes],
        }
        if self.label:
            data["label"] = self.label
        return data

    def to_json(self) -> str:
        return json.dumps(_round_floats(self.to_dict()), sort_keys=True, indent=2) + "\n"

    def to_frame(self) -> pd.DataFrame:
        index = [level_label(level) for level in self.levels] + ["Average"]
        return pd.DataFrame({self.name.upper(): self.accuracies() + [self.average_accuracy]}, index=index)

    def to_text(self) -> str:
        return report_table([self])


def _round_floats(value: Any) -> Any:
    if isinstance(value, float):
        return round(value, JSON_DECIMALS)
    if isinstance(value, dict):
        return {k: _round_floats(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_round_floats(v) for v in value]
    return value


def build_report(
    pipeline: str,
    levels: Sequence[float],
    outcomes: Sequence[TaskOutcome],
    llm_calls: int = 0,
    backend_id: str = "",
    wall_time: float = 0.0,
    label: Optional[str] = None,
) -> EvalReport:
    """
    Assemble a report from outcomes, ordered by task index.

    Raises:
        EmptyOutcomes: If there are no outcomes
    """
    if not outcomes:
        raise EmptyOutcomes("Cannot build a report from zero tasks")
    ordered = sorted(outcomes, key=lambda o: o.index)
    return EvalReport(
        pipeline=pipeline,
        levels=tuple(levels),
        outcomes=ordered,
        llm_calls=llm_calls,
        backend_id=backend_id,
        label=label,
        wall_time=wall_time,
    )


def compare_reports(a: EvalReport, b: EvalReport) -> Dict[str, Any]:
    """
    RPD between two reports per level and on the average accuracy.

    Levels where both accuracies are 0 get None.
    """
    if tuple(a.levels) != tuple(b.levels):
        raise ConfigError("Reports must share RETA levels to be compared")

    def safe_rpd(x: float, y: float) -> Optional[float]:
        try:
            return rpd(x, y)
        except UndefinedRPD:
            return None

    return {
        "pipelines": [a.name, b.name],
        "levels": [
            {"level": level, "rpd": safe_rpd(x, y)}
            for level, x, y in zip(a.levels, a.accuracies(), b.accuracies())
        ],
        "average": safe_rpd(a.average_accuracy, b.average_accuracy),
    }


def compare_all(reports: Sequence[EvalReport]) -> List[Dict[str, Any]]:
    """RPD of every later report against the first, rounded like report JSON."""
    return [_round_floats(compare_reports(reports[0], other)) for other in reports[1:]]


def report_frame(reports: Sequence[EvalReport]) -> pd.DataFrame:
    """
    Side-by-side accuracy table with an RPD column per report after the first.

    Two reports get a single "RPD" column; more get "RPD <name>" columns.
    """
    frame = pd.concat([report.to_frame() for report in reports], axis=1)
    for other in reports[1:]:
        comparison = compare_reports(reports[0], other)
        values = [entry["rpd"] for entry in comparison["levels"]] + [comparison["average"]]
        column = "RPD" if len(reports) == 2 else f"RPD {other.name.upper()}"
        frame[column] = pd.Series(values, index=frame.index, dtype="float64")
    return frame


def report_table(reports: Sequence[EvalReport]) -> str:
    frame = report_frame(reports)
    lines = [frame.to_string(float_format=lambda v: f"{v:.4f}", na_rep="n/a")]
    for report in reports:
        lines.append(
            f"{report.name}: {report.task_count} tasks, {report.failures} failures, "
            f"{report.llm_calls} LLM calls"
        )
    return "\n".join(lines) + "\n"


def write_reports(out_dir: Union[str, Path], reports: Sequence[EvalReport]) -> List[Path]:
    """
    Write <name>_report.json for each report and one report.txt table.

    With two or more reports, comparisons.json holds the RPD of each later
    report against the first.

    Returns:
        Paths written

    Raises:
        ConfigError: If two reports share a name
    """
    names = [report.name for report in reports]
    if len(set(names)) != len(names):
        raise ConfigError(f"Report names must be distinct, got {names}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for report in reports:
        path = out_dir / f"{report.name}_report.json"
        path.write_text(report.to_json(), encoding="utf-8")
        written.append(path)
    table = out_dir / "report.txt"
    table.write_text(report_table(reports), encoding="utf-8")
    written.append(table)
    if len(reports) > 1:
        comparisons = out_dir / "comparisons.json"
        comparisons.write_text(json.dumps(compare_all(reports), sort_keys=True, indent=2) + "\n", encoding="utf-8")
        written.append(comparisons)
    logger.info(f"Wrote {len(written)} report files to {out_dir}")
    return written


def _run_task(
    task: ExtractionTask,
    store: DocumentStore,
    levels: Sequence[float],
    backend: LLMBackend,
    baseline: bool,
    templates: Optional[TemplatePack],
) -> TaskOutcome:
    document = store.resolve(task.doc_ref)
    config = task.config
    numeric = task.is_numeric
    raw = None
    try:
        if baseline:
            result = run_naive(document, task.keyword, config, backend, templates or load_templates(config), numeric)
        else:
            result = run_pipeline(
                document, task.keyword, config, backend,
                templates or load_templates(config), build_embedder(config), numeric,
            )
        raw = result.raw_answer
        predicted = result.value.magnitude if numeric else raw
        return score_task(task, levels, raw, predicted)
    except BackendError as e:
        failure = f"{type(e).__name__}: {e.describe()}"
    except ValueError as e:
        raw = getattr(e, "raw_answer", raw)
        failure = f"{type(e).__name__}: {e}"
    logger.warning(f"Task {task.index} ({task.doc_ref}, {task.keyword!r}) failed: {failure}")
    return score_task(task, levels, raw, None, failure)


def run_benchmark(
    tasks: Sequence[ExtractionTask],
    store: DocumentStore,
    levels: Sequence[float] = DEFAULT_LEVELS,
    backend: Optional[LLMBackend] = None,
    file_values: Optional[Dict[str, Any]] = None,
    cli_overrides: Optional[Dict[str, Any]] = None,
    baseline: bool = False,
    templates: Optional[TemplatePack] = None,
    label: Optional[str] = None,
) -> EvalReport:
    """
    Run every task through the pipeline and aggregate RETA accuracy.

    Each task runs under its resolved configuration (flag > task override >
    config file > default). Tasks run concurrently up to the parallelism of
    the base configuration; outcomes are sorted by task index before
    aggregation. Failures are recorded on the task and scored as wrong.

    Args:
        tasks: Tasks with ground truths
        store: Documents the tasks refer to
        levels: RETA thresholds, strictly increasing
        backend: LLM backend shared by all tasks
        file_values: Settings from the config file
        cli_overrides: Settings from command-line flags
        baseline: Run the Naive truncation baseline instead of the pipeline
        label: Report name when several runs of one pipeline are compared

    Returns:
        EvalReport

    Raises:
        EmptyOutcomes: If tasks is empty
        DocumentNotFound: If any task's document cannot be resolved
    """
    if not tasks:
        raise EmptyOutcomes("Task file contains no tasks")
    if backend is None:
        raise ConfigError("run_benchmark needs a backend")
    levels = parse_levels(levels)

    # fail fast on unresolvable documents
    for task in tasks:
        store.resolve(task.doc_ref)

    base = resolve_config(file_values, None, cli_overrides)
    resolved = [replace(task, config=resolve_config(file_values, task.overrides, cli_overrides)) for task in tasks]
    counter = CountingBackend(backend)
    pipeline = NAIVE if baseline else AIE

    logger.info(f"Running {label or pipeline} benchmark: {len(resolved)} tasks, levels={list(levels)}")
    started = time.perf_counter()
    done = 0
    outcomes = []
    with ThreadPoolExecutor(max_workers=base.parallelism) as pool:
        futures = [pool.submit(_run_task, task, store, levels, counter, baseline, templates) for task in resolved]
        for future in futures:
            outcomes.append(future.result())
            done += 1
            logger.info(f"  [{done}/{len(resolved)}] task {outcomes[-1].index} done")
    wall_time = time.perf_counter() - started

    report = build_report(pipeline, levels, outcomes, counter.calls, backend.backend_id, wall_time, label)
    for level, acc in zip(report.levels, report.accuracies()):
        logger.info(f"  {level_label(level)}: {acc:.4f}")
    logger.info(
        f"  Average: {report.average_accuracy:.4f} "
        f"({report.failures} failures, {report.llm_calls} calls, {wall_time:.2f}s)"
    )
    if isinstance(backend, CachedBackend):
        stats = backend.stats()
        logger.info(f"  Cache: {stats['hits']} hits, {stats['misses']} misses")
    return report
