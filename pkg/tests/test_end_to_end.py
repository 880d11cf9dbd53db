"""Replay runs over the bundled corpus: no network, fixed answers."""

import json
from dataclasses import replace

import pytest

from src import pipeline
from src.config import load_config_file, resolve_config
from src.evaluation import DEFAULT_LEVELS, run_benchmark
from src.pipeline import build_backend, build_baseline_backend
from src.tasks import DocumentStore, load_tasks


@pytest.fixture
def corpus(corpus_dir):
    file_values = load_config_file(corpus_dir / "config.json")
    config = resolve_config(file_values)
    tasks = load_tasks(corpus_dir / "tasks.jsonl")
    store = DocumentStore.from_directory(corpus_dir / "docs", base_dir=corpus_dir)
    return file_values, config, tasks, store


def run(corpus, baseline=False, **flags):
    file_values, config, tasks, store = corpus
    backend = build_baseline_backend(config) if baseline else build_backend(config)
    return run_benchmark(tasks, store, DEFAULT_LEVELS, backend, file_values, flags, baseline=baseline)


def test_corpus_shape(corpus):
    _, config, tasks, store = corpus
    assert len(tasks) == 20
    assert len(store.documents) == 10
    assert config.max_tokens_per_segment == 64


def test_replay_matches_golden_report(corpus, corpus_dir):
    report = run(corpus)
    golden = json.loads((corpus_dir / "golden_report.json").read_text(encoding="utf-8"))
    assert json.loads(report.to_json()) == golden
    assert report.accuracies()[-1] == 1.0
    assert report.llm_calls == 80
    assert report.failures == 0


def test_replay_is_byte_identical_across_runs(corpus):
    assert run(corpus).to_json() == run(corpus).to_json()


def test_naive_baseline_loses_accuracy(corpus):
    aie = run(corpus)
    naive = run(corpus, baseline=True)
    assert naive.llm_calls == 20
    assert naive.accuracies()[0] == pytest.approx(0.2)
    assert naive.accuracies()[0] < aie.accuracies()[0]
    assert all(a >= n for a, n in zip(aie.accuracies(), naive.accuracies()))


def test_reports_are_monotone(corpus):
    for report in (run(corpus), run(corpus, baseline=True)):
        accuracies = report.accuracies()
        assert accuracies == sorted(accuracies)


def test_naive_failures_are_recorded(corpus):
    naive = run(corpus, baseline=True)
    assert naive.failures == 16
    assert all(o.failure.startswith("NotANumber") for o in naive.outcomes if o.failure)
    assert all(o.raw_answer == "not found" for o in naive.outcomes if o.failure)


def assert_nothing_found(report):
    assert report.failures == report.task_count == 20
    assert report.accuracies() == [0.0] * len(DEFAULT_LEVELS)
    assert all(o.raw_answer == "not found" for o in report.outcomes)


def test_answers_come_from_retrieved_text(corpus, monkeypatch):
    real_top_segments = pipeline.top_segments

    def blank_text(*args, **kwargs):
        retrieved = real_top_segments(*args, **kwargs)
        return [replace(s, segment=replace(s.segment, text="lorem ipsum")) for s in retrieved]

    monkeypatch.setattr(pipeline, "top_segments", blank_text)
    report = run(corpus)
    assert report.llm_calls == 80
    assert_nothing_found(report)


def test_table_segment_must_be_retrieved(corpus):
    # top segment is always the company introduction, never the table
    report = run(corpus, top_n=1)
    assert report.llm_calls == 40
    assert_nothing_found(report)


def test_table_rows_must_serialize_as_plain(corpus):
    assert_nothing_found(run(corpus, format="CSV"))
