"""Run orchestration: instance catalogs, prediction, evaluation, artifacts."""

import json

import pytest

from gdprkit.corpus import load_corpus
from gdprkit.errors import (
    ConfigurationError,
    MethodError,
    ReconciliationError,
    ReplayMissError,
)
from gdprkit.harness import (
    PredictionRecord,
    RunConfig,
    emit_report,
    evaluate_task1,
    evaluate_task2,
    load_predictions,
    predict_task1,
    predict_task2,
    reconstruct_source,
    report_from_dict,
    run,
    task1_instances,
    task2_instances,
)
from gdprkit.methods import ResponseCache, render_zero_shot_prompt
from gdprkit.taskgen import build_task1, build_task2, dump_entries, load_task1, load_task2
from tests.conftest import DATA_DIR


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("harness")
    corpus_path = DATA_DIR / "fixture_corpus.json"
    corpus = load_corpus(corpus_path)
    task1_path = root / "task1.json"
    task2_path = root / "task2.json"
    dump_entries(build_task1(corpus), task1_path)
    dump_entries(build_task2(corpus), task2_path)
    return {
        "root": root,
        "corpus_path": str(corpus_path),
        "task1": str(task1_path),
        "task2": str(task2_path),
    }


class TestReconstructSource:
    def test_lines_land_at_recorded_positions(self, camera_record_pair):
        source, line_count = reconstruct_source(camera_record_pair)
        lines = source.split("\n")
        assert line_count == 202
        assert "openCamera" in lines[201]
        assert lines[0] == ""

    def test_unspanned_snippets_append_after_placed(self, fixture_corpus):
        shoppulse = [r for r in fixture_corpus if r.app_name == "ShopPulse"][:2]
        spanned, unspanned = shoppulse
        assert "line 12" in spanned.code_snippet_path
        source, _ = reconstruct_source([spanned, unspanned])
        assert source.index(spanned.code_snippet.strip()) < source.index(
            unspanned.code_snippet.splitlines()[0]
        )

    def test_empty_group(self):
        assert reconstruct_source([]) == ("", 1)

    def test_first_record_wins_shared_lines(self, camera_record_pair):
        source, _ = reconstruct_source(camera_record_pair)
        assert source.count("openCamera") == 1


class TestInstanceCatalogs:
    def test_task1_fixture_instance_count(self, workspace):
        entries = load_task1(workspace["task1"])
        instances = task1_instances(entries)
        by_granularity = {}
        for inst in instances:
            by_granularity.setdefault(inst.granularity, []).append(inst)
        assert len(by_granularity["file"]) == 7
        assert len(by_granularity["module"]) == 7
        assert len(by_granularity["line"]) == 9
        assert len(instances) == 23

    def test_task1_instance_ids_are_stable_and_unique(self, workspace):
        entries = load_task1(workspace["task1"])
        ids = [inst.instance_id for inst in task1_instances(entries)]
        assert len(ids) == len(set(ids))
        assert ids[0] == "t1-0001::file"
        assert any("::line::202-202" in i for i in ids)

    def test_task2_fixture_instances(self, workspace):
        entries = load_task2(workspace["task2"])
        instances = task2_instances(entries)
        assert len(instances) == 10
        assert instances[0].instance_id == "t2-0001"
        assert instances[0].ground_truth == frozenset({6, 32})


class TestFormalRuns:
    def test_task2_formal_end_to_end(self, workspace):
        config = RunConfig(
            task=2,
            method="formal",
            dataset_path=workspace["task2"],
            output_dir=str(workspace["root"] / "t2-formal"),
        )
        result = run(config)
        counts = result.manifest["counts"]
        assert counts == {"scored": 10, "errored": 0, "skipped": 0}
        labels = result.report.labels
        assert labels.accuracy == pytest.approx(0.75, abs=1e-9)
        assert labels.macro_precision == pytest.approx(0.457143, abs=1e-6)
        assert labels.macro_recall == pytest.approx(0.652778, abs=1e-6)
        assert labels.macro_f1 == pytest.approx(0.497222, abs=1e-6)
        out = result.output_dir
        for name in ("predictions.json", "manifest.json", "report.json", "report.md"):
            assert (out / name).exists()

    def test_task1_formal_end_to_end(self, workspace):
        config = RunConfig(
            task=1,
            method="formal",
            dataset_path=workspace["task1"],
            corpus_path=workspace["corpus_path"],
            output_dir=str(workspace["root"] / "t1-formal"),
        )
        result = run(config)
        assert result.manifest["counts"] == {"scored": 23, "errored": 0, "skipped": 0}
        ranking = result.report.ranking
        assert ranking["file"].n_instances == 7
        assert ranking["file"].accuracy_at[1] == pytest.approx(2 / 7, abs=1e-9)
        assert ranking["file"].accuracy_at[5] == pytest.approx(6 / 7, abs=1e-9)
        assert ranking["line"].n_instances == 9
        assert ranking["line"].accuracy_at[1] == pytest.approx(4 / 9, abs=1e-9)
        assert ranking["line"].accuracy_at[5] == pytest.approx(7 / 9, abs=1e-9)

    def test_accuracy_never_decreases_with_k(self, workspace):
        config = RunConfig(
            task=1,
            method="formal",
            dataset_path=workspace["task1"],
            corpus_path=workspace["corpus_path"],
            output_dir=str(workspace["root"] / "t1-mono"),
        )
        result = run(config)
        for metrics in result.report.ranking.values():
            values = [metrics.accuracy_at[k] for k in sorted(metrics.accuracy_at)]
            assert values == sorted(values)

    def test_repeated_runs_are_byte_identical_except_timings(self, workspace):
        outputs = []
        for i in range(2):
            out = workspace["root"] / f"t2-repeat-{i}"
            run(
                RunConfig(
                    task=2,
                    method="formal",
                    dataset_path=workspace["task2"],
                    output_dir=str(out),
                )
            )
            outputs.append(out)
        a, b = outputs
        for name in ("predictions.json", "report.json", "report.md"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
        ma = json.loads((a / "manifest.json").read_text())
        mb = json.loads((b / "manifest.json").read_text())
        ma.pop("timings")
        mb.pop("timings")
        ma["config"].pop("output_dir")
        mb["config"].pop("output_dir")
        assert ma == mb


class TestStubZeroShot:
    def test_stub_answers_empty_for_every_snippet(self, workspace):
        config = RunConfig(
            task=2,
            method="zero_shot",
            dataset_path=workspace["task2"],
            reasoner="stub",
            output_dir=str(workspace["root"] / "t2-stub"),
        )
        result = run(config)
        assert result.manifest["counts"]["scored"] == 10
        assert all(r.labels == () for r in result.records)
        assert result.report.labels.accuracy == pytest.approx(0.8, abs=1e-9)

    def test_stub_runs_are_deterministic(self, workspace):
        paths = []
        for i in range(2):
            out = workspace["root"] / f"t2-stub-repeat-{i}"
            run(
                RunConfig(
                    task=2,
                    method="zero_shot",
                    dataset_path=workspace["task2"],
                    reasoner="stub",
                    output_dir=str(out),
                )
            )
            paths.append(out / "predictions.json")
        assert paths[0].read_bytes() == paths[1].read_bytes()


class TestCachingAndReplay:
    def test_cached_run_then_replay(self, workspace):
        cache_dir = workspace["root"] / "cache"
        first = RunConfig(
            task=2,
            method="zero_shot",
            dataset_path=workspace["task2"],
            reasoner="stub",
            cache_dir=str(cache_dir),
            output_dir=str(workspace["root"] / "t2-cached"),
        )
        run(first)
        replay = RunConfig(
            task=2,
            method="zero_shot",
            dataset_path=workspace["task2"],
            reasoner="cache_replay",
            cache_dir=str(cache_dir),
            replay_reasoner_id="stub:default",
            output_dir=str(workspace["root"] / "t2-replay"),
        )
        result = run(replay)
        assert result.manifest["counts"] == {"scored": 10, "errored": 0, "skipped": 0}

    def test_replay_preflight_lists_every_missing_prompt(self, workspace):
        cache_dir = workspace["root"] / "partial-cache"
        cache = ResponseCache(cache_dir)
        entries = load_task2(workspace["task2"])
        # Seed only the first snippet's prompt, leaving nine absent.
        cache.put("stub:default", render_zero_shot_prompt(entries[0].code_snippet), "0")
        config = RunConfig(
            task=2,
            method="zero_shot",
            dataset_path=workspace["task2"],
            reasoner="cache_replay",
            cache_dir=str(cache_dir),
            replay_reasoner_id="stub:default",
            output_dir=str(workspace["root"] / "t2-replay-miss"),
        )
        with pytest.raises(ReplayMissError) as err:
            run(config)
        assert len(err.value.missing_keys) == 9


class FailingMethod:
    def predict_labels(self, snippet, language="java", path=""):
        raise MethodError("model exploded")

    def predict_file(self, source, language, *, module_map=None, line_spans=None, path=""):
        raise MethodError("model exploded")


class TestErrorAndSkipPaths:
    def test_method_errors_score_as_empty_predictions(self, workspace):
        entries = load_task2(workspace["task2"])
        config = RunConfig(
            task=2, method="formal", dataset_path=workspace["task2"]
        )
        records = predict_task2(config, entries, FailingMethod())
        assert all(r.status == "errored" for r in records)
        metrics = evaluate_task2(entries, records, None)
        assert metrics.macro_recall == 0.0
        assert metrics.n_instances == 10

    def test_task1_method_error_marks_entry_instances(self, workspace):
        entries = load_task1(workspace["task1"])
        corpus = load_corpus(workspace["corpus_path"])
        config = RunConfig(
            task=1,
            method="formal",
            dataset_path=workspace["task1"],
            corpus_path=workspace["corpus_path"],
        )
        records = predict_task1(config, entries, corpus, FailingMethod())
        assert len(records) == 23
        assert all(r.status == "errored" for r in records)
        ranking = evaluate_task1(entries, records)
        assert ranking["file"].accuracy_at[5] == 0.0

    def test_out_of_range_span_is_skipped_not_scored(self, tmp_path, fixture_corpus):
        doctored = [r for r in fixture_corpus if r.app_name == "TrackNote"]
        import dataclasses

        # Declare a span reaching past the snippet's own line count, so the
        # reconstructed file cannot cover it.
        broken = dataclasses.replace(
            doctored[1],
            code_snippet_path=doctored[1].code_snippet_path.replace(
                "lines 60-70", "lines 60-95"
            ),
        )
        corpus = [doctored[0], broken]
        corpus_path = tmp_path / "corpus.json"
        from gdprkit.corpus import dump_corpus

        dump_corpus(corpus, corpus_path)
        dataset_path = tmp_path / "task1.json"
        dump_entries(build_task1(corpus), dataset_path)
        config = RunConfig(
            task=1,
            method="formal",
            dataset_path=str(dataset_path),
            corpus_path=str(corpus_path),
            output_dir=str(tmp_path / "out"),
        )
        result = run(config)
        counts = result.manifest["counts"]
        assert counts["skipped"] == 1
        assert counts["scored"] + counts["errored"] + counts["skipped"] == 4

    def test_missing_dataset_fails_before_prediction(self, workspace):
        config = RunConfig(
            task=2,
            method="formal",
            dataset_path=str(workspace["root"] / "no-such-file.json"),
        )
        with pytest.raises(OSError):
            run(config)


class TestRunConfig:
    def test_unknown_task_rejected(self, workspace):
        with pytest.raises(ConfigurationError):
            RunConfig(task=3, method="formal", dataset_path=workspace["task2"])

    def test_unknown_method_rejected(self, workspace):
        with pytest.raises(ConfigurationError):
            RunConfig(task=2, method="oracle", dataset_path=workspace["task2"])

    def test_task1_requires_corpus(self, workspace):
        with pytest.raises(ConfigurationError):
            RunConfig(task=1, method="formal", dataset_path=workspace["task1"])

    def test_rag_requires_corpus(self, workspace):
        with pytest.raises(ConfigurationError):
            RunConfig(task=2, method="rag", dataset_path=workspace["task2"])

    def test_replay_requires_cache_dir(self, workspace):
        with pytest.raises(ConfigurationError):
            RunConfig(
                task=2,
                method="zero_shot",
                dataset_path=workspace["task2"],
                reasoner="cache_replay",
            )

    def test_from_file_rejects_unknown_keys(self, tmp_path, workspace):
        path = tmp_path / "config.json"
        path.write_text(
            json.dumps(
                {"task": 2, "method": "formal", "dataset_path": workspace["task2"], "bogus": 1}
            ),
            encoding="utf-8",
        )
        with pytest.raises(ConfigurationError):
            RunConfig.from_file(path)

    def test_from_file_round_trip(self, tmp_path, workspace):
        path = tmp_path / "config.json"
        path.write_text(
            json.dumps(
                {
                    "task": 2,
                    "method": "formal",
                    "dataset_path": workspace["task2"],
                    "inference": {"temperature": 0.0},
                }
            ),
            encoding="utf-8",
        )
        config = RunConfig.from_file(path)
        assert config.task == 2
        assert config.inference.temperature == 0.0


@pytest.fixture(scope="module")
def task2_report(workspace):
    return run(
        RunConfig(
            task=2,
            method="formal",
            dataset_path=workspace["task2"],
            output_dir=str(workspace["root"] / "t2-report"),
        )
    ).report


@pytest.fixture(scope="module")
def task1_report(workspace):
    return run(
        RunConfig(
            task=1,
            method="formal",
            dataset_path=workspace["task1"],
            corpus_path=workspace["corpus_path"],
            output_dir=str(workspace["root"] / "t1-report"),
        )
    ).report


class TestReports:
    def test_task2_markdown_shape(self, task2_report):
        text = emit_report(task2_report, "markdown")
        assert "| Method | Accuracy | Macro-Precision | Macro-Recall | Macro-F1 |" in text
        assert "| formal |" in text

    def test_task1_markdown_covers_all_granularities(self, task1_report):
        text = emit_report(task1_report, "markdown")
        assert "| Method | @1 | @2 | @3 | @4 | @5 |" in text
        for heading in ("## File granularity", "## Module granularity", "## Line granularity"):
            assert heading in text

    def test_csv_report_has_six_decimal_values(self, task2_report):
        text = emit_report(task2_report, "csv")
        assert "method,metric,value" in text
        assert "formal,accuracy,0.750000" in text

    def test_unknown_format_rejected(self, task2_report):
        with pytest.raises(ConfigurationError):
            emit_report(task2_report, "yaml")

    def test_report_json_round_trips(self, task2_report, task1_report):
        for report in (task2_report, task1_report):
            text = emit_report(report, "json")
            again = report_from_dict(json.loads(text))
            assert emit_report(again, "json") == text

    def test_predictions_file_round_trips(self, workspace):
        result = run(
            RunConfig(
                task=2,
                method="formal",
                dataset_path=workspace["task2"],
                output_dir=str(workspace["root"] / "t2-roundtrip"),
            )
        )
        loaded = load_predictions(result.output_dir / "predictions.json")
        assert sorted(loaded, key=lambda r: r.instance_id) == sorted(
            result.records, key=lambda r: r.instance_id
        )


class TestReconciliation:
    def test_orphan_and_missing_ids_detected(self, workspace):
        entries = load_task2(workspace["task2"])
        instances = task2_instances(entries)
        records = [
            PredictionRecord(inst.instance_id, "scored", ranking=())
            for inst in instances[:-1]
        ]
        records.append(PredictionRecord("t2-9999", "scored", ranking=()))
        with pytest.raises(ReconciliationError) as err:
            evaluate_task2(entries, records, None)
        assert "t2-9999" in err.value.orphan_ids
        assert instances[-1].instance_id in err.value.missing_ids

    def test_duplicate_prediction_ids_detected(self, workspace):
        entries = load_task2(workspace["task2"])
        instances = task2_instances(entries)
        records = [
            PredictionRecord(inst.instance_id, "scored", ranking=()) for inst in instances
        ]
        records.append(records[0])
        with pytest.raises(ReconciliationError):
            evaluate_task2(entries, records, None)
