import json
import math

import numpy as np
import pytest
from pydantic import ValidationError

from bench.records import RunRecord
from bench.report import (
    DIFFICULTY_SUMMARY_COLUMNS,
    SIGNIFICANCE_COLUMNS,
    SUMMARY_COLUMNS,
    records_frame,
    significance,
    summarize,
)
from core.storage import (
    atomic_write_text,
    library_cache_path,
    load_library,
    obtain_library,
    read_records,
    save_record,
)
from gep.errors import LibraryCacheError, OperationFailed, SchemaMismatchError
from utils.event_logger import EVENTS_FILE, EventLogger
from utils.logger import handle_error, log


def _record(**overrides) -> RunRecord:
    values = dict(problem="velocity", mode="none", gamma=0.0, seed=0, best_expression="(d / t)",
                  evaluations=10, config={"max_evaluations": 100})
    values.update(overrides)
    return RunRecord(**values)


# ============================================================================
# 레코드
# ============================================================================

def test_non_finite_values_are_stored_as_null():
    record = _record(best_loss=math.inf, r2_test=-math.inf, loss_history=[math.inf, 2.0, math.nan])
    assert record.best_loss is None and record.r2_test is None
    assert record.loss_history == [None, 2.0, None]
    assert json.loads(record.to_json_line())["best_loss"] is None


def test_record_rejects_evaluations_over_budget():
    with pytest.raises(ValidationError):
        _record(evaluations=101)
    with pytest.raises(ValidationError):
        _record(unexpected="field")


def test_file_stem_and_deterministic_view():
    record = _record(mode="sbp", gamma=0.01, seed=7, wall_time_s=3.5)
    assert record.file_stem == "velocity__sbp__g0.01__s7"
    assert "wall_time_s" not in record.deterministic_view()
    assert record.deterministic_view() == _record(mode="sbp", gamma=0.01, seed=7, wall_time_s=9.0).deterministic_view()


def test_penalty_lambda_is_part_of_the_file_stem():
    record = _record(mode="penalty", lam=0.1, seed=7)
    assert record.file_stem == "velocity__penalty__g0__l0.1__s7"
    assert record.method == "penalty(λ=0.1)"
    assert _record(mode="penalty", lam=10.0, seed=7).file_stem != record.file_stem


# ============================================================================
# 집계
# ============================================================================

def _paired_records(n=8, gamma=0.0):
    rng = np.random.default_rng(0)
    records = []
    for seed in range(n):
        base = float(rng.uniform(0.5, 0.9))
        records.append(_record(mode="none", gamma=gamma, seed=seed, r2_test=base, complexity=7))
        records.append(_record(mode="sbp", gamma=gamma, seed=seed, r2_test=base + 0.05 + seed * 1e-3,
                               solution=seed % 2 == 0, complexity=5))
    return records


def test_summary_by_mode_and_gamma():
    summary = summarize(_paired_records() + _paired_records(gamma=0.1))
    assert list(summary.columns) == SUMMARY_COLUMNS
    assert len(summary) == 4
    sbp = summary[(summary["mode"] == "sbp") & (summary["gamma"] == 0.0)].iloc[0]
    assert sbp["trials"] == 8
    assert sbp["solution_rate"] == pytest.approx(0.5)
    assert sbp["complexity_median"] == 5


def test_summary_separates_lambdas_and_difficulties():
    records = [
        _record(mode=mode, lam=lam, seed=seed, difficulty=difficulty, r2_test=0.5, wall_time_s=wall)
        for difficulty in ("easy", "hard")
        for mode, lam, wall in (("none", 0.0, 2.0), ("penalty", 0.1, 3.0), ("penalty", 10.0, 3.0), ("sbp", 0.0, 5.0))
        for seed in range(2)
    ]
    overall = summarize(records)
    assert list(overall.columns) == SUMMARY_COLUMNS
    assert [(m, lam) for m, lam in zip(overall["mode"], overall["lam"])] == [
        ("none", 0.0), ("penalty", 0.1), ("penalty", 10.0), ("sbp", 0.0),
    ]
    assert overall["trials"].tolist() == [4, 4, 4, 4]

    by_difficulty = summarize(records, by_difficulty=True)
    assert list(by_difficulty.columns) == DIFFICULTY_SUMMARY_COLUMNS
    assert len(by_difficulty) == 8
    hard_sbp = by_difficulty[(by_difficulty["difficulty"] == "hard") & (by_difficulty["mode"] == "sbp")].iloc[0]
    assert hard_sbp["trials"] == 2
    assert hard_sbp["wall_time_median"] == 5.0
    assert hard_sbp["overhead_vs_none"] == pytest.approx(2.5)


def test_overhead_is_missing_without_a_baseline():
    summary = summarize([_record(mode="sbp", seed=s, wall_time_s=1.0) for s in range(2)])
    assert summary["overhead_vs_none"].isna().all()


def test_records_without_difficulty_are_grouped_as_unknown():
    summary = summarize([_record(seed=s) for s in range(2)], by_difficulty=True)
    assert summary["difficulty"].tolist() == ["unknown"]


def test_summary_skips_missing_r2():
    records = [_record(seed=s, r2_test=None if s == 0 else 0.5) for s in range(3)]
    assert summarize(records).iloc[0]["r2_median"] == 0.5


def test_significance_with_enough_pairs():
    table = significance(_paired_records(n=6))
    assert list(table.columns) == SIGNIFICANCE_COLUMNS
    assert len(table) == 1
    row = table.iloc[0]
    assert (row["method_a"], row["method_b"]) == ("none", "sbp")
    assert row["p_value"] == pytest.approx(2 / 2 ** 6)


def test_significance_compares_penalty_lambdas_separately():
    records = [
        _record(mode=mode, lam=lam, seed=seed, r2_test=0.5 + seed * 0.01 + shift)
        for mode, lam, shift in (("none", 0.0, 0.0), ("penalty", 0.1, 0.05), ("penalty", 10.0, 0.1))
        for seed in range(6)
    ]
    table = significance(records)
    assert set(zip(table["method_a"], table["method_b"])) == {
        ("none", "penalty(λ=0.1)"), ("none", "penalty(λ=10)"), ("penalty(λ=0.1)", "penalty(λ=10)"),
    }


def test_significance_skips_small_groups():
    assert significance(_paired_records(n=4)).empty


def test_mixed_schema_versions_are_refused():
    with pytest.raises(SchemaMismatchError):
        records_frame([_record(), _record(schema_version=2)])


# ============================================================================
# 저장소
# ============================================================================

def test_atomic_write_leaves_no_temporaries(tmp_path):
    target = atomic_write_text(tmp_path / "nested" / "out.txt", "hello")
    assert target.read_text(encoding="utf-8") == "hello"
    assert [p.name for p in target.parent.iterdir()] == ["out.txt"]


def test_records_round_trip_through_files(tmp_path):
    first, second = _record(seed=1), _record(seed=2, r2_test=0.9)
    save_record(tmp_path, first)
    save_record(tmp_path, second)
    loaded = read_records([str(tmp_path / "records" / "*.json")])
    assert [r.seed for r in loaded] == [1, 2]
    assert loaded[1] == second


def test_malformed_record_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(_record().to_json_line() + '{"mode": "none"}\n', encoding="utf-8")
    with pytest.raises(SchemaMismatchError, match="bad.json:2"):
        read_records([str(path)])


def test_library_cache_path_rules(tmp_path):
    assert library_cache_path(None, "velocity") is None
    assert library_cache_path(str(tmp_path / "lib.json"), "velocity") == tmp_path / "lib.json"
    assert library_cache_path(str(tmp_path), "velocity") == tmp_path / "velocity.library.json"


def test_obtain_library_builds_then_reuses_cache(tmp_path, coulomb_table):
    cache = tmp_path / "coulomb.library.json"
    built = obtain_library(coulomb_table, 3, 10, 4, cache)
    assert cache.exists()
    first_bytes = cache.read_bytes()
    assert obtain_library(coulomb_table, 3, 10, 4, cache).entries == built.entries

    other = tmp_path / "again.library.json"
    obtain_library(coulomb_table, 3, 10, 4, other)
    assert other.read_bytes() == first_bytes


def test_cache_with_other_parameters_is_rebuilt(tmp_path, coulomb_table):
    cache = tmp_path / "coulomb.library.json"
    obtain_library(coulomb_table, 4, 20, 0, cache)
    library = obtain_library(coulomb_table, 3, 2, 0, cache)
    assert (library.head_len, library.cap, library.seed) == (3, 2, 0)
    assert max(library.size_counts()) <= 3
    assert load_library(cache, coulomb_table).head_len == 3

    with pytest.raises(LibraryCacheError):
        obtain_library(coulomb_table, 4, 20, 1, cache, build=False)


def test_missing_cache_without_build(tmp_path, coulomb_table):
    with pytest.raises(LibraryCacheError):
        obtain_library(coulomb_table, 3, 10, 0, tmp_path / "absent.json", build=False)


def test_corrupt_cache_is_reported(tmp_path, coulomb_table):
    cache = tmp_path / "broken.library.json"
    cache.write_text("{\"format\": ", encoding="utf-8")
    with pytest.raises(LibraryCacheError):
        load_library(cache, coulomb_table)


# ============================================================================
# 이벤트 로그
# ============================================================================

def test_event_logger_writes_sanitized_lines(tmp_path):
    events = EventLogger(str(tmp_path))
    events.emit_event("generation_progress", {"best_loss": math.inf, "values": (1.0, math.nan), "note": "a\u0000b",
                                              "fraction": np.float64(0.5)}, job_id="velocity__sbp")
    line = json.loads((tmp_path / EVENTS_FILE).read_text(encoding="utf-8").strip())
    assert line["event_type"] == "generation_progress"
    assert line["job_id"] == "velocity__sbp"
    assert line["data"]["best_loss"] is None
    assert line["data"]["values"] == [1.0, None]
    assert line["data"]["note"] == "ab"
    assert line["data"]["fraction"] == 0.5


# ============================================================================
# 로그 / 오류 처리
# ============================================================================

def test_handle_error_keeps_domain_errors_and_wraps_others(capsys):
    with pytest.raises(LibraryCacheError):
        handle_error("캐시", LibraryCacheError("checksum"))
    with pytest.raises(OperationFailed, match="계산 실패"):
        handle_error("계산", ZeroDivisionError("division by zero"))
    handle_error("무시", ValueError("soft"), raise_error=False, extra={"trial": "velocity"})
    out = capsys.readouterr().out
    assert "[무시] ValueError: soft" in out
    assert "velocity" in out


def test_log_includes_context(capsys):
    log("시행 시작", context={"seed": 7})
    out = capsys.readouterr().out
    assert "시행 시작 | {'seed': 7}" in out and "pid=" in out
