"""CLI 하위 명령 구현. 각 함수는 종료 코드를 돌려준다."""
import asyncio
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from bench.datasets import load_dataset, load_problem_spec
from bench.expr_parser import parse_expression
from bench.records import RunRecord
from bench.report import significance, summarize
from core.config import DEFAULT_OPERATORS, RunConfig, load_run_config
from core.storage import library_cache_path, read_records, save_library, write_csv
from core.trial_manager import plan_trials, run_trials
from gep.dimension import UNDEFINED, format_unit
from gep.errors import ConfigurationError, GepError
from gep.evolution import HomogeneityMode
from gep.semantics import build_library
from utils.logger import handle_error, log
from utils.seeding import derive_rng

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_TRIAL_FAILED = 1
EXIT_CONFIG_ERROR = 2


def _require_units(config: RunConfig) -> None:
    """차원 정보를 쓰는 모드에서 단위가 빠진 문제는 실행 전에 거부한다."""
    if all(mode == HomogeneityMode.NONE for mode in config.modes):
        return
    for path in config.problem_paths():
        spec = load_problem_spec(path)
        missing = spec.missing_units()
        if missing:
            raise ConfigurationError(f"{path}: 단위가 없는 기호가 있습니다: {missing}")


def write_report(records, output_dir, alpha: float = 0.05) -> Dict[str, Path]:
    written = {
        "summary": write_csv(summarize(records), Path(output_dir) / "summary.csv"),
        "summary_by_difficulty": write_csv(summarize(records, by_difficulty=True),
                                           Path(output_dir) / "summary_by_difficulty.csv"),
    }
    table = significance(records, alpha)
    if not table.empty:
        written["significance"] = write_csv(table, Path(output_dir) / "significance.csv")
    return written


# ============================================================================
# run
# ============================================================================

def grid_records(config: RunConfig, records: Sequence[RunRecord]) -> List[RunRecord]:
    """현재 격자 (문제, 모드, λ, γ, seed) 에 속하는 레코드만 남긴다."""
    names = set()
    for path in config.problem_paths():
        try:
            names.add(load_problem_spec(path).name)
        except GepError:
            continue
    grid = {(job.mode.value, job.lam, job.gamma, job.seed) for job in plan_trials(config)}
    kept = [r for r in records if r.problem in names and (r.mode, r.lam, r.gamma, r.seed) in grid]
    if len(kept) < len(records):
        log(f"🧹 현재 설정에 없는 이전 레코드 {len(records) - len(kept)}개는 요약에서 제외")
    return kept


def cmd_run(config_path: Optional[str], overrides: Optional[Dict[str, Any]] = None) -> int:
    try:
        config = load_run_config(config_path, overrides)
        if not config.problems:
            raise ConfigurationError("실행할 문제가 없습니다 (problems 또는 위치 인자)")
        _require_units(config)
    except GepError as e:
        handle_error("설정검증", e, raise_error=False)
        return EXIT_CONFIG_ERROR

    summary = asyncio.run(run_trials(config))
    log(f"📊 시행 완료 {len(summary.completed)}개, 실패 {len(summary.failed)}개")

    records = grid_records(config, read_records([str(Path(config.output_dir) / "records" / "*.json")]))
    if records:
        for name, path in write_report(records, config.output_dir, config.alpha).items():
            log(f"📄 {name}: {path}")
    return EXIT_OK if summary.ok else EXIT_TRIAL_FAILED


# ============================================================================
# build-library
# ============================================================================

def cmd_build_library(config_path: Optional[str], overrides: Optional[Dict[str, Any]] = None) -> int:
    try:
        config = load_run_config(config_path, overrides)
        _require_units(config.model_copy(update={"modes": [HomogeneityMode.SBP]}))
        cache = config.library_cache or str(Path(config.output_dir) / "library")
        for path in config.problem_paths():
            spec = load_problem_spec(path)
            table = spec.symbol_table(config.operators, constant=config.constants, literals=config.literals)
            library = build_library(table, config.evolution.head_length, config.library_cap,
                                    derive_rng(config.library_seed, "library"))
            library.seed = config.library_seed
            target = save_library(library_cache_path(cache, spec.name), library)
            log(f"📚 {spec.name}: 항목 {len(library)}개 → {target}", context={"sizes": library.size_counts()})
    except GepError as e:
        handle_error("라이브러리생성", e, raise_error=False)
        return EXIT_CONFIG_ERROR
    return EXIT_OK


# ============================================================================
# report
# ============================================================================

def cmd_report(patterns: Sequence[str], output_dir: str, alpha: float = 0.05) -> int:
    try:
        records = read_records(patterns)
        if not records:
            raise ConfigurationError(f"레코드 파일이 없습니다: {list(patterns)}")
        written = write_report(records, output_dir, alpha)
    except GepError as e:
        handle_error("리포트생성", e, raise_error=False)
        return EXIT_CONFIG_ERROR
    for name, path in written.items():
        log(f"📄 {name}: {path}")
    with pd.option_context("display.width", 160, "display.max_columns", 20):
        print(pd.read_csv(written["summary"]).to_string(index=False))
    return EXIT_OK


# ============================================================================
# validate
# ============================================================================

def validate_problem(path, operators: Sequence[str] = DEFAULT_OPERATORS) -> List[str]:
    """명세 하나의 문제점 목록 (빈 목록이면 통과)"""
    try:
        spec = load_problem_spec(path)
    except GepError as e:
        return [str(e)]
    issues: List[str] = []
    missing = spec.missing_units()
    if missing:
        issues.append(f"단위 없음: {missing} (none 모드에서만 실행 가능)")
    if spec.data is not None:
        if not Path(spec.data).exists():
            issues.append(f"데이터 파일 없음: {spec.data}")
        else:
            try:
                load_dataset(spec)
            except GepError as e:
                issues.append(str(e))
    if spec.truth is not None:
        try:
            truth = parse_expression(spec.truth, spec.symbol_table(operators))
        except GepError as e:
            issues.append(f"정답식: {e}")
        else:
            if not missing and truth.dim is UNDEFINED:
                issues.append("정답식의 차원이 정의되지 않습니다")
            elif not missing and truth.dim != spec.target_dim():
                issues.append(f"정답식 차원 {format_unit(truth.dim)} != 목표 차원 {format_unit(spec.target_dim())}")
    return issues


def cmd_validate(paths: Sequence[str]) -> int:
    failed = 0
    for path in paths:
        issues = validate_problem(path)
        if issues:
            failed += 1
            log(f"❌ {path}", context={"issues": issues})
        else:
            log(f"✅ {path}")
    return EXIT_OK if failed == 0 else EXIT_TRIAL_FAILED
