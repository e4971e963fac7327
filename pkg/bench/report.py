"""RunRecord 집계: 모드·λ/잡음 수준(선택: 난이도)별 요약표와 쌍체 유의성 행렬."""
import logging
from typing import Sequence

import numpy as np
import pandas as pd

from bench.records import RunRecord
from bench.stats import MIN_PAIRS, report_frame, wilcoxon_report
from gep.errors import MetricError, SchemaMismatchError

logger = logging.getLogger(__name__)

BASELINE_MODE = "none"
UNKNOWN_DIFFICULTY = "unknown"

SUMMARY_COLUMNS = [
    "mode", "lam", "gamma", "trials", "r2_median", "r2_q1", "r2_q3", "r2_iqr",
    "solution_rate", "complexity_median", "stagnation_rate", "wall_time_median", "overhead_vs_none",
]
DIFFICULTY_SUMMARY_COLUMNS = ["difficulty"] + SUMMARY_COLUMNS
SIGNIFICANCE_COLUMNS = [
    "gamma", "method_a", "method_b", "n", "statistic", "p_value", "alpha",
    "significant", "grade", "test", "degenerate",
]
FRAME_COLUMNS = [
    "problem", "difficulty", "mode", "lam", "method", "gamma", "seed", "r2_test", "solution",
    "complexity", "stagnated", "wall_time_s",
]


def records_frame(records: Sequence[RunRecord]) -> pd.DataFrame:
    versions = {r.schema_version for r in records}
    if len(versions) > 1:
        raise SchemaMismatchError(f"서로 다른 레코드 스키마 버전이 섞여 있습니다: {sorted(versions)}")
    rows = [
        {
            "problem": r.problem,
            "difficulty": r.difficulty or UNKNOWN_DIFFICULTY,
            "mode": r.mode,
            "lam": r.lam,
            "method": r.method,
            "gamma": r.gamma,
            "seed": r.seed,
            "r2_test": np.nan if r.r2_test is None else r.r2_test,
            "solution": r.solution,
            "complexity": np.nan if r.complexity is None else r.complexity,
            "stagnated": r.stagnated,
            "wall_time_s": r.wall_time_s,
        }
        for r in records
    ]
    return pd.DataFrame(rows, columns=FRAME_COLUMNS)


def summarize(records: Sequence[RunRecord], *, by_difficulty: bool = False) -> pd.DataFrame:
    """(mode, lam, gamma) 별 R² 중앙값/사분위, 해 발견률, 복잡도 중앙값, 정체 비율, 실행 시간.

    overhead_vs_none 은 같은 γ (by_difficulty 면 같은 난이도까지) 의 none 모드 실행 시간
    중앙값에 대한 비율이다. none 모드가 없으면 NaN.
    """
    columns = DIFFICULTY_SUMMARY_COLUMNS if by_difficulty else SUMMARY_COLUMNS
    frame = records_frame(records)
    if frame.empty:
        return pd.DataFrame(columns=columns)
    keys = (["difficulty"] if by_difficulty else []) + ["mode", "lam", "gamma"]
    summary = frame.groupby(keys, sort=True).agg(
        trials=("seed", "size"),
        r2_median=("r2_test", "median"),
        r2_q1=("r2_test", lambda s: s.quantile(0.25)),
        r2_q3=("r2_test", lambda s: s.quantile(0.75)),
        solution_rate=("solution", "mean"),
        complexity_median=("complexity", "median"),
        stagnation_rate=("stagnated", "mean"),
        wall_time_median=("wall_time_s", "median"),
    ).reset_index()
    summary["r2_iqr"] = summary["r2_q3"] - summary["r2_q1"]

    shared = [k for k in keys if k not in ("mode", "lam")]
    baseline = summary.loc[summary["mode"] == BASELINE_MODE, shared + ["wall_time_median"]]
    summary = summary.merge(baseline.rename(columns={"wall_time_median": "baseline_time"}), on=shared, how="left")
    with np.errstate(divide="ignore", invalid="ignore"):
        summary["overhead_vs_none"] = summary["wall_time_median"] / summary["baseline_time"]
    return summary[columns]


def significance(records: Sequence[RunRecord], alpha_base: float = 0.05, metric: str = "r2_test") -> pd.DataFrame:
    """잡음 수준마다 (problem, seed) 로 짝지은 방법(모드·λ) 간 Wilcoxon 검정"""
    frame = records_frame(records)
    tables = []
    for gamma, group in frame.groupby("gamma", sort=True):
        paired = group.pivot_table(index=["problem", "seed"], columns="method", values=metric, aggfunc="first")
        paired = paired.dropna()
        if paired.shape[1] < 2:
            continue
        if paired.shape[0] < MIN_PAIRS:
            logger.info("γ=%s: 짝지어진 시행이 %d개뿐이라 유의성 검정을 건너뜀", gamma, paired.shape[0])
            continue
        try:
            report = wilcoxon_report({method: paired[method].to_numpy() for method in paired.columns}, alpha_base)
        except MetricError as e:
            logger.warning("γ=%s 유의성 검정 실패: %s", gamma, e)
            continue
        table = report_frame(report)
        table.insert(0, "gamma", gamma)
        tables.append(table)
    if not tables:
        return pd.DataFrame(columns=SIGNIFICANCE_COLUMNS)
    return pd.concat(tables, ignore_index=True)[SIGNIFICANCE_COLUMNS]
