"""쌍체 Wilcoxon 부호순위 검정과 Bonferroni 보정."""
import logging
from dataclasses import asdict, dataclass
from itertools import combinations
from typing import List, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from gep.errors import MetricError

logger = logging.getLogger(__name__)

MIN_PAIRS = 6
EXACT_MAX_N = 25
GRADE_LEVELS = ((0.001, "***"), (0.01, "**"))


@dataclass
class PairComparison:
    method_a: str
    method_b: str
    n: int
    statistic: float
    p_value: float
    alpha: float
    significant: bool
    grade: str
    test: str
    degenerate: bool


def _grade(p_value: float, alpha_base: float, comparisons: int) -> str:
    for level, grade in GRADE_LEVELS:
        if p_value < level / comparisons:
            return grade
    return "*" if p_value < alpha_base / comparisons else "ns"


def signed_rank(a: Sequence[float], b: Sequence[float]) -> tuple[float, float, str, bool]:
    """(통계량, 양측 p, 사용한 분포, 퇴화 여부)

    |차이| 에 동률이나 0 이 없고 n ≤ 25 이면 정확 분포, 아니면 정규 근사
    (0 은 제외, 동률 보정 분산).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise MetricError("쌍체 표본의 길이가 다릅니다")
    if a.size < MIN_PAIRS:
        raise MetricError(f"쌍체 관측이 {a.size}개뿐입니다 (최소 {MIN_PAIRS})")
    d = a - b
    if np.all(d == 0):
        return 0.0, 1.0, "none", True
    magnitudes = np.abs(d[d != 0])
    exact = a.size <= EXACT_MAX_N and magnitudes.size == d.size and np.unique(magnitudes).size == magnitudes.size
    method = "exact" if exact else "approx"
    result = stats.wilcoxon(a, b, zero_method="wilcox", alternative="two-sided", method=method)
    return float(result.statistic), float(result.pvalue), method, False


def wilcoxon_report(results: Mapping[str, Sequence[float]], alpha_base: float = 0.05) -> List[PairComparison]:
    """방법 쌍마다 검정하고 α = α_base / 비교 수 로 판정한다.

    ``results`` 의 각 표본은 같은 순서로 짝지어져 있어야 한다.
    """
    methods = sorted(results)
    pairs = list(combinations(methods, 2))
    if not pairs:
        return []
    alpha = alpha_base / len(pairs)
    report: List[PairComparison] = []
    for a, b in pairs:
        statistic, p_value, test, degenerate = signed_rank(results[a], results[b])
        report.append(PairComparison(
            method_a=a,
            method_b=b,
            n=len(results[a]),
            statistic=statistic,
            p_value=p_value,
            alpha=alpha,
            significant=p_value < alpha,
            grade=_grade(p_value, alpha_base, len(pairs)),
            test=test,
            degenerate=degenerate,
        ))
        logger.debug("%s vs %s: p=%.4g (%s)", a, b, p_value, test)
    return report


def report_frame(report: Sequence[PairComparison]) -> pd.DataFrame:
    columns = list(PairComparison.__dataclass_fields__)
    return pd.DataFrame([asdict(r) for r in report], columns=columns)
