"""검증 지표: R², 기호적 해 판정."""
import logging
import math

import numpy as np

from bench.simplify import simplify
from gep.errors import MetricError
from gep.fitness import evaluate_batch
from gep.genome import ExprTree, Function, Terminal

logger = logging.getLogger(__name__)

MIN_PROBE_ROWS = 64
MIN_USABLE_FRACTION = 0.8
DEFAULT_RELATIVE_TOLERANCE = 1e-6


def r2_score(y, prediction) -> float:
    """1 - SS_res / SS_tot. 예측에 NaN 이 있으면 -inf."""
    y = np.asarray(y, dtype=float)
    prediction = np.asarray(prediction, dtype=float)
    if y.shape != prediction.shape or y.ndim != 1:
        raise MetricError(f"y {y.shape} 와 예측 {prediction.shape} 의 모양이 다릅니다")
    if y.size < 2:
        raise MetricError("R² 에는 최소 2개의 관측값이 필요합니다")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        raise MetricError("y 가 상수이면 R² 가 정의되지 않습니다")
    if not np.all(np.isfinite(prediction)):
        return -math.inf
    return 1.0 - float(np.sum((y - prediction) ** 2)) / ss_tot


def _combine(op: str, truth: ExprTree, candidate: ExprTree) -> ExprTree:
    return ExprTree(Function(id=-1, name=op, op=op, arity=2), [truth, candidate])


def _is_constant_node(tree: ExprTree) -> bool:
    symbol = tree.symbol
    return isinstance(symbol, Terminal) and symbol.value is not None


def _numeric_constant(values: np.ndarray, scale: float, tolerance: float) -> bool:
    if scale == 0 or not math.isfinite(scale):
        return False
    return float(np.std(values)) / scale < tolerance


def symbolic_solution(
    truth: ExprTree,
    candidate: ExprTree,
    X_probe: np.ndarray,
    *,
    tolerance: float = DEFAULT_RELATIVE_TOLERANCE,
) -> bool:
    """truth − candidate 또는 truth / candidate 가 상수이면 True.

    후보에 임시 상수가 있으면 호출 전에 ``materialize`` 로 고정해야 한다.
    """
    X_probe = np.asarray(X_probe, dtype=float)
    if X_probe.ndim != 2 or X_probe.shape[0] < MIN_PROBE_ROWS:
        raise MetricError(f"탐침 행은 최소 {MIN_PROBE_ROWS}개가 필요합니다")

    for op in ("-", "/"):
        reduced = simplify(_combine(op, truth, candidate))
        if _is_constant_node(reduced) and (op == "-" or reduced.symbol.value != 0):
            return True

    f = evaluate_batch(truth, X_probe)
    g = evaluate_batch(candidate, X_probe)
    usable = np.isfinite(f) & np.isfinite(g)
    if usable.mean() < MIN_USABLE_FRACTION:
        logger.debug("사용 가능한 탐침 행 부족: %.2f", usable.mean())
        return False
    f, g = f[usable], g[usable]

    difference = f - g
    scale = max(abs(float(np.mean(difference))), float(np.sqrt(np.mean(f ** 2))))
    if _numeric_constant(difference, scale, tolerance):
        return True

    nonzero = g != 0
    if not nonzero.all():
        return False
    ratio = f / g
    return _numeric_constant(ratio, abs(float(np.mean(ratio))), tolerance)


def probe_points(X_train: np.ndarray, rows: int, rng: np.random.Generator) -> np.ndarray:
    """학습 데이터의 경계 상자 안에서 균등하게 뽑은 탐침 행"""
    X_train = np.asarray(X_train, dtype=float)
    low, high = X_train.min(axis=0), X_train.max(axis=0)
    return rng.uniform(low, high, size=(max(rows, MIN_PROBE_ROWS), X_train.shape[1]))
