"""표현 트리의 수치 평가, 차원 정규화 손실, 계수 최적화."""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from gep.dimension import UNDEFINED, DimensionVector, l2_norm_diff, power_of
from gep.errors import FeatureIndexError, FitnessError
from gep.genome import ExprTree, SymbolTable, Terminal

logger = logging.getLogger(__name__)

# ============================================================================
# 문제 정의 / 평가 예산
# ============================================================================


@dataclass
class Problem:
    X: np.ndarray
    y: np.ndarray
    feature_dims: Sequence[DimensionVector]
    target_dim: DimensionVector
    table: SymbolTable
    feature_names: Sequence[str] = field(default_factory=tuple)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2:
            raise FitnessError("X 는 2차원 행렬이어야 합니다")
        if self.X.shape[1] != len(self.feature_dims):
            raise FitnessError(f"열 개수 {self.X.shape[1]} != 특성 차원 개수 {len(self.feature_dims)}")
        if self.y.shape != (self.X.shape[0],):
            raise FitnessError(f"y 길이 {self.y.shape} 가 행 개수 {self.X.shape[0]} 와 다릅니다")

    def subset(self, rows: np.ndarray) -> "Problem":
        return Problem(self.X[rows], self.y[rows], self.feature_dims, self.target_dim, self.table, self.feature_names)


class EvaluationBudget:
    """평가 횟수 상한. 상한을 넘는 청구는 거절된다."""

    def __init__(self, limit: int):
        self.limit = int(limit)
        self.used = 0

    @property
    def remaining(self) -> int:
        return self.limit - self.used

    @property
    def exhausted(self) -> bool:
        return self.used >= self.limit

    def try_charge(self, n: int = 1) -> bool:
        if self.used + n > self.limit:
            return False
        self.used += n
        return True


# ============================================================================
# 수치 평가
# ============================================================================

_BINARY: dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
}


def apply_operator(op: str, args: list[np.ndarray]) -> np.ndarray:
    if op in _BINARY:
        return _BINARY[op](args[0], args[1])
    if op == "/":
        a, b = args
        return np.where(b == 0, np.nan, a / np.where(b == 0, 1.0, b))
    x = args[0]
    if op == "neg":
        return -x
    if op == "sqrt":
        return np.where(x < 0, np.nan, np.sqrt(np.abs(x)))
    if op == "log":
        return np.where(x <= 0, np.nan, np.log(np.where(x <= 0, 1.0, x)))
    if op == "exp":
        return np.exp(x)
    if op == "sin":
        return np.sin(x)
    if op == "cos":
        return np.cos(x)
    n = power_of(op)
    if n is None:
        raise FitnessError(f"평가할 수 없는 연산자: {op}")
    if n.denominator != 1:
        return np.where(x < 0, np.nan, np.power(np.abs(x), float(n)))
    return np.power(x, float(n))


def _evaluate(node: ExprTree, X: np.ndarray, coefficients: Sequence[float]) -> np.ndarray:
    symbol = node.symbol
    if isinstance(symbol, Terminal):
        if symbol.column is not None:
            if symbol.column >= X.shape[1]:
                raise FeatureIndexError(f"특성 열 {symbol.column} 이 데이터 범위({X.shape[1]}) 밖입니다")
            out = X[:, symbol.column]
        elif symbol.ephemeral:
            if node.coef_index is None or node.coef_index >= len(coefficients):
                raise FeatureIndexError(f"계수 슬롯 {node.coef_index} 이 없습니다")
            out = np.full(X.shape[0], float(coefficients[node.coef_index]))
        else:
            out = np.full(X.shape[0], float(symbol.value))
    else:
        out = apply_operator(symbol.op, [_evaluate(child, X, coefficients) for child in node.children])
    return out


def evaluate_batch(tree: ExprTree, X: np.ndarray, coefficients: Sequence[float] = ()) -> np.ndarray:
    """열 단위 재귀 평가. 도메인 위반 행은 NaN 이 된다."""
    X = np.asarray(X, dtype=float)
    with np.errstate(all="ignore"):
        out = np.array(_evaluate(tree, X, coefficients), dtype=float, copy=True)
    out[~np.isfinite(out)] = np.nan
    return out


# ============================================================================
# 손실
# ============================================================================

def dimension_penalty(tree: ExprTree, target_dim: DimensionVector) -> float:
    """0 (동차) / L2 거리 (정의되었으나 불일치) / inf (정의되지 않음)"""
    if tree.dim is None:
        tree.infer_dimensions()
    if tree.dim is UNDEFINED or tree.has_undefined():
        return math.inf
    if tree.dim == target_dim:
        return 0.0
    return l2_norm_diff(tree.dim, target_dim)


def mse(y: np.ndarray, prediction: np.ndarray) -> float:
    if np.isnan(prediction).any():
        return math.inf
    value = float(np.mean((y - prediction) ** 2))
    return value if math.isfinite(value) else math.inf


def loss(problem: Problem, tree: ExprTree, coefficients: Sequence[float], lam: float) -> float:
    error = mse(problem.y, evaluate_batch(tree, problem.X, coefficients))
    if lam == 0:
        return error
    return error + lam * dimension_penalty(tree, problem.target_dim)


# ============================================================================
# 계수 최적화 (비선형 켤레기울기)
# ============================================================================

class _BudgetExhausted(Exception):
    pass


def central_difference(func: Callable[[np.ndarray], float], theta: np.ndarray) -> np.ndarray:
    """좌표별 중앙 차분. step = 1e-6 * max(1, |θ_i|), 호출 2·len(θ) 회."""
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        step = 1e-6 * max(1.0, abs(theta[i]))
        forward, backward = theta.copy(), theta.copy()
        forward[i] += step
        backward[i] -= step
        grad[i] = (func(forward) - func(backward)) / (2 * step)
    return grad


@dataclass
class CoefficientFit:
    coefficients: np.ndarray
    loss: float
    evaluations: int


def optimize_coefficients(
    problem: Problem,
    tree: ExprTree,
    coefficients: Sequence[float],
    *,
    max_iter: int = 50,
    gtol: float = 1e-10,
    budget: Optional[EvaluationBudget] = None,
) -> Tuple[np.ndarray, float]:
    fit = fit_coefficients(problem, tree, coefficients, max_iter=max_iter, gtol=gtol, budget=budget)
    return fit.coefficients, fit.loss


def fit_coefficients(
    problem: Problem,
    tree: ExprTree,
    coefficients: Sequence[float],
    *,
    max_iter: int = 50,
    gtol: float = 1e-10,
    budget: Optional[EvaluationBudget] = None,
) -> CoefficientFit:
    """MSE 를 계수에 대해 최소화한다. 입력보다 나쁜 계수는 돌려주지 않는다.

    기울기는 중앙 차분(step = 1e-6 * max(1, |θ|))이고, 함수 호출마다 평가 1회를 청구한다.
    """
    theta0 = np.asarray(coefficients, dtype=float).copy()
    calls = 0
    best_theta = theta0.copy()
    best_loss = math.inf

    def objective(theta: np.ndarray) -> float:
        nonlocal calls, best_theta, best_loss
        if budget is not None and not budget.try_charge(1):
            raise _BudgetExhausted()
        calls += 1
        value = mse(problem.y, evaluate_batch(tree, problem.X, theta))
        if value < best_loss:
            best_loss, best_theta = value, np.array(theta, copy=True)
        return value if math.isfinite(value) else 1e300

    try:
        start_loss = objective(theta0)
    except _BudgetExhausted:
        return CoefficientFit(theta0, math.inf, calls)
    if theta0.size == 0 or not math.isfinite(start_loss):
        return CoefficientFit(theta0, start_loss, calls)

    try:
        minimize(objective, theta0, jac=lambda theta: central_difference(objective, theta), method="CG", options={"maxiter": max_iter, "gtol": gtol})
    except _BudgetExhausted:
        logger.debug("계수 최적화 중 평가 예산 소진")
    if best_loss > start_loss:
        return CoefficientFit(theta0, start_loss, calls)
    return CoefficientFit(best_theta, best_loss, calls)
