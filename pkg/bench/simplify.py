"""유한 단계 재작성 기반 단순화와 복잡도 계산."""
import math
from typing import Callable, Hashable, List, Optional

import numpy as np

from gep.dimension import arity_of, pow_op, power_of
from gep.fitness import apply_operator
from gep.genome import ExprTree, Function, Terminal

MAX_PASSES = 16

Rule = Callable[[ExprTree], Optional[ExprTree]]


def _fn(op: str) -> Function:
    return Function(id=-1, name=op, op=op, arity=arity_of(op))


def _lit(value: float) -> ExprTree:
    return ExprTree(Terminal.literal(value))


def _literal_value(node: ExprTree) -> Optional[float]:
    symbol = node.symbol
    if isinstance(symbol, Terminal) and symbol.value is not None and not symbol.ephemeral:
        return symbol.value
    return None


def _is(node: ExprTree, value: float) -> bool:
    return _literal_value(node) == value


def _op(node: ExprTree) -> Optional[str]:
    return None if isinstance(node.symbol, Terminal) else node.symbol.op


def structure_key(node: ExprTree) -> Hashable:
    """구조 동일성 키. 임시 상수는 슬롯 번호로 구분한다."""
    symbol = node.symbol
    if isinstance(symbol, Terminal):
        return (symbol.name, node.coef_index if symbol.ephemeral else None)
    return (symbol.op, tuple(structure_key(c) for c in node.children))


def _same(a: ExprTree, b: ExprTree) -> bool:
    return structure_key(a) == structure_key(b)


# ============================================================================
# 규칙
# ============================================================================

def _fold_constants(node: ExprTree) -> Optional[ExprTree]:
    if node.is_leaf:
        return None
    values = [_literal_value(c) for c in node.children]
    if any(v is None for v in values):
        return None
    with np.errstate(all="ignore"):
        result = float(apply_operator(node.symbol.op, [np.array([v]) for v in values])[0])
    return _lit(result) if math.isfinite(result) else None


def _identities(node: ExprTree) -> Optional[ExprTree]:
    op = _op(node)
    if op not in ("+", "-", "*", "/"):
        return None
    a, b = node.children
    if op == "+":
        if _is(a, 0):
            return b
        if _is(b, 0):
            return a
    elif op == "-":
        if _is(b, 0):
            return a
        if _is(a, 0):
            return ExprTree(_fn("neg"), [b])
        if _same(a, b):
            return _lit(0.0)
    elif op == "*":
        if _is(a, 1):
            return b
        if _is(b, 1):
            return a
        if _is(a, 0) or _is(b, 0):
            return _lit(0.0)
        if _same(a, b):
            return ExprTree(_fn(pow_op(2)), [a])
    else:
        if _is(b, 1):
            return a
        if _is(a, 0):
            return _lit(0.0)
        if _same(a, b):
            return _lit(1.0)
    return None


def _negations(node: ExprTree) -> Optional[ExprTree]:
    if _op(node) == "neg" and _op(node.children[0]) == "neg":
        return node.children[0].children[0]
    if _op(node) == "-" and _op(node.children[1]) == "neg":
        return ExprTree(_fn("+"), [node.children[0], node.children[1].children[0]])
    if _op(node) == "+" and _op(node.children[1]) == "neg":
        return ExprTree(_fn("-"), [node.children[0], node.children[1].children[0]])
    return None


def _powers(node: ExprTree) -> Optional[ExprTree]:
    op = _op(node)
    n = power_of(op) if op else None
    if n is not None:
        child = node.children[0]
        if n == 1:
            return child
        inner = power_of(_op(child)) if _op(child) else None
        # 정수 지수끼리만 합친다 ((x^2)^(1/2) = |x|)
        if inner is not None and inner.denominator == 1 and n.denominator == 1:
            return ExprTree(_fn(pow_op(n * inner)), child.children)
        if n == 2 and _op(child) == "sqrt":
            return child.children[0]
    return None


def _log_exp(node: ExprTree) -> Optional[ExprTree]:
    op = _op(node)
    child_op = _op(node.children[0]) if node.children else None
    if (op, child_op) in (("log", "exp"), ("exp", "log")):
        return node.children[0].children[0]
    return None


def _regroup_literals(node: ExprTree) -> Optional[ExprTree]:
    """c1 ∘ (c2 ∘ x) → (c1 ∘ c2) ∘ x  (∘ 는 + 또는 *)"""
    op = _op(node)
    if op not in ("+", "*"):
        return None
    a, b = node.children
    if _literal_value(a) is None:
        a, b = b, a
    if _literal_value(a) is None or _op(b) != op:
        return None
    inner_a, inner_b = b.children
    if _literal_value(inner_a) is None:
        inner_a, inner_b = inner_b, inner_a
    if _literal_value(inner_a) is None:
        return None
    folded = _fold_constants(ExprTree(_fn(op), [a, inner_a]))
    return ExprTree(_fn(op), [folded, inner_b]) if folded is not None else None


RULES: List[Rule] = [_fold_constants, _identities, _negations, _powers, _log_exp, _regroup_literals]


# ============================================================================
# 고정점 반복
# ============================================================================

def _rewrite(node: ExprTree) -> ExprTree:
    node = ExprTree(node.symbol, [_rewrite(c) for c in node.children], coef_index=node.coef_index)
    for rule in RULES:
        replacement = rule(node)
        if replacement is not None:
            return replacement
    return node


def simplify(tree: ExprTree, max_passes: int = MAX_PASSES) -> ExprTree:
    """상향식 재작성을 변화가 없을 때까지 (최대 ``max_passes`` 회) 반복한다."""
    current = tree
    key = structure_key(current)
    for _ in range(max_passes):
        rewritten = _rewrite(current)
        new_key = structure_key(rewritten)
        if new_key == key:
            return rewritten
        current, key = rewritten, new_key
    return current


def complexity(tree: ExprTree) -> int:
    return simplify(tree).size()
