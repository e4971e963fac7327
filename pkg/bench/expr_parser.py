"""정답식 텍스트 → ExprTree.

문법: 중위 표기, ``^`` 거듭제곱(지수는 상수), 함수 호출 sin/cos/log/exp/sqrt,
``pi`` 상수. 선언된 특성 이름만 변수로 쓸 수 있다.
"""
import ast
import math
from fractions import Fraction

from gep.dimension import DIMENSIONLESS, pow_op
from gep.errors import ExpressionSyntaxError
from gep.genome import ExprTree, SymbolTable, Terminal

_BINOPS = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/"}
_FUNCTIONS = frozenset({"sin", "cos", "log", "exp", "sqrt"})
_CONSTANTS = {"pi": math.pi}


def _literal(value: float) -> ExprTree:
    return ExprTree(Terminal.literal(value), dim=DIMENSIONLESS)


def _constant_value(node: ast.AST) -> float:
    """지수 자리의 상수식 (정수, 분수, 음수)"""
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        value = _constant_value(node.operand)
        return -value if isinstance(node.op, ast.USub) else value
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        left, right = _constant_value(node.left), _constant_value(node.right)
        return {"+": left + right, "-": left - right, "*": left * right,
                "/": left / right if right else math.nan}[_BINOPS[type(node.op)]]
    raise ExpressionSyntaxError("거듭제곱 지수는 상수여야 합니다")


class _Builder:
    def __init__(self, table: SymbolTable, text: str):
        self.table = table
        self.text = text

    def build(self, node: ast.AST) -> ExprTree:
        if isinstance(node, ast.Expression):
            return self.build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return _literal(float(node.value))
        if isinstance(node, ast.Name):
            if node.id in _CONSTANTS:
                return _literal(_CONSTANTS[node.id])
            try:
                return ExprTree(self.table.feature(node.id))
            except Exception:
                raise ExpressionSyntaxError(f"선언되지 않은 이름 '{node.id}': {self.text}") from None
        if isinstance(node, ast.UnaryOp):
            operand = self.build(node.operand)
            if isinstance(node.op, ast.UAdd):
                return operand
            if isinstance(node.op, ast.USub):
                return ExprTree(self.table.function("neg"), [operand])
        if isinstance(node, ast.BinOp):
            if isinstance(node.op, ast.Pow):
                exponent = Fraction(_constant_value(node.right)).limit_denominator(64)
                if exponent == 1:
                    return self.build(node.left)
                return ExprTree(self.table.function(pow_op(exponent)), [self.build(node.left)])
            if type(node.op) in _BINOPS:
                op = _BINOPS[type(node.op)]
                return ExprTree(self.table.function(op), [self.build(node.left), self.build(node.right)])
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
            if node.func.id in _FUNCTIONS and len(node.args) == 1:
                return ExprTree(self.table.function(node.func.id), [self.build(node.args[0])])
        raise ExpressionSyntaxError(f"지원하지 않는 구문 '{ast.dump(node)[:60]}': {self.text}")


def parse_expression(text: str, table: SymbolTable) -> ExprTree:
    source = text.replace("^", "**").strip()
    if not source:
        raise ExpressionSyntaxError("빈 식입니다")
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as e:
        raise ExpressionSyntaxError(f"식 구문 오류 (위치 {e.offset}): {text}") from e
    expr = _Builder(table, text).build(tree)
    expr.infer_dimensions()
    return expr


def referenced_names(text: str) -> set[str]:
    """식에 등장하는 변수 이름 (상수/함수 이름 제외)"""
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as e:
        raise ExpressionSyntaxError(f"식 구문 오류 (위치 {e.offset}): {text}") from e
    called = {n.func.id for n in ast.walk(tree) if isinstance(n, ast.Call) and isinstance(n.func, ast.Name)}
    return {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)} - called - set(_CONSTANTS)
