"""SI 차원 벡터와 순방향/역방향 변환 규칙.

지수 순서는 (질량, 길이, 시간, 온도, 전류, 물질량, 광도) 로 고정이다.
지수는 ``Fraction`` 이므로 sqrt 로 생기는 반정수까지 정확히 비교된다.
"""
import math
import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Literal, Optional, Tuple, Union

from gep.errors import NonInvertibleError, UnitParseError, UnknownOperatorError

# ============================================================================
# 차원 벡터
# ============================================================================

BASE_ORDER: Tuple[str, ...] = ("mass", "length", "time", "temperature", "current", "amount", "luminous")
BASE_UNITS: Tuple[str, ...] = ("kg", "m", "s", "K", "A", "mol", "cd")

Rational = Union[int, Fraction, str]


@dataclass(frozen=True, slots=True)
class DimensionVector:
    exponents: Tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.exponents) != 7:
            raise ValueError(f"차원 벡터는 7개 성분이 필요합니다: {len(self.exponents)}")
        object.__setattr__(self, "exponents", tuple(Fraction(e) for e in self.exponents))

    @classmethod
    def of(cls, *values: Rational) -> "DimensionVector":
        return cls(tuple(Fraction(v) for v in values))

    @classmethod
    def zero(cls) -> "DimensionVector":
        return DIMENSIONLESS

    @property
    def is_dimensionless(self) -> bool:
        return not any(self.exponents)

    def __add__(self, other: "DimensionVector") -> "DimensionVector":
        return DimensionVector(tuple(a + b for a, b in zip(self.exponents, other.exponents)))

    def __sub__(self, other: "DimensionVector") -> "DimensionVector":
        return DimensionVector(tuple(a - b for a, b in zip(self.exponents, other.exponents)))

    def __neg__(self) -> "DimensionVector":
        return DimensionVector(tuple(-a for a in self.exponents))

    def scale(self, factor: Rational) -> "DimensionVector":
        f = Fraction(factor)
        return DimensionVector(tuple(a * f for a in self.exponents))

    def halve(self) -> "DimensionVector":
        return self.scale(Fraction(1, 2))

    def to_strings(self) -> list[str]:
        return [str(e) for e in self.exponents]

    @classmethod
    def from_strings(cls, values: Iterable[str]) -> "DimensionVector":
        return cls(tuple(Fraction(v) for v in values))

    def __repr__(self) -> str:
        return f"[{', '.join(str(e) for e in self.exponents)}]"


DIMENSIONLESS = DimensionVector((Fraction(0),) * 7)


class Undefined(Enum):
    """규칙 위반으로 차원이 정의되지 않음 (예외가 아닌 값)"""
    UNDEFINED = "undefined"

    def __repr__(self) -> str:
        return "Undefined"


UNDEFINED = Undefined.UNDEFINED
DimResult = Union[DimensionVector, Literal[Undefined.UNDEFINED]]

# ============================================================================
# 연산자
# ============================================================================

BINARY_OPS = frozenset({"+", "-", "*", "/"})
TRANSCENDENTAL_OPS = frozenset({"sin", "cos", "log", "exp"})
UNARY_OPS = frozenset({"sqrt", "neg"}) | TRANSCENDENTAL_OPS

_POW_RE = re.compile(r"^pow\(\s*(-?\d+(?:/\d+)?)\s*\)$")


def power_of(op: str) -> Optional[Fraction]:
    """``pow(n)`` 연산자의 지수, 아니면 None"""
    match = _POW_RE.match(op)
    return Fraction(match.group(1)) if match else None


def pow_op(n: Rational) -> str:
    return f"pow({Fraction(n)})"


def arity_of(op: str) -> int:
    if op in BINARY_OPS:
        return 2
    if op in UNARY_OPS or power_of(op) is not None:
        return 1
    raise UnknownOperatorError(f"알 수 없는 연산자: {op!r}")


def forward_apply(op: str, a: DimResult, b: Optional[DimResult] = None) -> DimResult:
    """자식 차원으로부터 노드 차원을 계산. 위반은 UNDEFINED 로 돌려준다."""
    arity = arity_of(op)
    if (arity == 2) != (b is not None):
        raise ValueError(f"{op} 의 피연산자 수가 맞지 않습니다")
    if a is UNDEFINED or b is UNDEFINED:
        return UNDEFINED

    if op in ("+", "-"):
        return a if a == b else UNDEFINED
    if op == "*":
        return a + b
    if op == "/":
        return a - b
    if op == "neg":
        return a
    if op == "sqrt":
        return a.halve()
    if op in TRANSCENDENTAL_OPS:
        return DIMENSIONLESS if a.is_dimensionless else UNDEFINED
    return a.scale(power_of(op))


def backward_split(
    op: str,
    target: DimensionVector,
    left_known: Optional[DimensionVector] = None,
    right_known: Optional[DimensionVector] = None,
) -> Tuple[DimensionVector, Optional[DimensionVector]]:
    """목표 차원을 자식 목표 차원으로 분배한다.

    단항 연산자는 두 번째 성분이 None 이다. ``*`` 와 ``/`` 는 알려진 왼쪽 자식을 먼저
    고정하고, 없으면 오른쪽, 둘 다 없으면 목표를 정확히 반으로 나눈다.
    """
    arity = arity_of(op)
    if arity == 1:
        if op == "neg":
            return target, None
        if op == "sqrt":
            return target.scale(2), None
        if op in TRANSCENDENTAL_OPS:
            return DIMENSIONLESS, None
        n = power_of(op)
        if n == 0:
            raise NonInvertibleError("pow(0) 은 역방향으로 풀 수 없습니다")
        return target.scale(1 / n), None

    if op in ("+", "-"):
        return target, target
    if op == "*":
        if left_known is not None:
            return left_known, target - left_known
        if right_known is not None:
            return target - right_known, right_known
        left = target - target.halve()
        return left, target - left
    # "/" : target = left - right
    if left_known is not None:
        return left_known, left_known - target
    if right_known is not None:
        return target + right_known, right_known
    left = target - target.halve()
    return left, left - target


def _squared_sum(a: DimensionVector, b: DimensionVector) -> Fraction:
    return sum(((x - y) ** 2 for x, y in zip(a.exponents, b.exponents)), Fraction(0))


def distance(a: DimensionVector, b: DimensionVector) -> float:
    """성분별 제곱 오차의 평균 (교정 허용오차 비교용)"""
    return float(_squared_sum(a, b) / 7)


def l2_norm_diff(a: DimensionVector, b: DimensionVector) -> float:
    return math.sqrt(_squared_sum(a, b))


# ============================================================================
# 단위 문자열 파싱
# ============================================================================

def _vec(**exps: int) -> DimensionVector:
    return DimensionVector(tuple(Fraction(exps.get(unit, 0)) for unit in ("kg", "m", "s", "K", "A", "mol", "cd")))


NAMED_UNITS = {
    "kg": _vec(kg=1),
    "m": _vec(m=1),
    "s": _vec(s=1),
    "K": _vec(K=1),
    "A": _vec(A=1),
    "mol": _vec(mol=1),
    "cd": _vec(cd=1),
    "N": _vec(kg=1, m=1, s=-2),
    "J": _vec(kg=1, m=2, s=-2),
    "W": _vec(kg=1, m=2, s=-3),
    "Pa": _vec(kg=1, m=-1, s=-2),
    "C": _vec(s=1, A=1),
    "V": _vec(kg=1, m=2, s=-3, A=-1),
    "Ω": _vec(kg=1, m=2, s=-3, A=-2),
    "Ohm": _vec(kg=1, m=2, s=-3, A=-2),
    "Wb": _vec(kg=1, m=2, s=-2, A=-1),
    "Hz": _vec(s=-1),
    "1": DIMENSIONLESS,
}

_TOKEN_RE = re.compile(r"\s*(?:(?P<unit>[A-Za-zΩ]+|1)(?:\^(?P<exp>[+-]?\d+))?|(?P<op>[*/]))")


def parse_unit(text: str) -> DimensionVector:
    """``"kg*m^2*s^-3*A^-1"`` 이나 ``"V"`` 같은 단위 문자열을 차원 벡터로 바꾼다."""
    if not text or not text.strip():
        raise UnitParseError("빈 단위 문자열", 0)
    result = DIMENSIONLESS
    sign = 1
    expect_factor = True
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        match = _TOKEN_RE.match(text, pos)
        if not match:
            raise UnitParseError(f"해석할 수 없는 문자 {text[pos:].strip()[:1]!r}", pos)
        if match.group("op"):
            if expect_factor:
                raise UnitParseError(f"연산자 {match.group('op')!r} 앞에 단위가 없습니다", match.start("op"))
            sign = -1 if match.group("op") == "/" else 1
            expect_factor = True
        else:
            if not expect_factor:
                raise UnitParseError("단위 사이에 '*' 또는 '/' 가 필요합니다", match.start("unit"))
            unit = match.group("unit")
            if unit not in NAMED_UNITS:
                raise UnitParseError(f"알 수 없는 단위 {unit!r}", match.start("unit"))
            exponent = int(match.group("exp")) if match.group("exp") else 1
            result = result + NAMED_UNITS[unit].scale(sign * exponent)
            expect_factor = False
        pos = match.end()
    if expect_factor:
        raise UnitParseError("단위 문자열이 연산자로 끝납니다", len(text))
    return result


def format_unit(vector: DimensionVector) -> str:
    parts = []
    for unit, exp in zip(BASE_UNITS, vector.exponents):
        if exp == 0:
            continue
        parts.append(unit if exp == 1 else f"{unit}^{exp}")
    return "*".join(parts) if parts else "1"
