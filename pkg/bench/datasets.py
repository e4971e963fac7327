"""문제 명세 로딩, 데이터 생성/적재, 잡음 주입, 학습/검증 분할."""
import json
import logging
from pathlib import Path
from typing import Annotated, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import AfterValidator, BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from bench.expr_parser import parse_expression, referenced_names
from gep.dimension import DIMENSIONLESS, DimensionVector, parse_unit
from gep.errors import ConfigurationError, ExpressionSyntaxError, GepError, UnitParseError
from gep.fitness import Problem, evaluate_batch
from gep.genome import SymbolTable
from utils.seeding import derive_rng

logger = logging.getLogger(__name__)

DIFFICULTIES = ("easy", "medium", "hard")

# ============================================================================
# 명세 모델
# ============================================================================


def _check_unit(value: Optional[str]) -> Optional[str]:
    if value is not None:
        try:
            parse_unit(value)
        except UnitParseError as e:
            raise ValueError(f"단위 {value!r}: {e}") from e
    return value


UnitText = Annotated[Optional[str], AfterValidator(_check_unit)]


class FeatureSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = Field(pattern=r"^[A-Za-z_][A-Za-z0-9_]*$")
    unit: UnitText = None
    # 데이터 생성 시 균등 표본 구간
    range: Optional[Tuple[float, float]] = None

    @field_validator("range")
    @classmethod
    def _ordered(cls, value):
        if value is not None and not value[0] < value[1]:
            raise ValueError(f"구간의 하한이 상한보다 작아야 합니다: {value}")
        return value


class TargetSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "y"
    unit: UnitText = None


class GenerateSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rows: int = Field(10_000, ge=2)
    seed: int = Field(0, ge=0)


class ProblemSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    difficulty: str = "easy"
    features: List[FeatureSpec] = Field(min_length=1)
    target: TargetSpec = Field(default_factory=TargetSpec)
    truth: Optional[str] = None
    data: Optional[str] = None
    generate: Optional[GenerateSpec] = None

    @field_validator("difficulty")
    @classmethod
    def _known_difficulty(cls, value: str) -> str:
        if value not in DIFFICULTIES:
            raise ValueError(f"difficulty 는 {DIFFICULTIES} 중 하나여야 합니다: {value}")
        return value

    @model_validator(mode="after")
    def _check(self) -> "ProblemSpec":
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError(f"특성 이름이 중복되었습니다: {names}")
        if self.truth is not None:
            try:
                unknown = referenced_names(self.truth) - set(names)
            except ExpressionSyntaxError as e:
                raise ValueError(str(e)) from e
            if unknown:
                raise ValueError(f"정답식이 선언되지 않은 이름을 씁니다: {sorted(unknown)}")
        if self.data is None and self.generate is None:
            raise ValueError("data 경로 또는 generate 블록이 필요합니다")
        if self.data is None:
            if self.truth is None:
                raise ValueError("데이터 생성에는 truth 식이 필요합니다")
            missing = [f.name for f in self.features if f.range is None]
            if missing:
                raise ValueError(f"데이터 생성에 필요한 range 가 없습니다: {missing}")
        return self

    @property
    def feature_names(self) -> List[str]:
        return [f.name for f in self.features]

    def missing_units(self) -> List[str]:
        missing = [f.name for f in self.features if f.unit is None]
        if self.target.unit is None:
            missing.append(self.target.name)
        return missing

    def feature_dims(self) -> List[DimensionVector]:
        return [parse_unit(f.unit) if f.unit else DIMENSIONLESS for f in self.features]

    def target_dim(self) -> DimensionVector:
        return parse_unit(self.target.unit) if self.target.unit else DIMENSIONLESS

    def symbol_table(self, operators: Sequence[str], *, constant: bool = True,
                     literals: Sequence[float] = ()) -> SymbolTable:
        return SymbolTable.build(list(zip(self.feature_names, self.feature_dims())), operators,
                                 constant=constant, literals=literals)


def load_problem_spec(path) -> ProblemSpec:
    """JSON 명세를 읽는다. 상대 data 경로는 명세 파일 기준으로 푼다."""
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"문제 명세를 읽을 수 없습니다: {path}: {e}") from e
    try:
        spec = ProblemSpec.model_validate(document)
    except ValidationError as e:
        raise ConfigurationError(f"문제 명세 오류 {path}:\n{e}") from e
    if spec.data is not None and not Path(spec.data).is_absolute():
        spec = spec.model_copy(update={"data": str(path.parent / spec.data)})
    return spec


# ============================================================================
# 데이터
# ============================================================================

def generate_dataset(spec: ProblemSpec) -> Tuple[np.ndarray, np.ndarray]:
    """정답식으로 데이터를 만든다. 정답이 정의되지 않는 행은 버린다."""
    rng = derive_rng(spec.generate.seed if spec.generate else 0, spec.name, "data")
    rows = spec.generate.rows if spec.generate else GenerateSpec().rows
    low = np.array([f.range[0] for f in spec.features])
    high = np.array([f.range[1] for f in spec.features])
    X = rng.uniform(low, high, size=(rows, len(spec.features)))
    truth = parse_expression(spec.truth, spec.symbol_table(()))
    y = evaluate_batch(truth, X)
    keep = np.isfinite(y)
    if keep.sum() < 2:
        raise ConfigurationError(f"{spec.name}: 생성된 데이터에 유효한 행이 부족합니다")
    return X[keep], y[keep]


def load_dataset(spec: ProblemSpec) -> Tuple[np.ndarray, np.ndarray]:
    if spec.data is None:
        return generate_dataset(spec)
    try:
        frame = pd.read_csv(spec.data)
    except (OSError, pd.errors.ParserError) as e:
        raise ConfigurationError(f"데이터 파일을 읽을 수 없습니다: {spec.data}: {e}") from e
    target = spec.target.name if spec.target.name in frame.columns else frame.columns[-1]
    missing = [name for name in spec.feature_names if name not in frame.columns]
    if missing:
        raise ConfigurationError(f"{spec.data}: 특성 열이 없습니다: {missing}")
    frame = frame.dropna(subset=spec.feature_names + [target])
    return frame[spec.feature_names].to_numpy(dtype=float), frame[target].to_numpy(dtype=float)


def add_noise(y: np.ndarray, gamma: float, rng: np.random.Generator) -> np.ndarray:
    """ỹ = y + N(0, γ·RMS(y)). 특성 행렬은 건드리지 않는다."""
    if gamma < 0:
        raise ValueError(f"잡음 수준은 0 이상이어야 합니다: {gamma}")
    y = np.asarray(y, dtype=float)
    if gamma == 0:
        return y.copy()
    scale = gamma * float(np.sqrt(np.mean(y ** 2)))
    return y + rng.normal(0.0, scale, size=y.shape)


def split(X: np.ndarray, y: np.ndarray, ratio: float, rng: np.random.Generator):
    """무작위 섞은 뒤 앞 round(ratio·n) 행을 학습용으로 쓴다."""
    if not 0 < ratio < 1:
        raise ValueError(f"분할 비율은 (0, 1) 이어야 합니다: {ratio}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if n < 2:
        raise ValueError("분할하려면 최소 2개의 행이 필요합니다")
    order = rng.permutation(n)
    cut = min(max(int(round(ratio * n)), 1), n - 1)
    train, test = order[:cut], order[cut:]
    return (X[train], y[train]), (X[test], y[test])


def build_problem(spec: ProblemSpec, X: np.ndarray, y: np.ndarray, table: SymbolTable) -> Problem:
    try:
        return Problem(X, y, spec.feature_dims(), spec.target_dim(), table, spec.feature_names)
    except GepError:
        raise
    except Exception as e:
        raise ConfigurationError(f"{spec.name}: 문제 구성 실패: {e}") from e
