"""시행 결과 레코드 (JSON 한 줄 = 시행 하나)."""
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SCHEMA_VERSION = 1

# 결정성 비교에서 제외되는 필드
TIMING_FIELDS = frozenset({"wall_time_s"})


def _finite_or_none(value: Optional[float]) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return value if value == value and abs(value) != float("inf") else None


class RunRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: int = SCHEMA_VERSION
    problem: str = ""
    difficulty: Optional[str] = None
    mode: str
    gamma: float = 0.0
    lam: float = 0.0
    seed: int
    trial: int = 0

    best_expression: str
    best_preorder: List[str] = Field(default_factory=list)
    best_coefficients: List[float] = Field(default_factory=list)
    # inf 는 JSON 으로 쓸 수 없으므로 None 으로 저장
    best_loss: Optional[float] = None
    loss_history: List[Optional[float]] = Field(default_factory=list)
    generations: int = 0
    evaluations: int = 0
    wall_time_s: float = 0.0

    r2_test: Optional[float] = None
    solution: bool = False
    complexity: Optional[int] = None

    homogeneous_initial: float = 0.0
    homogeneous_best: bool = False
    correction_before: Optional[float] = None
    correction_after: Optional[float] = None
    stagnated: bool = False

    config: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("best_loss", "r2_test", mode="before")
    @classmethod
    def _finite(cls, value):
        return _finite_or_none(value)

    @field_validator("loss_history", mode="before")
    @classmethod
    def _finite_history(cls, value):
        return [_finite_or_none(v) for v in value]

    @model_validator(mode="after")
    def _within_budget(self) -> "RunRecord":
        limit = self.config.get("max_evaluations")
        if limit is not None and self.evaluations > limit:
            raise ValueError(f"평가 횟수 {self.evaluations} 가 상한 {limit} 을 넘었습니다")
        return self

    @property
    def method(self) -> str:
        """비교 단위. λ 가 있으면 모드 이름에 붙인다 (penalty(λ=0.1) 등)."""
        return self.mode if self.lam == 0 else f"{self.mode}(λ={self.lam:g})"

    @property
    def file_stem(self) -> str:
        lam = f"__l{self.lam:g}" if self.lam else ""
        return f"{self.problem}__{self.mode}__g{self.gamma:g}{lam}__s{self.seed}"

    def to_json_line(self) -> str:
        return self.model_dump_json() + "\n"

    def deterministic_view(self) -> Dict[str, Any]:
        return self.model_dump(exclude=set(TIMING_FIELDS))
