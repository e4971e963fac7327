import glob
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from gep.dimension import arity_of
from gep.errors import ConfigurationError, UnknownOperatorError
from gep.evolution import EvolutionConfig, HomogeneityMode

# ============================================================================
# 설정 및 초기화
# ============================================================================

load_dotenv()

OUTPUT_DIR_ENV = "SBP_GEP_OUTPUT_DIR"
JOBS_ENV = "SBP_GEP_JOBS"
DEFAULT_OPERATORS = ["+", "-", "*", "/", "log", "exp", "sin", "cos", "pow(2)", "sqrt"]


def _default_output_dir() -> str:
    return os.getenv(OUTPUT_DIR_ENV) or "results"


def _default_jobs() -> int:
    value = os.getenv(JOBS_ENV)
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            raise ConfigurationError(f"{JOBS_ENV} 는 정수여야 합니다: {value!r}") from None
    return os.cpu_count() or 1


class RunConfig(BaseModel):
    """실험 설정: 진화 설정 + (문제 × 모드·λ × γ × 시행) 격자"""
    model_config = ConfigDict(extra="forbid")

    evolution: EvolutionConfig = Field(default_factory=EvolutionConfig)
    modes: List[HomogeneityMode] = Field(default_factory=lambda: [HomogeneityMode.NONE, HomogeneityMode.SBP])
    # penalty 모드의 λ 목록 (λ 마다 별도 시행). sbp 는 sbp_lam 하나만 쓴다
    lams: Optional[List[float]] = None
    sbp_lam: float = Field(0.0, ge=0.0)
    gammas: List[float] = Field(default_factory=lambda: [0.0])
    trials: int = Field(10, ge=1)
    problems: List[str] = Field(default_factory=list)
    output_dir: str = Field(default_factory=_default_output_dir)
    library_cache: Optional[str] = None
    build_library: bool = True
    library_cap: int = Field(50, ge=1)
    library_seed: int = Field(0, ge=0)
    jobs: int = Field(default_factory=_default_jobs, ge=1)
    split_ratio: float = Field(0.75, gt=0.0, lt=1.0)
    operators: List[str] = Field(default_factory=lambda: list(DEFAULT_OPERATORS))
    constants: bool = True
    literals: List[float] = Field(default_factory=list)
    alpha: float = Field(0.05, gt=0.0, lt=1.0)

    @field_validator("gammas")
    @classmethod
    def _non_negative(cls, value: List[float]) -> List[float]:
        if not value or any(g < 0 for g in value):
            raise ValueError(f"gammas 는 비어 있지 않은 0 이상의 값 목록이어야 합니다: {value}")
        return value

    @field_validator("lams")
    @classmethod
    def _positive_lams(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is not None and (not value or any(lam <= 0 for lam in value)):
            raise ValueError(f"lams 는 비어 있지 않은 양수 목록이어야 합니다: {value}")
        return value

    @field_validator("operators")
    @classmethod
    def _known_operators(cls, value: List[str]) -> List[str]:
        for op in value:
            try:
                arity_of(op)
            except UnknownOperatorError as e:
                raise ValueError(str(e)) from e
        return value

    @model_validator(mode="after")
    def _check_modes(self) -> "RunConfig":
        if not self.modes:
            raise ValueError("modes 가 비어 있습니다")
        if HomogeneityMode.SBP in self.modes and self.library_cache is None and not self.build_library:
            raise ValueError("sbp 모드에는 library_cache 또는 build_library=true 가 필요합니다")
        if self.lams is not None and HomogeneityMode.PENALTY not in self.modes:
            raise ValueError("λ 목록은 penalty 모드에서만 쓸 수 있습니다")
        if self.lams is None and HomogeneityMode.PENALTY in self.modes:
            raise ValueError("penalty 모드는 λ > 0 목록(lams)이 필요합니다")
        return self

    def lams_for(self, mode: HomogeneityMode) -> List[float]:
        """모드별로 실행할 λ 값들"""
        if mode == HomogeneityMode.PENALTY:
            return list(self.lams or [])
        if mode == HomogeneityMode.SBP:
            return [self.sbp_lam]
        return [0.0]

    def evolution_for(self, mode: HomogeneityMode, seed: int, lam: Optional[float] = None) -> EvolutionConfig:
        """모드별 진화 설정. none/discard 는 λ=0, penalty 는 lam (생략 시 첫 λ)."""
        if lam is None:
            lam = next(iter(self.lams_for(mode)), 0.0)
        if mode in (HomogeneityMode.NONE, HomogeneityMode.DISCARD):
            lam = 0.0
        return self.evolution.model_copy(update={"mode": mode, "lam": lam, "seed": seed})

    def problem_paths(self) -> List[Path]:
        paths: List[Path] = []
        for pattern in self.problems:
            matches = sorted(glob.glob(pattern))
            if not matches:
                raise ConfigurationError(f"문제 경로가 없습니다: {pattern}")
            paths.extend(Path(m) for m in matches)
        return paths


def load_run_config(path: Optional[str], overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """JSON 설정 파일 + CLI 덮어쓰기. 덮어쓰기가 파일 값보다 우선한다."""
    document: Dict[str, Any] = {}
    if path:
        try:
            document = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"설정 파일을 읽을 수 없습니다: {path}: {e}") from e
        if not isinstance(document, dict):
            raise ConfigurationError(f"설정 파일 최상위는 객체여야 합니다: {path}")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key.startswith("evolution."):
            document.setdefault("evolution", {})[key.split(".", 1)[1]] = value
        else:
            document[key] = value
    try:
        return RunConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigurationError(f"설정 오류:\n{e}") from e
