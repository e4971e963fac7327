import asyncio
import math
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
from crewai.flow.flow import Flow, listen, start
from pydantic import BaseModel, ConfigDict, Field

from bench.datasets import ProblemSpec, add_noise, build_problem, load_dataset, load_problem_spec, split
from bench.expr_parser import parse_expression
from bench.metrics import probe_points, r2_score, symbolic_solution
from bench.records import RunRecord
from bench.simplify import complexity
from core.config import RunConfig
from core.storage import library_cache_path, obtain_library, save_record
from gep.errors import ConfigurationError, MetricError
from gep.evolution import HomogeneityMode, Individual, run_evolution
from gep.fitness import Problem, evaluate_batch
from gep.genome import materialize
from gep.semantics import CorrectionStats, SemanticLibrary
from utils.event_logger import EventLogger
from utils.logger import handle_error, log
from utils.seeding import derive_rng

PROGRESS_EVERY = 10
PROBE_ROWS = 256

# ============================================================================
# 데이터 모델 정의
# ============================================================================


class TrialState(BaseModel):
    """시행 하나 (문제 × 모드·λ × γ × seed) 의 입력과 진행 상태"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    problem_path: str = ""
    mode: HomogeneityMode = HomogeneityMode.NONE
    gamma: float = 0.0
    lam: float = 0.0
    seed: int = 0
    trial: int = 0
    config: Dict[str, Any] = Field(default_factory=dict)

    spec: Optional[ProblemSpec] = None
    train: Optional[Problem] = None
    X_test: Optional[np.ndarray] = None
    y_test: Optional[np.ndarray] = None
    library: Optional[SemanticLibrary] = None
    best: Optional[Individual] = None
    record: Optional[RunRecord] = None


INPUT_FIELDS = ("problem_path", "mode", "gamma", "lam", "seed", "trial", "config")


# ============================================================================
# 메인 플로우 클래스
# ============================================================================

class TrialFlow(Flow[TrialState]):
    """데이터 준비 → 라이브러리 → 진화 → 검증 지표 → 레코드 저장"""

    def __init__(self):
        super().__init__()
        self.run_config: Optional[RunConfig] = None
        self.event_logger: Optional[EventLogger] = None

    @classmethod
    def from_inputs(cls, inputs: Dict[str, Any]) -> "TrialFlow":
        """입력을 TrialState 로 검증한 뒤 플로우 상태에 옮긴다."""
        validated = TrialState.model_validate(inputs)
        flow = cls()
        for name in INPUT_FIELDS:
            setattr(flow.state, name, getattr(validated, name))
        return flow

    @property
    def job_id(self) -> str:
        s = self.state
        name = s.spec.name if s.spec else Path(s.problem_path).stem
        lam = f"__l{s.lam:g}" if s.lam else ""
        return f"{name}__{s.mode.value}__g{s.gamma:g}{lam}__s{s.seed}"

    def _fail(self, operation: str, error: Exception) -> None:
        if self.event_logger is not None:
            self.event_logger.emit_event("trial_failed", {"step": operation, "error": str(error)}, job_id=self.job_id)
        handle_error(operation, error, raise_error=True, extra={"job_id": self.job_id})

    # ========================================================================
    # 1단계: 데이터 준비
    # ========================================================================

    @start()
    async def prepare_data(self) -> ProblemSpec:
        """명세 로드, 잡음 추가, 학습/검증 분할 (시작점)"""
        try:
            s = self.state
            self.run_config = RunConfig.model_validate(s.config)
            self.event_logger = EventLogger(self.run_config.output_dir)
            spec = load_problem_spec(s.problem_path)
            if s.mode != HomogeneityMode.NONE and spec.missing_units():
                raise ConfigurationError(f"{spec.name}: {s.mode.value} 모드에는 단위가 필요합니다: {spec.missing_units()}")
            X, y = load_dataset(spec)
            # 잡음은 모드와 무관하게 (seed, 문제) 로 고정 → 모드 간 짝 비교 가능
            y = add_noise(y, s.gamma, derive_rng(s.seed, spec.name, "noise"))
            (X_train, y_train), (X_test, y_test) = split(X, y, self.run_config.split_ratio,
                                                         derive_rng(s.seed, spec.name, "split"))
            table = spec.symbol_table(self.run_config.operators, constant=self.run_config.constants,
                                      literals=self.run_config.literals)
            s.spec = spec
            s.train = build_problem(spec, X_train, y_train, table)
            s.X_test, s.y_test = X_test, y_test
            log(f"📦 {spec.name}: 학습 {len(y_train)}행 / 검증 {len(y_test)}행, 기호 {len(table)}개")
            self.event_logger.emit_event("trial_started", s.model_dump(include={"mode", "gamma", "lam", "seed", "trial"},
                                                                       mode="json"), job_id=self.job_id)
            return spec
        except Exception as e:
            self._fail("데이터준비", e)

    # ========================================================================
    # 2단계: 의미 라이브러리
    # ========================================================================

    @listen("prepare_data")
    async def prepare_library(self) -> Optional[SemanticLibrary]:
        """sbp 모드에서만 캐시를 읽거나 만든다"""
        s = self.state
        if s.mode != HomogeneityMode.SBP:
            return None
        try:
            rc = self.run_config
            s.library = await asyncio.to_thread(
                obtain_library,
                s.train.table,
                rc.evolution.head_length,
                rc.library_cap,
                rc.library_seed,
                library_cache_path(rc.library_cache, s.spec.name),
                build=rc.build_library,
            )
            log(f"📚 라이브러리 준비: {len(s.library)}개 항목")
            return s.library
        except Exception as e:
            self._fail("라이브러리준비", e)

    # ========================================================================
    # 3단계: 진화
    # ========================================================================

    def _on_generation(self, generation: int, elite: Individual, stats: Optional[CorrectionStats]) -> None:
        if generation % PROGRESS_EVERY != 0:
            return
        if stats is not None:
            self.event_logger.emit_event("correction_stats", {
                "generation": generation,
                "before": stats.fraction_before,
                "after": stats.fraction_after,
                "repaired": stats.repaired,
                "reverted": stats.reverted,
                "unrepaired": stats.unrepaired,
                "target_sizes": list(stats.target_sizes),
            }, job_id=self.job_id)
        self.event_logger.emit_event("generation_progress", {"generation": generation, "best_loss": elite.fitness},
                                     job_id=self.job_id)

    @listen("prepare_library")
    async def evolve(self) -> RunRecord:
        try:
            s = self.state
            config = self.run_config.evolution_for(s.mode, s.seed, s.lam)
            result = await asyncio.to_thread(run_evolution, config, s.train, s.library,
                                             on_generation=self._on_generation)
            s.best = result.best
            s.record = RunRecord.model_validate({
                **result.record.model_dump(),
                "problem": s.spec.name,
                "difficulty": s.spec.difficulty,
                "gamma": s.gamma,
                "trial": s.trial,
            })
            if s.record.stagnated:
                self.event_logger.emit_event("stagnation", {"homogeneous_initial": s.record.homogeneous_initial},
                                             job_id=self.job_id)
            return s.record
        except Exception as e:
            self._fail("진화", e)

    # ========================================================================
    # 4단계: 검증 지표
    # ========================================================================

    @listen("evolve")
    async def evaluate(self) -> RunRecord:
        """검증 R², 기호 해 여부, 단순화 복잡도"""
        try:
            s = self.state
            table = s.train.table
            candidate = materialize(s.best.tree(table), s.best.coefficients)

            r2: Optional[float] = None
            try:
                r2 = r2_score(s.y_test, evaluate_batch(candidate, s.X_test))
            except MetricError as e:
                handle_error("R2계산", e, raise_error=False, extra={"job_id": self.job_id})

            solution = False
            if s.spec.truth is not None and math.isfinite(s.best.fitness):
                truth = parse_expression(s.spec.truth, table)
                probe = probe_points(s.train.X, PROBE_ROWS, derive_rng(s.seed, s.spec.name, "probe"))
                solution = symbolic_solution(truth, candidate, probe)

            s.record = RunRecord.model_validate({
                **s.record.model_dump(),
                "r2_test": r2,
                "solution": solution,
                "complexity": complexity(candidate),
            })
            log(f"🏁 {self.job_id}: R²={r2}, 해={solution}, 복잡도={s.record.complexity}, 식={s.record.best_expression}")
            return s.record
        except Exception as e:
            self._fail("검증지표", e)

    # ========================================================================
    # 5단계: 레코드 저장
    # ========================================================================

    @listen("evaluate")
    async def save(self) -> RunRecord:
        try:
            record = self.state.record
            save_record(self.run_config.output_dir, record)
            self.event_logger.emit_event("trial_completed", {
                "r2_test": record.r2_test,
                "solution": record.solution,
                "complexity": record.complexity,
                "evaluations": record.evaluations,
            }, job_id=self.job_id)
            return record
        except Exception as e:
            self._fail("레코드저장", e)
