import asyncio
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Set

from core.config import RunConfig
from flows.trial_flow import TrialFlow
from gep.evolution import HomogeneityMode
from utils.logger import handle_error, log

# ============================================================================
# 설정 및 초기화
# ============================================================================

logger = logging.getLogger(__name__)

WORKER_SCRIPT = os.path.join(os.path.dirname(__file__), "worker.py")


@dataclass(frozen=True)
class TrialJob:
    problem_path: str
    mode: HomogeneityMode
    gamma: float
    seed: int
    trial: int
    lam: float = 0.0

    def inputs(self, config: RunConfig) -> Dict:
        return {
            "problem_path": self.problem_path,
            "mode": self.mode.value,
            "gamma": self.gamma,
            "lam": self.lam,
            "seed": self.seed,
            "trial": self.trial,
            "config": config.model_dump(mode="json"),
        }

    @property
    def label(self) -> str:
        mode = self.mode.value if self.lam == 0 else f"{self.mode.value}(λ={self.lam:g})"
        return f"{Path(self.problem_path).stem}/{mode}/γ={self.gamma:g}/seed={self.seed}"


@dataclass
class TrialSummary:
    completed: List[TrialJob] = field(default_factory=list)
    failed: List[TrialJob] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failed


def plan_trials(config: RunConfig) -> List[TrialJob]:
    """문제 × 모드(penalty 는 λ 마다) × γ × 시행. 시행 t 의 seed 는 evolution.seed + t."""
    base = config.evolution.seed
    return [
        TrialJob(str(path), mode, gamma, base + trial, trial, lam)
        for path in config.problem_paths()
        for gamma in config.gammas
        for mode in config.modes
        for lam in config.lams_for(mode)
        for trial in range(config.trials)
    ]


# ============================================================================
# 워커 프로세스 관리
# ============================================================================

class TrialManager:
    """시행을 --jobs 개까지 동시에 워커 프로세스로 실행한다 (jobs=1 은 현재 프로세스)."""

    def __init__(self, config: RunConfig, jobs: Optional[int] = None):
        self.config = config
        self.jobs = jobs or config.jobs
        self._processes: Set[asyncio.subprocess.Process] = set()

    async def run(self, trials: List[TrialJob]) -> TrialSummary:
        summary = TrialSummary()
        log(f"🚀 시행 {len(trials)}개 시작 (jobs={self.jobs})")
        if self.jobs == 1:
            for job in trials:
                await self._run_in_process(job, summary)
            return summary

        semaphore = asyncio.Semaphore(self.jobs)

        async def guarded(job: TrialJob) -> None:
            async with semaphore:
                await self._execute_worker_process(job, summary)

        try:
            await asyncio.gather(*(guarded(job) for job in trials))
        except asyncio.CancelledError:
            self.terminate_all()
            raise
        return summary

    async def _run_in_process(self, job: TrialJob, summary: TrialSummary) -> None:
        try:
            await TrialFlow.from_inputs(job.inputs(self.config)).kickoff_async()
            summary.completed.append(job)
        except Exception as e:
            # 시행 하나의 실패는 비치명적 (다음 시행 계속)
            handle_error("시행실패", e, raise_error=False, extra={"trial": job.label})
            summary.failed.append(job)

    async def _execute_worker_process(self, job: TrialJob, summary: TrialSummary) -> None:
        """워커 프로세스 실행 및 종료 코드 확인"""
        try:
            process = await asyncio.create_subprocess_exec(
                sys.executable,
                WORKER_SCRIPT,
                "--inputs", json.dumps(job.inputs(self.config), ensure_ascii=False),
                env={**os.environ, "PYTHONIOENCODING": "utf-8"},
            )
        except Exception as e:
            handle_error("워커시작실패", e, raise_error=False, extra={"trial": job.label})
            summary.failed.append(job)
            return
        self._processes.add(process)
        log(f"✅ 워커 시작 (PID={process.pid}) {job.label}")
        try:
            await process.wait()
        finally:
            self._processes.discard(process)

        if process.returncode != 0:
            handle_error("워커비정상종료", Exception(f"returncode={process.returncode}"), raise_error=False,
                         extra={"trial": job.label})
            summary.failed.append(job)
            return
        log(f"✅ 워커 정상 종료 (PID={process.pid}) {job.label}")
        summary.completed.append(job)

    def terminate_all(self) -> None:
        """실행 중인 워커 프로세스 종료"""
        for process in list(self._processes):
            if process.returncode is None:
                process.terminate()
                log(f"🛑 워커 프로세스 종료 시그널 전송 (PID={process.pid})")


async def run_trials(config: RunConfig, jobs: Optional[int] = None) -> TrialSummary:
    return await TrialManager(config, jobs).run(plan_trials(config))
