# -*- coding: utf-8 -*-

# ========================================
# 기본 환경 설정 및 인코딩 설정
# ========================================
import sys
import io
import os
import builtins
import argparse
from typing import Any, Dict, List, Optional

os.environ["PYTHONIOENCODING"] = "utf-8"


def _force_utf8_console() -> None:
    """UTF-8 인코딩 강제 설정 (스크립트로 실행할 때만)"""
    sys.stdout = io.TextIOWrapper(sys.stdout.buffer, encoding='utf-8')
    sys.stderr = io.TextIOWrapper(sys.stderr.buffer, encoding='utf-8')


# 환경변수 로드
from dotenv import load_dotenv
load_dotenv()

# 현재 디렉토리를 Python 경로에 추가
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

# ========================================
# 전역 print 함수 오버라이드
# ========================================
_orig_print = builtins.print
def print(*args, **kwargs):
    """기본적으로 flush=True를 적용한 print 함수"""
    if 'flush' not in kwargs:
        kwargs['flush'] = True
    _orig_print(*args, **kwargs)
builtins.print = print

# ========================================
# 로깅 설정
# ========================================
import logging

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)

from core.commands import cmd_build_library, cmd_report, cmd_run, cmd_validate

# ========================================
# 인자 파서
# ========================================

def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("problems", nargs="*", help="문제 명세 파일 (glob 가능). 설정 파일의 problems 를 대체")
    parser.add_argument("--config", help="JSON 실행 설정 파일")
    parser.add_argument("--mode", action="append", choices=["none", "penalty", "sbp", "discard"],
                        help="동질성 처리 모드 (여러 번 지정 가능)")
    parser.add_argument("--gamma", action="append", type=float, help="목표값 잡음 비율 γ (여러 번 지정 가능)")
    parser.add_argument("--trials", type=int, help="조합당 시행 수")
    parser.add_argument("--seed", type=int, help="기준 seed (시행 t 는 seed + t)")
    parser.add_argument("--lambda", dest="lams", action="append", type=float,
                        help="penalty 모드의 차원 벌점 가중치 λ (여러 번 지정하면 λ 마다 시행)")
    parser.add_argument("--sbp-lambda", dest="sbp_lam", type=float, help="sbp 모드에 더할 λ (기본 0)")
    parser.add_argument("--generations", type=int)
    parser.add_argument("--population", type=int)
    parser.add_argument("--jobs", type=int, help="동시 워커 수 (1 이면 현재 프로세스에서 실행)")
    parser.add_argument("--output-dir", help="레코드/요약 출력 디렉터리")
    parser.add_argument("--library-cache", help="의미 라이브러리 캐시 (디렉터리 또는 .json)")


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """플래그 → RunConfig 덮어쓰기 (지정하지 않은 플래그는 None 으로 건너뜀)"""
    return {
        "problems": args.problems or None,
        "modes": args.mode,
        "gammas": args.gamma,
        "trials": args.trials,
        "lams": args.lams,
        "sbp_lam": args.sbp_lam,
        "jobs": args.jobs,
        "output_dir": args.output_dir,
        "library_cache": args.library_cache,
        "evolution.seed": args.seed,
        "evolution.generations": args.generations,
        "evolution.population_size": args.population,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sbp-gep",
        description="Dimensionally-aware GEP symbolic regression with semantic backpropagation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_options(sub.add_parser("run", help="시행 실행 후 레코드와 요약 CSV 작성"))
    _add_run_options(sub.add_parser("build-library", help="문제별 의미 라이브러리 생성 및 캐시 저장"))

    report = sub.add_parser("report", help="레코드 집계와 Wilcoxon 유의성 표 작성")
    report.add_argument("records", nargs="+", help="레코드 파일 glob")
    report.add_argument("--output-dir", default=".", help="CSV 출력 디렉터리")
    report.add_argument("--alpha", type=float, default=0.05, help="Bonferroni 보정 전 유의수준")

    validate = sub.add_parser("validate", help="문제 명세 점검 (단위, 정답식, 데이터 열)")
    validate.add_argument("problems", nargs="+")
    return parser


# ========================================
# 애플리케이션 실행
# ========================================

def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, _overrides(args))
    if args.command == "build-library":
        return cmd_build_library(args.config, _overrides(args))
    if args.command == "report":
        return cmd_report(args.records, args.output_dir, args.alpha)
    return cmd_validate(args.problems)


if __name__ == "__main__":
    _force_utf8_console()
    sys.exit(main())
