#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""시행 하나를 별도 프로세스에서 실행하는 워커.

종료 코드: 0 성공, 1 시행 실패, 2 입력 오류. trial_manager 는 0 이 아니면 실패로 센다.
"""
import argparse
import asyncio
import json
import logging
import os
import sys

# 워커는 스크립트로 직접 실행되므로 프로젝트 루트를 경로에 넣는다
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from pydantic import ValidationError

from flows.trial_flow import TrialFlow
from utils.logger import handle_error

EXIT_OK = 0
EXIT_TRIAL_FAILED = 1
EXIT_BAD_INPUTS = 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Run one evolution trial in a subprocess")
    parser.add_argument(
        "--inputs",
        required=True,
        help="TrialState JSON (e.g. '{\"problem_path\": \"problems/velocity.json\", \"mode\": \"sbp\", \"seed\": 7}')",
    )
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")

    try:
        flow = TrialFlow.from_inputs(json.loads(args.inputs))
    except (json.JSONDecodeError, ValidationError) as e:
        handle_error("워커입력", e, raise_error=False)
        return EXIT_BAD_INPUTS

    try:
        asyncio.run(flow.kickoff_async())
    except Exception:
        # TrialFlow 가 이미 이벤트와 스택을 남겼다
        return EXIT_TRIAL_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
