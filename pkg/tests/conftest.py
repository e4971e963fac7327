import os
from pathlib import Path

import numpy as np
import pytest
from dotenv import load_dotenv

from gep.dimension import parse_unit
from gep.genome import SymbolTable

PROJECT_ROOT = Path(__file__).resolve().parent.parent
PROBLEMS_DIR = PROJECT_ROOT / "problems"


def pytest_configure():
    # test 환경으로 강제 설정
    os.environ['ENV'] = 'test'
    # .env.test 로드(override=True 로 덮어쓰기)
    load_dotenv('.env.test', override=True)


@pytest.fixture
def coulomb_table() -> SymbolTable:
    """F = qE 문제의 기호 표 (q, E 와 곱셈/나눗셈/덧셈 계열)"""
    return SymbolTable.build(
        [("q", parse_unit("A*s")), ("E", parse_unit("V/m"))],
        ["+", "-", "*", "/", "sqrt"],
        constant=True,
        literals=[1.0],
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
