#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Feynman 회귀 데이터셋 준비.

PMLB 저장소에서 ``<name>.tsv.gz`` 를 내려받아 CSV 로 바꾸고, 파일별 SHA-256 을
``SHA256SUMS.json`` 에 기록한다. 매니페스트가 이미 있으면 내려받은 파일을 대조한다.
``--units`` 로 단위 표(JSON)를 주면 problems/ 용 명세 파일도 만든다.

    python scripts/prepare_feynman.py feynman_I_12_1 feynman_II_2_42 --units units.json

단위 표 형식::

    {"feynman_I_12_1": {"features": {"mu": null, "Nn": "N"}, "target": "N", "truth": "mu*Nn"}}
"""
import argparse
import hashlib
import io
import json
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
import requests

current_dir = os.path.dirname(os.path.abspath(__file__))
sys.path.append(os.path.dirname(current_dir))

from core.storage import atomic_write_text, write_csv
from gep.errors import ConfigurationError, GepError
from utils.logger import handle_error, log

# ============================================================================
# 설정
# ============================================================================

PMLB_URL = "https://github.com/EpistasisLab/pmlb/raw/master/datasets/{name}/{name}.tsv.gz"
MANIFEST = "SHA256SUMS.json"
TARGET_COLUMN = "target"
TIMEOUT_S = 60


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def read_manifest(directory: Path) -> Dict[str, str]:
    path = directory / MANIFEST
    if not path.exists():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


def write_manifest(directory: Path, manifest: Dict[str, str]) -> Path:
    return atomic_write_text(directory / MANIFEST, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ============================================================================
# 내려받기 / 변환
# ============================================================================

def download(name: str, session: requests.Session) -> bytes:
    response = session.get(PMLB_URL.format(name=name), timeout=TIMEOUT_S)
    response.raise_for_status()
    return response.content


def prepare(name: str, directory: Path, manifest: Dict[str, str], session: requests.Session) -> Path:
    """내려받기 → 체크섬 대조 → CSV 저장 (목표 열은 마지막 열)"""
    raw = download(name, session)
    digest = _sha256(raw)
    expected = manifest.get(name)
    if expected is not None and expected != digest:
        raise ConfigurationError(f"{name}: 체크섬 불일치 (기대 {expected[:12]}, 실제 {digest[:12]})")
    manifest[name] = digest

    frame = pd.read_csv(io.BytesIO(raw), sep="\t", compression="gzip")
    if TARGET_COLUMN not in frame.columns:
        raise ConfigurationError(f"{name}: '{TARGET_COLUMN}' 열이 없습니다: {list(frame.columns)}")
    features = [c for c in frame.columns if c != TARGET_COLUMN]
    path = write_csv(frame[features + [TARGET_COLUMN]], directory / f"{name}.csv")
    log(f"📥 {name}: {len(frame)}행, 특성 {features}", context={"sha256": digest[:16]})
    return path


def problem_document(name: str, csv_path: Path, spec_dir: Path, units: Dict[str, Any]) -> Dict[str, Any]:
    """단위 표 항목으로 ProblemSpec JSON 을 만든다. 특성 순서는 CSV 열 순서를 따른다."""
    columns = list(pd.read_csv(csv_path, nrows=0).columns)
    feature_units = units.get("features", {})
    unknown = set(feature_units) - set(columns)
    if unknown:
        raise ConfigurationError(f"{name}: 데이터에 없는 특성의 단위: {sorted(unknown)}")
    document: Dict[str, Any] = {
        "name": name,
        "difficulty": units.get("difficulty", "medium"),
        "features": [{"name": c, "unit": feature_units.get(c)} for c in columns if c != TARGET_COLUMN],
        "target": {"name": TARGET_COLUMN, "unit": units.get("target")},
        "data": os.path.relpath(csv_path, spec_dir),
    }
    if units.get("truth"):
        document["truth"] = units["truth"]
    return document


# ============================================================================
# 실행
# ============================================================================

def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="Download Feynman datasets and record SHA-256 checksums")
    parser.add_argument("names", nargs="+", help="PMLB 데이터셋 이름 (예: feynman_I_12_1)")
    parser.add_argument("--data-dir", default="data/feynman")
    parser.add_argument("--units", help="데이터셋별 단위 표 JSON (주면 명세 파일도 생성)")
    parser.add_argument("--spec-dir", default="problems/feynman")
    args = parser.parse_args(argv)

    directory = Path(args.data_dir)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = read_manifest(directory)
    units: Dict[str, Any] = json.loads(Path(args.units).read_text(encoding="utf-8")) if args.units else {}
    spec_dir = Path(args.spec_dir)

    failed = 0
    with requests.Session() as session:
        for name in args.names:
            try:
                csv_path = prepare(name, directory, manifest, session)
                if name in units:
                    document = problem_document(name, csv_path, spec_dir, units[name])
                    target = atomic_write_text(spec_dir / f"{name}.json", json.dumps(document, indent=2) + "\n")
                    log(f"📝 명세 작성: {target}")
            except (requests.RequestException, GepError, ValueError) as e:
                failed += 1
                handle_error("데이터셋준비", e, raise_error=False, extra={"name": name})
    write_manifest(directory, manifest)
    log(f"✅ 완료 {len(args.names) - failed}개, 실패 {failed}개")
    return 0 if failed == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
