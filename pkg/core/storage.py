import glob
import json
import os
import tempfile
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd
from pydantic import ValidationError

from bench.records import RunRecord
from gep.errors import LibraryCacheError, SchemaMismatchError
from gep.genome import SymbolTable
from gep.semantics import SemanticLibrary, build_library, library_from_document, library_to_document
from utils.logger import handle_error, log
from utils.seeding import derive_rng

# ============================================================================
# 원자적 쓰기
# ============================================================================


def atomic_write_text(path, text: str) -> Path:
    """같은 디렉터리의 임시 파일에 쓴 뒤 os.replace 로 교체한다."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(frame: pd.DataFrame, path) -> Path:
    return atomic_write_text(path, frame.to_csv(index=False))


# ============================================================================
# 시행 레코드
# ============================================================================

def record_path(output_dir, record: RunRecord) -> Path:
    return Path(output_dir) / "records" / f"{record.file_stem}.json"


def save_record(output_dir, record: RunRecord) -> Path:
    path = atomic_write_text(record_path(output_dir, record), record.to_json_line())
    log(f"💾 레코드 저장: {path}")
    return path


def read_records(patterns: Sequence[str]) -> List[RunRecord]:
    """glob 패턴의 JSON-lines 레코드 파일을 모두 읽는다."""
    records: List[RunRecord] = []
    for pattern in patterns:
        for name in sorted(glob.glob(pattern)):
            for number, line in enumerate(Path(name).read_text(encoding="utf-8").splitlines(), start=1):
                if not line.strip():
                    continue
                try:
                    records.append(RunRecord.model_validate_json(line))
                except ValidationError as e:
                    raise SchemaMismatchError(f"{name}:{number}: 레코드 형식이 맞지 않습니다\n{e}") from e
    return records


# ============================================================================
# 의미 라이브러리 캐시
# ============================================================================

def save_library(path, library: SemanticLibrary) -> Path:
    text = json.dumps(library_to_document(library), ensure_ascii=False, sort_keys=True, indent=1)
    return atomic_write_text(path, text + "\n")


def load_library(path, table: SymbolTable) -> SemanticLibrary:
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise LibraryCacheError(f"라이브러리 캐시가 손상되었습니다: {path}: {e}") from e
    return library_from_document(document, table)


def library_cache_path(cache: Optional[str], problem: str) -> Optional[Path]:
    """cache 가 디렉터리(또는 확장자 없는 경로)면 문제별 파일을 쓴다."""
    if cache is None:
        return None
    path = Path(cache)
    if path.suffix == ".json":
        return path
    return path / f"{problem}.library.json"


def obtain_library(
    table: SymbolTable,
    head_len: int,
    cap: int,
    seed: int,
    cache: Optional[Path] = None,
    *,
    build: bool = True,
) -> SemanticLibrary:
    """캐시가 있고 (head_len, cap, seed) 가 같으면 읽고, 아니면 (seed 로 결정적으로) 만들어 캐시에 저장한다."""
    if cache is not None and Path(cache).exists():
        cached = load_library(cache, table)
        found = (cached.head_len, cached.cap, cached.seed)
        if found == (head_len, cap, seed):
            return cached
        if not build:
            raise LibraryCacheError(f"라이브러리 캐시 설정 {found} 이 요청 {(head_len, cap, seed)} 과 다릅니다: {cache}")
        log(f"♻️ 라이브러리 캐시 설정이 달라 다시 만듭니다: {cache} {found} → {(head_len, cap, seed)}")
    elif not build:
        raise LibraryCacheError(f"라이브러리 캐시가 없습니다: {cache}")
    library = build_library(table, head_len, cap, derive_rng(seed, "library"))
    library.seed = seed
    if cache is not None:
        try:
            save_library(cache, library)
        except OSError as e:
            handle_error("라이브러리캐시저장", e, raise_error=False, extra={"path": str(cache)})
    return library

