import os
import traceback
from datetime import datetime, timezone
from typing import Any, Dict, Optional

from gep.errors import GepError, OperationFailed


def _stamp() -> str:
    """UTC 시각과 PID. 병렬 워커 출력이 한 콘솔에 섞여도 구분된다."""
    now = datetime.now(timezone.utc).strftime("%Y-%m-%d %H:%M:%S.%f")[:-3]
    return f"[{now}Z pid={os.getpid()}]"


def log(message: str, *, context: Optional[Dict[str, Any]] = None) -> None:
    line = f"📝 {_stamp()} {message}"
    print(f"{line} | {context}" if context else line, flush=True)


def handle_error(operation: str, error: Exception, raise_error: bool = True, extra: Optional[Dict[str, Any]] = None) -> None:
    """오류 보고. raise_error 면 도메인 예외로 다시 던진다."""
    lines = [f"❌ {_stamp()} [{operation}] {type(error).__name__}: {error}"]
    if extra:
        lines.append(f"🔎 컨텍스트: {extra}")
    stack = traceback.format_exc()
    if stack.strip() != "NoneType: None":
        lines.append(f"📄 스택:\n{stack}")
    print("\n".join(lines), flush=True)
    if not raise_error:
        return
    # 도메인 예외는 타입을 유지해서 호출자가 구분할 수 있게 한다
    if isinstance(error, GepError):
        raise error
    raise OperationFailed(f"{operation} 실패: {error}") from error
