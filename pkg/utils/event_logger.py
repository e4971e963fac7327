import json
import os
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional
import logging

from utils.logger import handle_error, log

logger = logging.getLogger(__name__)

EVENTS_FILE = "events.jsonl"


def _jsonable(value: Any) -> Any:
    # numpy 스칼라/배열
    if hasattr(value, "item") and getattr(value, "ndim", None) == 0:
        return value.item()
    if hasattr(value, "tolist"):
        return value.tolist()
    return str(value)


class EventLogger:
    """시행 이벤트를 ``<output_dir>/events.jsonl`` 에 한 줄씩 추가한다."""

    def __init__(self, output_dir: str, echo: bool = False):
        """이벤트 로거 초기화 및 출력 디렉터리 보장"""
        self.path = Path(output_dir) / EVENTS_FILE
        self.echo = echo
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            logger.debug("🎯 Event Logger 초기화 완료: %s", self.path)
        except Exception as e:
            handle_error("EventLogger초기화", e, raise_error=True)

    def _sanitize_data(self, data: Any) -> Any:
        """NULL 문자 제거, inf/NaN 을 None 으로"""
        if isinstance(data, str):
            return data.replace('\u0000', '')
        elif isinstance(data, float):
            return data if data == data and abs(data) != float("inf") else None
        elif isinstance(data, dict):
            return {k: self._sanitize_data(v) for k, v in data.items()}
        elif isinstance(data, (list, tuple)):
            return [self._sanitize_data(item) for item in data]
        else:
            return data

    def emit_event(self, event_type: str, data: Dict[str, Any], job_id: Optional[str] = None) -> None:
        """이벤트 기록 (비치명: 실패해도 시행은 계속된다)"""
        try:
            event_record = {
                "id": str(uuid.uuid4()),
                "job_id": job_id or str(uuid.uuid4()),
                "event_type": event_type,
                "pid": os.getpid(),
                "data": self._sanitize_data(data),
                "timestamp": datetime.now(timezone.utc).isoformat(),
            }
            line = json.dumps(event_record, ensure_ascii=False, default=_jsonable)
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(line + "\n")
            if self.echo:
                log(f"[{event_type}] {(job_id or 'unknown')[:40]}")
        except Exception as e:
            handle_error("이벤트발행", e, raise_error=False, extra={"event_type": event_type})
