"""
JSON для манифестов, сводок и метаданных модели
"""
from __future__ import annotations

import hashlib
from datetime import date, datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from pydantic import BaseModel

try:
    import orjson
except Exception:
    orjson = None


def _json_default(obj: Any):
    if isinstance(obj, (datetime, date)):
        return obj.isoformat()
    if isinstance(obj, timedelta):
        return obj.total_seconds()
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def to_json_safe(obj: Any) -> Any:
    """Рекурсивно приводит pydantic-модели, numpy и enum к JSON-типам"""
    if isinstance(obj, BaseModel):
        return to_json_safe(obj.model_dump(mode="python"))
    if isinstance(obj, Enum):
        return obj.value
    if obj is None or isinstance(obj, (str, bool, int, float)):
        return obj
    if isinstance(obj, Mapping):
        return {str(k): to_json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set)):
        return [to_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_json_safe(obj.tolist())
    return _json_default(obj)


def dumps(payload: Any) -> bytes:
    safe = to_json_safe(payload)
    if orjson:
        return orjson.dumps(safe, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS)
    import json
    return json.dumps(safe, ensure_ascii=False, indent=2, sort_keys=True,
                      default=_json_default).encode("utf-8")


def save_json(path: Path, payload: Any) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(payload))


def load_json(path: Path) -> Any:
    data = Path(path).read_bytes()
    if orjson:
        return orjson.loads(data)
    import json
    return json.loads(data.decode("utf-8"))


def file_digest(path: Path) -> str:
    """SHA-256 содержимого файла"""
    h = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
