import json
import hashlib
from pathlib import Path
from datetime import datetime, timezone
from typing import Dict, Any, Optional

from scripts.errors import IoError
from scripts import settings


def _now_ts() -> str:
    return datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")


def new_run_id(name: str) -> str:
    return f"{_now_ts()}_{name}"


def get_run_dirs(run_id: str, out_dir: Optional[Path] = None) -> Dict[str, Path]:
    base = (Path(out_dir) / "runs" if out_dir else settings.RUNS_DIR) / run_id
    paths = {
        "base": base,
        "history": base / "history.jsonl",
        "metrics": base / "metrics.json",
        "artifacts": base / "artifacts",
    }
    try:
        paths["artifacts"].mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create run directory {base}: {e}")
    return paths


def append_history(run_id: str, event: str, meta: Optional[Dict[str, Any]] = None, out_dir: Optional[Path] = None) -> None:
    d = get_run_dirs(run_id, out_dir)
    rec = {
        "ts": _now_ts(),
        "event": event,
        "meta": meta or {},
    }
    with d["history"].open("a", encoding="utf-8") as f:
        f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def save_metrics(run_id: str, metrics: Dict[str, Any], out_dir: Optional[Path] = None) -> Path:
    d = get_run_dirs(run_id, out_dir)
    try:
        d["metrics"].write_text(json.dumps(metrics, indent=2, ensure_ascii=False, default=_jsonable), encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write {d['metrics']}: {e}")
    return d["metrics"]


def load_metrics(run_id: str, out_dir: Optional[Path] = None) -> Dict[str, Any]:
    d = get_run_dirs(run_id, out_dir)
    if d["metrics"].exists():
        try:
            return json.loads(d["metrics"].read_text(encoding="utf-8"))
        except Exception:
            return {}
    return {}


def compute_fingerprint(text: str) -> str:
    return hashlib.sha256((text or "").encode("utf-8")).hexdigest()[:16]


def artifact_path(run_id: str, filename: str, out_dir: Optional[Path] = None) -> Path:
    return get_run_dirs(run_id, out_dir)["artifacts"] / filename


def _jsonable(obj: Any) -> Any:
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if isinstance(obj, float):
        return obj
    return str(obj)
