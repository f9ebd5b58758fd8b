import os
import logging
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables at import
load_dotenv()

ROOT = Path(__file__).resolve().parents[1]
DATA_DIR = ROOT / "data"
FEEDERS_DIR = DATA_DIR / "feeders"
SCENARIOS_DIR = DATA_DIR / "scenarios"

OUT_DIR = Path(os.getenv("TRACKER_OUT_DIR", str(ROOT / "out")))
RUNS_DIR = OUT_DIR / "runs"
SQLITE_PATH = os.getenv("SQLITE_PATH", "database.sqlite")
LOG_LEVEL = os.getenv("TRACKER_LOG_LEVEL", "INFO").upper()


def default_workers() -> int:
    try:
        return max(1, int(os.getenv("TRACKER_WORKERS", "1")))
    except ValueError:
        return 1


def configure_logging(level: str = "") -> None:
    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
