from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel
from typing import List, Dict, Any, Optional
from collections import Counter
from pathlib import Path
import os
import json
import sqlite3
from datetime import datetime, timezone
import logging

import numpy as np
from dotenv import load_dotenv

# Load environment variables at startup
load_dotenv()

from scripts import settings
from scripts.dynamics import Counters
from scripts.engine import estimate_report, run, run_compare
from scripts.errors import ScenarioError, TrackerError
from scripts.run_utils import artifact_path, new_run_id
from scripts.trajectory import export_csv
from scripts.scenario import load_scenario, parse_scenario, prepare

settings.configure_logging()
logger = logging.getLogger(__name__)

app = FastAPI(title="DER Tracker API", version="1.0.0")

app.add_middleware(
    CORSMiddleware,
    allow_origins=[o for o in os.getenv("TRACKER_CORS_ORIGINS", "http://localhost:3000").split(",") if o],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Database setup
SQLITE_PATH = settings.SQLITE_PATH


def init_db():
    """Initialize SQLite database for run history"""
    conn = sqlite3.connect(SQLITE_PATH)
    cursor = conn.cursor()
    cursor.execute("""
        CREATE TABLE IF NOT EXISTS run_history (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            run_id TEXT NOT NULL,
            scenario TEXT NOT NULL,
            command TEXT NOT NULL,
            status TEXT NOT NULL,
            metrics TEXT,
            ts INTEGER NOT NULL,
            created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
        )
    """)
    conn.commit()
    conn.close()


# Initialize database on startup
init_db()


class SimulateRequest(BaseModel):
    scenario_path: Optional[str] = None
    scenario: Optional[Dict[str, Any]] = None
    horizon_s: Optional[float] = None
    compare: bool = False
    with_oracle: bool = False


class EstimateRequest(BaseModel):
    scenario_path: Optional[str] = None
    scenario: Optional[Dict[str, Any]] = None
    snapshots: int = 20


def _load(scenario_path: Optional[str], scenario: Optional[Dict[str, Any]], horizon_s: Optional[float] = None):
    overrides = {"horizon_s": horizon_s} if horizon_s is not None else None
    if scenario_path:
        return load_scenario(Path(scenario_path), overrides)
    if scenario is None:
        raise HTTPException(status_code=422, detail="Provide scenario_path or an inline scenario")
    raw = {**scenario, **(overrides or {})}
    # inline scenarios resolve relative references from the scenarios directory
    return prepare(parse_scenario(raw), settings.SCENARIOS_DIR)


def _http_error(e: TrackerError) -> HTTPException:
    if isinstance(e, ScenarioError):
        return HTTPException(status_code=422, detail=str(e))
    return HTTPException(status_code=500, detail=f"{type(e).__name__}: {e}")


@app.get("/health")
async def health_check():
    return {"status": "healthy", "timestamp": datetime.now(timezone.utc).isoformat()}


@app.post("/simulate")
def simulate(request: SimulateRequest):
    """Run one scenario; with compare=True also the oracle and both baselines."""
    name = "inline"
    try:
        sc = _load(request.scenario_path, request.scenario, request.horizon_s)
        name = sc.name
        counters = Counters()
        if request.compare:
            comparison = run_compare(sc, counters=counters)
            record = comparison.records["pc"]
            payload: Dict[str, Any] = {"methods": comparison.summary(), "burn_in_s": comparison.burn_in}
        else:
            record = run(sc, with_oracle=request.with_oracle, counters=counters)
            payload = {}
        payload.update({
            "scenario": sc.name,
            "fingerprint": sc.fingerprint,
            "rows": len(record),
            "final_t": float(record.t[-1]) if len(record) else None,
            "final_u": record.u[-1].tolist() if len(record) else [],
            "v_min": float(np.min(record.V)) if len(record) else None,
            "v_max": float(np.max(record.V)) if len(record) else None,
            "estimator_status": dict(Counter(record.status)),
            "counters": counters.as_dict(),
        })
        run_id = new_run_id(sc.name)
        payload["artifacts"] = {"trajectory": str(export_csv(record, artifact_path(run_id, "trajectory.csv")))}
        save_run(run_id, sc.name, "compare" if request.compare else "simulate", "success", payload)
        return {"status": "success", "run_id": run_id, **payload}
    except HTTPException:
        raise
    except TrackerError as e:
        logger.error(f"Simulation error: {e}")
        save_run(new_run_id(name), name, "simulate", "error", {"error": str(e)})
        raise _http_error(e)


@app.post("/estimate")
def estimate(request: EstimateRequest):
    try:
        sc = _load(request.scenario_path, request.scenario)
        report = estimate_report(sc, snapshots=request.snapshots)
        run_id = new_run_id(sc.name)
        save_run(run_id, sc.name, "estimate", "success", report)
        return {"status": "success", "run_id": run_id, **report}
    except HTTPException:
        raise
    except TrackerError as e:
        logger.error(f"Estimate error: {e}")
        raise _http_error(e)


@app.get("/runs")
async def get_runs(
    scenario: Optional[str] = Query(None, description="Filter by scenario name"),
    limit: int = Query(50, ge=1, le=500),
):
    """List recent runs, newest first"""
    try:
        conn = sqlite3.connect(SQLITE_PATH)
        cursor = conn.cursor()
        query = "SELECT run_id, scenario, command, status, metrics, ts FROM run_history"
        params: List[Any] = []
        if scenario:
            query += " WHERE scenario = ?"
            params.append(scenario)
        query += " ORDER BY id DESC LIMIT ?"
        params.append(limit)
        cursor.execute(query, params)
        rows = cursor.fetchall()
        conn.close()
        return [
            {
                "run_id": r[0],
                "scenario": r[1],
                "command": r[2],
                "status": r[3],
                "metrics": json.loads(r[4]) if r[4] else None,
                "ts": r[5],
            }
            for r in rows
        ]
    except sqlite3.Error as e:
        logger.error(f"History error: {e}")
        raise HTTPException(status_code=500, detail=str(e))


def save_run(run_id: str, scenario: str, command: str, status: str, metrics: Dict[str, Any]) -> None:
    """Save a run summary to history"""
    ts = int(datetime.now(timezone.utc).timestamp() * 1000)
    try:
        conn = sqlite3.connect(SQLITE_PATH)
        cursor = conn.cursor()
        cursor.execute("""
            INSERT INTO run_history (run_id, scenario, command, status, metrics, ts)
            VALUES (?, ?, ?, ?, ?, ?)
        """, (run_id, scenario, command, status, json.dumps(metrics, default=str), ts))
        conn.commit()
        conn.close()
    except sqlite3.Error as e:
        logger.error(f"Failed to save run history: {e}")


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=int(os.getenv("PORT", "8000")))
