import json

import numpy as np

from scripts import run_utils


def test_metrics_round_trip(tmp_path):
    run_id = run_utils.new_run_id("two_bus")
    assert run_id.endswith("_two_bus")
    path = run_utils.save_metrics(run_id, {"u": np.array([0.5, 1.0]), "rows": 3}, out_dir=tmp_path)
    assert path == tmp_path / "runs" / run_id / "metrics.json"
    assert run_utils.load_metrics(run_id, out_dir=tmp_path) == {"u": [0.5, 1.0], "rows": 3}


def test_missing_metrics_load_empty(tmp_path):
    assert run_utils.load_metrics("nothing", out_dir=tmp_path) == {}


def test_history_appends(tmp_path):
    run_utils.append_history("r1", "simulate", {"scenario": "a"}, out_dir=tmp_path)
    run_utils.append_history("r1", "compare", out_dir=tmp_path)
    lines = (tmp_path / "runs" / "r1" / "history.jsonl").read_text().splitlines()
    assert [json.loads(x)["event"] for x in lines] == ["simulate", "compare"]


def test_fingerprint_and_artifacts(tmp_path):
    assert run_utils.compute_fingerprint("abc") == run_utils.compute_fingerprint("abc")
    assert len(run_utils.compute_fingerprint("abc")) == 16
    path = run_utils.artifact_path("r2", "trajectory.csv", out_dir=tmp_path)
    assert path.parent.is_dir()
    assert path.name == "trajectory.csv"
