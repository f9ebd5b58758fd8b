#!/usr/bin/env python3
import sys
import json
import logging
import argparse
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List

import numpy as np

from scripts import compare_outputs, settings
from scripts.dynamics import Counters
from scripts.engine import bench, estimate_report, run, run_compare
from scripts.errors import NumericalError, ScenarioError, TrackerError
from scripts.oracle_baselines import compute_metrics
from scripts.profiles import generate_profiles
from scripts.run_utils import append_history, new_run_id, save_metrics
from scripts.scenario import load_scenario
from scripts.trajectory import export_csv

logger = logging.getLogger(__name__)


def write_json(path: Path, payload: Dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, default=str), encoding="utf-8")
    return path


def simulate_one(scenario_path: str, out_dir: str, with_oracle: bool = False) -> Dict[str, Any]:
    sc = load_scenario(Path(scenario_path))
    counters = Counters()
    record = run(sc, with_oracle=with_oracle, counters=counters)
    out = Path(out_dir)
    csv_path = export_csv(record, out / f"{sc.name}.csv")
    metrics: Dict[str, Any] = {
        "scenario": sc.name,
        "fingerprint": sc.fingerprint,
        "rows": len(record),
        "horizon_s": sc.horizon_s,
        "v_min": float(np.min(record.V)) if len(record) else None,
        "v_max": float(np.max(record.V)) if len(record) else None,
        "estimator_status": dict(Counter(record.status)),
        "counters": counters.as_dict(),
    }
    if with_oracle:
        metrics["tracking"] = compute_metrics(record, record.oracle_record()).summary(sc.baselines.burn_in)
    metrics_path = write_json(out / f"{sc.name}.metrics.json", metrics)

    run_id = new_run_id(sc.name)
    save_metrics(run_id, metrics)
    append_history(run_id, "simulate", {"scenario": scenario_path, "csv": str(csv_path)})
    return {"scenario": sc.name, "csv": str(csv_path), "metrics": str(metrics_path), "run_id": run_id}


def stage_simulate(args: argparse.Namespace) -> int:
    workers = args.workers or settings.default_workers()
    paths = [str(Path(p)) for p in args.scenarios]
    if workers > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(simulate_one, paths, [args.out] * len(paths), [args.oracle] * len(paths)))
    else:
        results = [simulate_one(p, args.out, args.oracle) for p in paths]
    for res in results:
        print(f"Wrote {res['csv']}")
        print(f"Wrote {res['metrics']}")
    return 0


def stage_compare(args: argparse.Namespace) -> int:
    sc = load_scenario(Path(args.scenario))
    out = Path(args.out)
    comparison = run_compare(sc, include_fixed=not args.no_fixed)
    for name, record in comparison.records.items():
        print(f"Wrote {export_csv(record, out / f'{sc.name}_{name}.csv')}")
    summary = comparison.summary()
    means = {k: v["mean_err_u"] for k, v in summary.items()}
    payload = {
        "scenario": sc.name,
        "fingerprint": sc.fingerprint,
        "burn_in_s": comparison.burn_in,
        "methods": summary,
        "ordering_pd_dpc_pc": means["primal_dual"] > means["discrete_pc"] > means["pc"],
        "baseline_note": "primal_dual and discrete_pc are simplified variants, sampled and held between samples",
    }
    print(f"Wrote {write_json(out / f'{sc.name}_compare.json', payload)}")
    run_id = new_run_id(sc.name)
    save_metrics(run_id, payload)
    append_history(run_id, "compare", {"scenario": args.scenario})
    return 0


def stage_estimate(args: argparse.Namespace) -> int:
    sc = load_scenario(Path(args.scenario))
    report = estimate_report(sc, snapshots=args.snapshots)
    text = json.dumps(report, indent=2)
    if args.out:
        print(f"Wrote {write_json(Path(args.out) / f'{sc.name}_estimate.json', report)}")
    else:
        print(text)
    return 0


def stage_gen_profiles(args: argparse.Namespace) -> int:
    written = generate_profiles(args.seed, Path(args.out), horizon_s=args.horizon)
    for path in written.values():
        print(f"Wrote {path}")
    return 0


def stage_bench(args: argparse.Namespace) -> int:
    sc = load_scenario(Path(args.scenario))
    report = bench(sc, steps=args.steps)
    print(json.dumps(report, indent=2))
    if not report["within_budget"]:
        logger.warning("Median step %.4fs exceeds the %.3fs budget", report["median_step_s"], report["budget_s"])
    return 0


def stage_diff(args: argparse.Namespace) -> int:
    argv = [args.a, args.b] + (["--report", args.report] if args.report else [])
    return compare_outputs.main(argv)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description="Prediction-correction DER dispatch tracker.")
    p.add_argument("--log-level", default=settings.LOG_LEVEL)
    sub = p.add_subparsers(dest="stage", required=True)

    s = sub.add_parser("simulate", help="Run scenarios and write trajectory CSV + metrics JSON")
    s.add_argument("scenarios", nargs="+", help="Scenario JSON files")
    s.add_argument("--out", default=str(settings.OUT_DIR))
    s.add_argument("--workers", type=int, default=0, help="Concurrent scenario runs (default TRACKER_WORKERS)")
    s.add_argument("--oracle", action="store_true", help="Add oracle error columns")
    s.set_defaults(func=stage_simulate)

    c = sub.add_parser("compare", help="Run PC, oracle and baselines on one scenario")
    c.add_argument("scenario")
    c.add_argument("--out", default=str(settings.OUT_DIR))
    c.add_argument("--no-fixed", action="store_true", help="Skip the fixed-rated-sensitivity run")
    c.set_defaults(func=stage_compare)

    e = sub.add_parser("estimate", help="Estimator-only recovery report")
    e.add_argument("scenario")
    e.add_argument("--snapshots", type=int, default=20)
    e.add_argument("--out")
    e.set_defaults(func=stage_estimate)

    g = sub.add_parser("gen-profiles", help="Write synthetic profile CSVs")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--horizon", type=float, default=60.0)
    g.set_defaults(func=stage_gen_profiles)

    b = sub.add_parser("bench", help="Per-step timing report")
    b.add_argument("scenario")
    b.add_argument("--steps", type=int)
    b.set_defaults(func=stage_bench)

    d = sub.add_parser("diff", help="Compare two trajectory CSVs")
    d.add_argument("a")
    d.add_argument("b")
    d.add_argument("--report")
    d.set_defaults(func=stage_diff)
    return p


def main(argv: List[str]) -> int:
    args = build_parser().parse_args(argv)
    settings.configure_logging(args.log_level)
    try:
        return args.func(args)
    except ScenarioError as e:
        print(f"Scenario error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"Numerical failure: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 2
    except TrackerError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
