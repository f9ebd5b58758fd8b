#!/usr/bin/env python3
import argparse, json, sys
from pathlib import Path

import numpy as np

from scripts.errors import MisalignedTrajectories, TrackerError
from scripts.trajectory import read_csv


def compare_trajectories(path_a: Path, path_b: Path):
    a_bytes = Path(path_a).read_bytes()
    b_bytes = Path(path_b).read_bytes()
    report = {
        'a': str(path_a),
        'b': str(path_b),
        'identical': a_bytes == b_bytes,
    }
    if report['identical']:
        report['max_abs_diff'] = {}
        return report
    a, b = read_csv(path_a), read_csv(path_b)
    if a.n != b.n or len(a) != len(b):
        raise MisalignedTrajectories(f'{path_a} has {len(a)} rows (n={a.n}), {path_b} has {len(b)} rows (n={b.n})')
    diffs = {
        't': float(np.max(np.abs(a.t - b.t), initial=0.0)),
        'u': float(np.max(np.abs(a.u - b.u), initial=0.0)),
        'v': float(np.max(np.abs(a.V - b.V), initial=0.0)),
        'f': float(np.max(np.abs(a.f - b.f), initial=0.0)),
        's': float(np.max(np.abs(a.s - b.s), initial=0.0)),
        'c': float(np.max(np.abs(a.c - b.c), initial=0.0)),
    }
    report['max_abs_diff'] = diffs
    # first row where the setpoints differ
    rows = np.flatnonzero(np.any(a.u != b.u, axis=1))
    report['first_divergent_t'] = float(a.t[rows[0]]) if rows.size else None
    return report


def main(argv):
    ap = argparse.ArgumentParser(description='Compare two trajectory CSVs and report differences')
    ap.add_argument('a', help='First trajectory CSV')
    ap.add_argument('b', help='Second trajectory CSV')
    ap.add_argument('--report', help='Optional path for a JSON report')
    args = ap.parse_args(argv)

    try:
        report = compare_trajectories(Path(args.a), Path(args.b))
    except TrackerError as e:
        print(f'Error: {e}', file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f'Error: {e}', file=sys.stderr)
        return 2
    text = json.dumps(report, indent=2)
    if args.report:
        Path(args.report).write_text(text, encoding='utf-8')
        print(f'Wrote diff: {args.report}')
    else:
        print(text)
    return 0 if report['identical'] else 1

if __name__ == '__main__':
    raise SystemExit(main(sys.argv[1:]))
