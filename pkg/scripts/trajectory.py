"""Trajectory records and their CSV form."""
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from scripts.errors import IoError, ScenarioLoadError

logger = logging.getLogger(__name__)

FLOAT_FMT = "%.17e"


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    n: int
    t: np.ndarray
    u: np.ndarray
    V: np.ndarray
    f: np.ndarray
    s: np.ndarray
    c: np.ndarray
    status: List[str] = field(default_factory=list)
    oracle_u: Optional[np.ndarray] = None
    oracle_f: Optional[np.ndarray] = None
    err_u: Optional[np.ndarray] = None
    err_f: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.t)

    @property
    def has_errors(self) -> bool:
        return self.err_u is not None and self.err_f is not None

    def oracle_record(self) -> "TrajectoryRecord":
        """The oracle columns as a record of their own."""
        if self.oracle_u is None or self.oracle_f is None:
            raise ScenarioLoadError("record carries no oracle columns")
        nan = np.full(len(self), np.nan)
        return TrajectoryRecord(
            n=self.n, t=self.t, u=self.oracle_u, V=np.full_like(self.V, np.nan), f=self.oracle_f,
            s=nan, c=nan, status=["oracle"] * len(self),
        )

    def p_setpoint(self, node: int) -> np.ndarray:
        return self.u[:, node - 1]

    def q_setpoint(self, node: int) -> np.ndarray:
        return self.u[:, self.n + node - 1]


class TrajectoryBuilder:
    def __init__(self, n: int):
        self.n = n
        self._rows: List[dict] = []

    def __len__(self) -> int:
        return len(self._rows)

    def append(self, t: float, u: np.ndarray, V: np.ndarray, f: float, s: float, c: float,
               status: str = "", oracle_u: Optional[np.ndarray] = None, oracle_f: Optional[float] = None) -> None:
        self._rows.append(dict(t=t, u=np.array(u, dtype=float), V=np.array(V, dtype=float), f=f, s=s, c=c,
                               status=status, oracle_u=oracle_u, oracle_f=oracle_f))

    def build(self) -> TrajectoryRecord:
        n = self.n
        rows = self._rows
        col = lambda key: np.array([r[key] for r in rows], dtype=float)
        with_oracle = bool(rows) and all(r["oracle_u"] is not None for r in rows)
        u = np.array([r["u"] for r in rows]).reshape(len(rows), 2 * n)
        oracle_u = oracle_f = err_u = err_f = None
        if with_oracle:
            oracle_u = np.array([r["oracle_u"] for r in rows]).reshape(len(rows), 2 * n)
            oracle_f = col("oracle_f")
            err_u = np.linalg.norm(u - oracle_u, axis=1)
            err_f = np.abs(col("f") - oracle_f)
        return TrajectoryRecord(
            n=n,
            t=col("t"),
            u=u,
            V=np.array([r["V"] for r in rows]).reshape(len(rows), n),
            f=col("f"),
            s=col("s"),
            c=col("c"),
            status=[r["status"] for r in rows],
            oracle_u=oracle_u,
            oracle_f=oracle_f,
            err_u=err_u,
            err_f=err_f,
        )


def csv_header(n: int, with_errors: bool) -> List[str]:
    cols = ["t"]
    cols += [f"u_p_{i}" for i in range(1, n + 1)]
    cols += [f"u_q_{i}" for i in range(1, n + 1)]
    cols += [f"v_{i}" for i in range(1, n + 1)]
    cols += ["f", "s", "c"]
    if with_errors:
        cols += ["err_u", "err_f"]
    return cols


def export_csv(record: TrajectoryRecord, path: Path) -> Path:
    path = Path(path)
    header = csv_header(record.n, record.has_errors)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as f:
            f.write(",".join(header) + "\n")
            if len(record):
                parts = [record.t[:, None], record.u, record.V, record.f[:, None], record.s[:, None], record.c[:, None]]
                if record.has_errors:
                    parts += [record.err_u[:, None], record.err_f[:, None]]
                np.savetxt(f, np.hstack(parts), fmt=FLOAT_FMT, delimiter=",")
    except OSError as e:
        raise IoError(f"cannot write trajectory {path}: {e}")
    return path


def read_csv(path: Path) -> TrajectoryRecord:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader)
            rows = [[float(v) for v in row] for row in reader if row]
    except (OSError, StopIteration, ValueError) as e:
        raise ScenarioLoadError(f"cannot read trajectory {path}: {e}")
    with_errors = header[-1] == "err_f"
    n = (len(header) - 4 - (2 if with_errors else 0)) // 3
    if header != csv_header(n, with_errors):
        raise ScenarioLoadError(f"{path}: unexpected trajectory header")
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return TrajectoryRecord(
        n=n,
        t=data[:, 0],
        u=data[:, 1:1 + 2 * n],
        V=data[:, 1 + 2 * n:1 + 3 * n],
        f=data[:, 1 + 3 * n],
        s=data[:, 2 + 3 * n],
        c=data[:, 3 + 3 * n],
        status=[""] * len(rows),
        err_u=data[:, 4 + 3 * n] if with_errors else None,
        err_f=data[:, 5 + 3 * n] if with_errors else None,
    )
