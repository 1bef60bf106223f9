"""CSV writers/readers for trajectories, fundamental diagrams and TTC reports.

Every file opens with ``#`` comment lines carrying the tool version and the
effective configuration, followed by an exact header row.  Numbers use fixed
6-decimal formatting so repeated runs produce byte-identical files.
"""

from __future__ import annotations

import csv
from typing import Iterable, Optional, TextIO

import numpy as np

from .metrics import FdPoint, TtcReport, ttc_array
from .ringsim import TrajectoryLog

TRAJECTORY_COLUMNS = ("t", "vehicle_id", "cls", "x", "v", "a", "s", "dv", "ttc")
FD_COLUMNS = ("L", "rho", "vbar", "q", "collided")
TTC_COLUMNS = ("threshold", "p_r", "c_r", "c_total")


def fmt(x: float) -> str:
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6f}"


def _preamble(fh: TextIO, version: str, echo: Optional[str]) -> None:
    fh.write(f"# tool: {version}\n")
    if echo is not None:
        fh.write(f"# config: {echo}\n")


def write_trajectory_csv(fh: TextIO, log: TrajectoryLog, version: str, echo: Optional[str] = None) -> None:
    _preamble(fh, version, echo)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    s = log.spacing()
    dv = log.rel_speed()
    ttc = ttc_array(s, dv)
    for k, t in enumerate(log.t):
        tk = fmt(t)
        for i in range(log.m):
            w.writerow(
                (tk, i, log.classes[i], fmt(log.x[k, i]), fmt(log.v[k, i]), fmt(log.a[k, i]),
                 fmt(s[k, i]), fmt(dv[k, i]), fmt(ttc[k, i]))
            )


def _data_lines(fh: TextIO) -> Iterable[str]:
    return (line for line in fh if not line.startswith("#"))


def read_trajectory_csv(fh: TextIO) -> dict:
    """Parse a trajectory CSV into ``(rows, vehicles)`` arrays keyed by column."""
    reader = csv.reader(_data_lines(fh))
    header = next(reader, None)
    if header is None or tuple(header) != TRAJECTORY_COLUMNS:
        raise ValueError(f"unexpected trajectory header {header!r}")
    rows = list(reader)
    if not rows:
        raise ValueError("trajectory CSV holds no data rows")
    ids = sorted({int(r[1]) for r in rows})
    m = len(ids)
    if len(rows) % m:
        raise ValueError("trajectory CSV rows do not form complete time slices")
    n = len(rows) // m
    out = {}
    for j, col in enumerate(TRAJECTORY_COLUMNS):
        if col in ("vehicle_id", "cls"):
            continue
        out[col] = np.array([float(r[j]) for r in rows]).reshape(n, m)
    out["t"] = out["t"][:, 0]
    out["cls"] = tuple(r[2] for r in rows[:m])
    return out


def write_fd_csv(fh: TextIO, points: Iterable[FdPoint], version: str, echo: Optional[str] = None) -> None:
    _preamble(fh, version, echo)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(FD_COLUMNS)
    for p in points:
        w.writerow((fmt(p.ring_length), fmt(p.rho), fmt(p.vbar), fmt(p.q), int(p.collided)))


def write_ttc_csv(fh: TextIO, report: TtcReport, version: str, echo: Optional[str] = None) -> None:
    _preamble(fh, version, echo)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TTC_COLUMNS)
    for th, p, c in zip(report.thresholds, report.p_r, report.c_r):
        w.writerow((fmt(th), fmt(p), c, report.c_total))
