"""Safety and efficiency metrics computed from trajectory logs."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .ringsim import FleetConfig, SimConfig, TrajectoryLog, run

DEFAULT_THRESHOLDS = (1.5, 2.0, 2.5, 3.0, 3.5, 4.0)
DEFAULT_LENGTHS = tuple(float(L) for L in range(700, 2801, 100))


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class TtcReport:
    thresholds: tuple
    p_r: tuple  # percentages
    c_r: tuple
    c_total: int


@dataclass(frozen=True)
class FdPoint:
    ring_length: float
    rho: float  # veh/m
    vbar: float  # m/s
    q: float  # veh/s
    collided: bool = False


@dataclass(frozen=True)
class OscillationStats:
    per_vehicle_std: np.ndarray
    fleet_mean: float
    fleet_max: float


def ttc(s: float, dv: float) -> float:
    """Time to collision with the leader; ``inf`` unless closing (``dv < 0``)."""
    if not s > 0:
        raise MetricsError(f"TTC undefined for nonpositive spacing s={s!r}")
    if dv >= 0:
        return math.inf
    return s / -dv


def ttc_array(s: np.ndarray, dv: np.ndarray) -> np.ndarray:
    """Vectorized TTC.  Overlapping vehicles (``s <= 0``) count as TTC 0."""
    s = np.asarray(s, dtype=float)
    dv = np.asarray(dv, dtype=float)
    closing = dv < 0
    out = np.full(np.broadcast(s, dv).shape, np.inf)
    with np.errstate(over="ignore"):
        np.divide(s, -dv, out=out, where=closing)
    return np.where(s <= 0, 0.0, out)


def _post_warmup(log: TrajectoryLog, warmup: float) -> np.ndarray:
    return _keep_rows(log.t, warmup)


def _keep_rows(t: np.ndarray, warmup: float) -> np.ndarray:
    if t.size == 0:
        raise MetricsError("empty trajectory log")
    keep = t >= warmup
    if not keep.any():
        raise MetricsError(f"no logged rows at or after warmup={warmup}")
    return keep


def pr_ratio(log: TrajectoryLog, threshold: float, warmup: float = 60.0) -> float:
    """Percentage of (vehicle, sampled row) cases after warm-up with TTC below ``threshold``."""
    return pr_table(log, (threshold,), warmup).p_r[0]


def pr_table(log: TrajectoryLog, thresholds: Sequence[float] = DEFAULT_THRESHOLDS, warmup: float = 60.0) -> TtcReport:
    return ttc_report(log.t, log.spacing(), log.rel_speed(), thresholds, warmup)


def ttc_report(
    t: np.ndarray,
    s: np.ndarray,
    dv: np.ndarray,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    warmup: float = 60.0,
) -> TtcReport:
    """Dangerous-risk ratios from row-major ``(rows, vehicles)`` spacing and relative speed."""
    thresholds = tuple(float(x) for x in thresholds)
    if any(not x > 0 for x in thresholds):
        raise MetricsError("thresholds must be positive")
    if list(thresholds) != sorted(thresholds):
        raise MetricsError("thresholds must be sorted ascending")
    keep = _keep_rows(np.asarray(t), warmup)
    cases = ttc_array(np.asarray(s)[keep], np.asarray(dv)[keep]).ravel()
    c_r = tuple(int(np.count_nonzero(cases < x)) for x in thresholds)
    p_r = tuple(100.0 * c / cases.size for c in c_r)
    return TtcReport(thresholds, p_r, c_r, int(cases.size))


def mean_speed(log: TrajectoryLog, warmup: float = 60.0) -> float:
    keep = _post_warmup(log, warmup)
    return float(log.v[keep].mean())


def oscillation_stats(log: TrajectoryLog, warmup: float = 60.0) -> OscillationStats:
    keep = _post_warmup(log, warmup)
    std = log.v[keep].std(axis=0)
    return OscillationStats(std, float(std.mean()), float(std.max()))


def fd_point(fc: FleetConfig, sc: SimConfig) -> FdPoint:
    log = run(fc, sc)
    rho = fc.m / fc.ring_length
    # a run halted before warm-up ends still gets a (flagged) speed estimate
    vbar = mean_speed(log, sc.warmup) if log.t[-1] >= sc.warmup else float(log.v.mean())
    return FdPoint(fc.ring_length, rho, vbar, rho * vbar, log.collided)


def _fd_job(args):
    return fd_point(*args)


def fd_sweep(
    fc: FleetConfig,
    sc: SimConfig,
    lengths: Sequence[float] = DEFAULT_LENGTHS,
    workers: int = 1,
) -> list:
    """One simulation per ring length; points sorted by density."""
    jobs = [(replace(fc, ring_length=float(L)), sc) for L in lengths]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            points = list(ex.map(_fd_job, jobs))
    else:
        points = [_fd_job(j) for j in jobs]
    return sorted(points, key=lambda p: p.rho)


def capacity(points: Sequence[FdPoint]) -> Optional[float]:
    """Maximum flow over points whose run did not end in a collision."""
    flows = [p.q for p in points if not p.collided]
    return max(flows) if flows else None
