"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 infeasible synthesis,
4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, TextIO

from . import analysis as an
from . import csvio
from .config import ConfigError, RunConfig, load_config, version_line
from .metrics import capacity, fd_sweep, oscillation_stats, pr_table, ttc_report
from .models import partials_t1, partials_t2
from .ringsim import run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4


def _kv(out: TextIO, key: str, value) -> None:
    if isinstance(value, float):
        value = f"{value:.6f}"
    elif isinstance(value, bool):
        value = "true" if value else "false"
    out.write(f"{key}: {value}\n")


def _report(out: TextIO, rep: an.StabilityReport, prefix: str = "") -> None:
    _kv(out, prefix + "beta1", rep.beta1)
    _kv(out, prefix + "beta2", rep.beta2)
    _kv(out, prefix + "beta3", rep.beta3)
    _kv(out, prefix + "rdc_ok", rep.rdc_ok)
    _kv(out, prefix + "lambda2", rep.lambda2)
    _kv(out, prefix + "classification", rep.classification)


def cmd_stability(cfg: RunConfig, out: TextIO) -> int:
    p = cfg.ovrv
    atk = cfg.attack
    _kv(out, "baseline_lambda2", an.lambda2_ovrv_baseline(p))
    _kv(out, "attack", atk.type)
    if atk.type == "type1":
        _report(out, an.stability_report(*partials_t1(p, atk.delta)))
        iv = an.type1_interval(p, atk.r)
        _kv(out, "delta", atk.delta)
        _kv(out, "r", atk.r)
        _kv(out, "delta_star", iv.delta_star)
        _kv(out, "rejected_root", iv.rejected_root)
        _kv(out, "param_condition_value", iv.param_condition_value)
        _kv(out, "r_required_min", iv.r_min)
        _kv(out, "r_exclusive_max", iv.r_max)
        _kv(out, "interval_feasible", iv.feasible)
        _kv(out, "p_poly", an.p_poly(p, atk.delta))
        _kv(out, "destabilizing", an.type1_destabilizing_check(p, atk.delta, atk.r))
        _kv(out, "degrading", an.type1_degrading_check(p, atk.delta, atk.r))
    elif atk.type == "type2":
        _report(out, an.stability_report(*partials_t2(p, atk.delta1, atk.delta2)))
        v = an.type2_destabilizing_check(p, atk.delta1, atk.delta2, atk.z1, atk.z2)
        _kv(out, "delta1", atk.delta1)
        _kv(out, "delta2", atk.delta2)
        _kv(out, "lambda2_hat", v.lambda2_hat)
        _kv(out, "theta", v.theta_value)
        _kv(out, "bounds_ok", v.bounds_ok)
        _kv(out, "destabilizing", v.destabilizing)
        _kv(out, "degrading", an.type2_degrading_check(p, atk.delta1, atk.delta2, atk.z1, atk.z2))
    else:
        _report(out, an.stability_report(*partials_t1(p, 0.0)))
    return EXIT_OK


def cmd_synthesize(cfg: RunConfig, out: TextIO) -> int:
    p = cfg.ovrv
    req = cfg.attack.synthesis_request()
    res = an.synthesize(p, req)
    _kv(out, "attack", req.attack_type)
    _kv(out, "mode", req.mode)
    _kv(out, "strategy", req.strategy)
    _kv(out, "feasible", res.feasible)
    if not res.feasible:
        _kv(out, "reason", res.reason)
        return EXIT_INFEASIBLE
    _kv(out, "candidates", res.n_candidates)
    if req.attack_type == an.TYPE1:
        _kv(out, "delta", res.delta)
        _kv(out, "lambda2_tilde", an.lambda2_tilde(p, res.delta))
        _kv(out, "destabilizing", an.type1_destabilizing_check(p, res.delta, req.r))
        _kv(out, "degrading", an.type1_degrading_check(p, res.delta, req.r))
    else:
        v = an.type2_destabilizing_check(p, res.delta1, res.delta2, req.z1, req.z2)
        _kv(out, "delta1", res.delta1)
        _kv(out, "delta2", res.delta2)
        _kv(out, "lambda2_hat", v.lambda2_hat)
        _kv(out, "theta", v.theta_value)
        _kv(out, "destabilizing", v.destabilizing)
        _kv(out, "degrading", an.type2_degrading_check(p, res.delta1, res.delta2, req.z1, req.z2))
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, out_path: Optional[str], out: TextIO) -> int:
    log = run(cfg.fleet, cfg.sim)
    if out_path is not None:
        try:
            with open(out_path, "w", encoding="utf-8", newline="") as fh:
                csvio.write_trajectory_csv(fh, log, version_line(), cfg.echo())
        except OSError as exc:
            sys.stderr.write(f"error: cannot write {out_path}: {exc}\n")
            return EXIT_IO
    _kv(out, "collisions", len(log.collisions))
    for ev in log.collisions:
        out.write(f"collision: t={ev.time:.6f} follower={ev.follower} spacing={ev.spacing:.6f}\n")
    _kv(out, "end_time", float(log.t[-1]))
    if log.t[-1] >= cfg.sim.warmup:
        osc = oscillation_stats(log, cfg.sim.warmup)
        _kv(out, "speed_std_mean", osc.fleet_mean)
        _kv(out, "speed_std_max", osc.fleet_max)
        rep = pr_table(log, cfg.thresholds, cfg.sim.warmup)
        _ttc_lines(out, rep)
    return EXIT_OK


def _ttc_lines(out: TextIO, rep) -> None:
    _kv(out, "cases", rep.c_total)
    for th, pr, c in zip(rep.thresholds, rep.p_r, rep.c_r):
        out.write(f"p_r[{th:.1f}s]: {pr:.6f}% ({c})\n")


def cmd_fd(cfg: RunConfig, out_path: Optional[str], out: TextIO) -> int:
    points = fd_sweep(cfg.fleet, cfg.sim, cfg.lengths)
    if out_path is not None:
        try:
            with open(out_path, "w", encoding="utf-8", newline="") as fh:
                csvio.write_fd_csv(fh, points, version_line(), cfg.echo())
        except OSError as exc:
            sys.stderr.write(f"error: cannot write {out_path}: {exc}\n")
            return EXIT_IO
    for pt in points:
        out.write(f"L={pt.ring_length:.1f} rho={pt.rho:.6f} vbar={pt.vbar:.6f} q={pt.q:.6f}"
                  f"{' collided' if pt.collided else ''}\n")
    cap = capacity(points)
    _kv(out, "capacity", cap if cap is not None else "none")
    return EXIT_OK


def cmd_ttc(cfg: RunConfig, traj_path: str, out_path: Optional[str], out: TextIO) -> int:
    try:
        with open(traj_path, encoding="utf-8") as fh:
            data = csvio.read_trajectory_csv(fh)
    except OSError as exc:
        sys.stderr.write(f"error: cannot read {traj_path}: {exc}\n")
        return EXIT_IO
    rep = ttc_report(data["t"], data["s"], data["dv"], cfg.thresholds, cfg.sim.warmup)
    if out_path is not None:
        try:
            with open(out_path, "w", encoding="utf-8", newline="") as fh:
                csvio.write_ttc_csv(fh, rep, version_line(), cfg.echo())
        except OSError as exc:
            sys.stderr.write(f"error: cannot write {out_path}: {exc}\n")
            return EXIT_IO
    _ttc_lines(out, rep)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration (defaults to the ring scenario)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. --set attack.delta=0.1 (repeatable)")
    common.add_argument("--quiet", action="store_true", help="suppress the printed summary")

    parser = argparse.ArgumentParser(prog="accattack", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=version_line())
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("stability", parents=[common], help="lambda_2 report for the configured attack")
    sub.add_parser("synthesize", parents=[common], help="grid-synthesize an attack")
    p = sub.add_parser("simulate", parents=[common], help="run the ring simulation")
    p.add_argument("--out", help="trajectory CSV path")
    p = sub.add_parser("fd", parents=[common], help="fundamental-diagram sweep over ring lengths")
    p.add_argument("--out", help="FD CSV path")
    p = sub.add_parser("ttc", parents=[common], help="TTC report from a trajectory CSV")
    p.add_argument("trajectory", help="trajectory CSV written by 'simulate'")
    p.add_argument("--out", help="TTC report CSV path")
    p = sub.add_parser("config", parents=[common], help="print the effective configuration")
    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config, tuple(args.overrides))
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except OSError as exc:
        sys.stderr.write(f"config error: cannot read {args.config}: {exc}\n")
        return EXIT_CONFIG

    out = _NullOut() if args.quiet else sys.stdout
    if args.command == "stability":
        return cmd_stability(cfg, out)
    if args.command == "synthesize":
        return cmd_synthesize(cfg, out)
    if args.command == "simulate":
        return cmd_simulate(cfg, args.out, out)
    if args.command == "fd":
        return cmd_fd(cfg, args.out, out)
    if args.command == "ttc":
        return cmd_ttc(cfg, args.trajectory, args.out, out)
    sys.stdout.write(cfg.dumps())
    return EXIT_OK


class _NullOut:
    def write(self, _s: str) -> int:
        return 0
