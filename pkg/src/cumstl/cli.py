"""Command-line front end.

Subcommands ``monitor``, ``synthesize``, ``mpc``, ``smc`` and ``loop``. Exit
status is 0 on success, 2 when the problem is infeasible or SMC does not
converge, and 1 for bad input.

CSV files carry a header row. Trajectories are ``k,t,x1..xn``, policies
``k,u1..um`` and robustness tables ``k,rho,rho_plus,rho_minus``. Floats are
written with ``repr`` so reading a file back yields the same numbers.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .lang import Formula, ParseError, format_formula, horizon, parse
from .mpc import loop_search, mpc_synthesize, verify_loop
from .plant import simulate
from .scenario import Scenario, ScenarioError, load
from .semantics import (Trajectory, TrajectoryTooShortError, UnsupportedFormulaError,
                        cumulative_series, rho_plus_smooth, rho_smooth, robustness_series,
                        sat)
from .smc import bayesian_estimate, closed_loop_trial, mpc_sampler
from .synth import smooth_optimization

log = logging.getLogger("cumstl")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2
MODES = ("bool", "rho", "rho+", "rho-", "srho", "srho+")


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    return repr(float(v))


def write_trajectory(path, traj: Trajectory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "t"] + [f"x{i + 1}" for i in range(traj.n)])
        for k, t in enumerate(traj.times):
            w.writerow([k, _fmt(t)] + [_fmt(v) for v in traj.values[:, k]])


def write_policy(path, policy) -> None:
    u = np.atleast_2d(np.asarray(policy, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k"] + [f"u{i + 1}" for i in range(u.shape[0])])
        for k in range(u.shape[1]):
            w.writerow([k] + [_fmt(v) for v in u[:, k]])


def read_trajectory(path) -> Trajectory:
    """Load a ``k,t,x1..xn`` CSV; ``dt`` comes from the time column."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise InputError(f"{path}: {e.strerror}") from None
    if not rows:
        raise InputError(f"{path}: empty file")
    head = [h.strip() for h in rows[0]]
    n = len(head) - 2
    if head[:2] != ["k", "t"] or n < 1 or head[2:] != [f"x{i + 1}" for i in range(n)]:
        raise InputError(f"{path}:1: header must be k,t,x1..xn, got {','.join(head)}")
    data = []
    for line, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != n + 2:
            raise InputError(f"{path}:{line}: expected {n + 2} fields, got {len(row)}")
        try:
            vals = [float(v) for v in row]
        except ValueError as e:
            raise InputError(f"{path}:{line}: {e}") from None
        if vals[0] != len(data):
            raise InputError(f"{path}:{line}: step index {row[0]} out of order")
        data.append(vals)
    if not data:
        raise InputError(f"{path}: no samples")
    arr = np.array(data)
    dt = float(arr[1, 1] - arr[0, 1]) if len(arr) > 1 else 1.0
    try:
        return Trajectory(arr[:, 2:].T, dt if dt > 0 else 1.0)
    except ValueError as e:
        raise InputError(f"{path}: {e}") from None


def robustness_table(phi: Formula, traj: Trajectory) -> list[tuple]:
    """Rows ``(k, rho, rho_plus, rho_minus)``; cumulative columns are None for
    formulas without a cumulative semantics."""
    r = robustness_series(phi, traj)
    try:
        pos, neg = cumulative_series(phi, traj)
    except UnsupportedFormulaError:
        pos = neg = [None] * len(r)
    return [(k, float(r[k]), pos[k], neg[k]) for k in range(len(r))]


def write_robustness(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "rho", "rho_plus", "rho_minus"])
        for k, r, p, m in rows:
            w.writerow([k, _fmt(r), "" if p is None else _fmt(p), "" if m is None else _fmt(m)])


def monitor_value(phi: Formula, traj: Trajectory, mode: str, k: int = 0, beta: float = 10.0):
    if mode == "bool":
        return sat(phi, traj, k).value
    if mode == "srho":
        return rho_smooth(phi, traj, k, beta)
    if mode == "srho+":
        return rho_plus_smooth(phi, traj, k, beta)
    rows = robustness_table(phi, traj)
    if k >= len(rows):
        raise TrajectoryTooShortError(f"k={k} leaves no full window in the trace")
    col = {"rho": 1, "rho+": 2, "rho-": 3}[mode]
    v = rows[k][col]
    if v is None:
        raise UnsupportedFormulaError("formula has no cumulative robustness")
    return float(v)


def _show(v) -> str:
    return v if isinstance(v, str) else repr(float(v))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _scenario(args) -> Scenario:
    sc = load(args.scenario)
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    if getattr(args, "beta", None) is not None:
        sc = sc.with_beta(args.beta)
    return sc


def _outdir(args, sc: Scenario | None) -> Path:
    out = Path(args.out) if args.out else (sc.out if sc is not None else Path("."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_summary(out: Path, data: dict) -> None:
    (out / "summary.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _check_summary(phi: Formula, traj: Trajectory) -> dict:
    k, r, p, m = robustness_table(phi, traj)[0]
    return {"formula": format_formula(phi), "rho": r, "rho_plus": p, "rho_minus": m}


def cmd_monitor(args) -> int:
    if args.formula is None and args.scenario is None:
        raise InputError("give --formula or --scenario")
    traces = [read_trajectory(p) for p in args.trace]
    sc = load(args.scenario) if args.scenario else None
    beta = args.beta if args.beta is not None else 10.0
    for path, traj in zip(args.trace, traces):
        phi = sc.formula if args.formula is None else parse(args.formula, traj.n)
        value = monitor_value(phi, traj, args.mode, args.k, beta)
        print(f"{path}\t{args.mode}\t{_show(value)}")
        if args.out:
            out = _outdir(args, None)
            write_robustness(out / f"{Path(path).stem}_robustness.csv",
                             robustness_table(phi, traj))
    return EXIT_OK


def cmd_synthesize(args) -> int:
    sc = _scenario(args)
    out = _outdir(args, sc)
    report = smooth_optimization(sc.formula, sc.system, sc.gamma, sc.cost, sc.synth)
    write_policy(out / "policy.csv", report.policy)
    write_trajectory(out / "trajectory.csv", report.trajectory)
    write_robustness(out / "robustness.csv", robustness_table(sc.formula, report.trajectory))
    summary = {"scenario": sc.name, "seed": sc.seed, **report.summary(),
               "monitor": _check_summary(sc.formula, report.trajectory)}
    _write_summary(out, summary)
    print(f"{sc.name}: {report.status} rho={report.rho:.6g} "
          f"stages={report.iterations} wall={report.wall_time:.1f}s -> {out}")
    return EXIT_OK if report.success else EXIT_INFEASIBLE


def _steps_csv(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "status", "rho", "rho_plus", "iterations", "wall_time"])
        for k, r in enumerate(reports):
            w.writerow([k, r.status, _fmt(r.rho), "" if r.rho_plus is None else _fmt(r.rho_plus),
                        sum(r.iterations.values()), f"{r.wall_time:.3f}"])


def cmd_mpc(args) -> int:
    sc = _scenario(args)
    out = _outdir(args, sc)
    res = mpc_synthesize(sc.formula, sc.system, sc.gamma, sc.cost, sc.mpc)
    _steps_csv(out / "steps.csv", res.reports)
    write_policy(out / "policy.csv", res.policy)
    write_trajectory(out / "trajectory.csv", res.trajectory)
    summary = {"scenario": sc.name, "seed": sc.seed, "status": res.status,
               "failed_step": res.failed_step, "h_m": sc.mpc.h_m, "cost": res.cost,
               "wall_time": round(res.wall_time, 3)}
    if res.success:
        write_robustness(out / "robustness.csv", robustness_table(sc.check, res.trajectory))
        summary["monitor"] = _check_summary(sc.check, res.trajectory)
        print(f"{sc.name}: success over {sc.mpc.h_m + 1} steps, "
              f"rho={summary['monitor']['rho']:.6g} wall={res.wall_time:.1f}s -> {out}")
    else:
        print(f"{sc.name}: infeasible at step {res.failed_step}")
    _write_summary(out, summary)
    return EXIT_OK if res.success else EXIT_INFEASIBLE


def _smc_policy(sc: Scenario):
    if sc.smc_policy == "mpc":
        res = mpc_synthesize(sc.formula, sc.system, sc.gamma, sc.cost, sc.mpc)
        return (res.policy if res.success else None), res.status
    rep = smooth_optimization(sc.formula, sc.system, sc.gamma, sc.cost, sc.synth)
    return (rep.policy if rep.success else None), rep.status


def cmd_smc(args) -> int:
    sc = _scenario(args)
    if sc.noise_std is None:
        raise InputError(f"{sc.source}: scenario has no [noise] section")
    smc = sc.smc
    if args.delta is not None or args.confidence is not None:
        smc = replace(smc, delta=args.delta if args.delta is not None else smc.delta,
                      confidence=args.confidence if args.confidence is not None
                      else smc.confidence)
    out = _outdir(args, sc)
    trials = []
    if sc.smc_trials == "mpc":
        run = mpc_sampler(sc.formula, sc.check, sc.system, sc.gamma, sc.cost, sc.mpc,
                          sc.noise_std)
    else:
        policy, status = _smc_policy(sc)
        if policy is None:
            print(f"{sc.name}: policy synthesis {status}")
            return EXIT_INFEASIBLE
        write_policy(out / "policy.csv", policy)

        def run(s):
            return closed_loop_trial(sc.system, sc.noise_std, policy, sc.check, s, sc.gamma)

    def sampler(s):
        ok = run(s)
        trials.append((len(trials), s, int(ok)))
        return ok

    res = bayesian_estimate(sampler, smc)
    with open(out / "trials.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "seed", "satisfied"])
        w.writerows(trials)
    _write_summary(out, {"scenario": sc.name, "seed": sc.seed, "estimate": res.estimate,
                         "samples": res.samples, "successes": res.successes,
                         "posterior_mass": res.mass, "delta": res.delta,
                         "confidence": smc.confidence, "terminated_by": res.terminated_by,
                         "noise_std": sc.noise_std})
    lo, hi = res.interval
    print(f"{sc.name}: p={res.estimate:.4f} in [{lo:.4f}, {hi:.4f}] "
          f"mass={res.mass:.4f} samples={res.samples} ({res.terminated_by})")
    return EXIT_OK if res.converged else EXIT_INFEASIBLE


def cmd_loop(args) -> int:
    sc = _scenario(args)
    out = _outdir(args, sc)
    res = loop_search(sc.formula, sc.system, sc.gamma, sc.loop, sc.synth)
    summary = {"scenario": sc.name, "seed": sc.seed, "status": res.status, "k": res.k,
               "period": res.period, "residual": res.residual,
               "candidates_tried": res.candidates_tried}
    if res.found:
        traj = res.unroll(sc.system, sc.gamma, sc.loop_periods)
        write_policy(out / "policy.csv", res.policy)
        write_trajectory(out / "trajectory.csv", traj)
        summary["verified"] = verify_loop(sc.formula, res, sc.system, sc.gamma,
                                          sc.loop_periods)
        print(f"{sc.name}: loop k={res.k} K={res.period} residual={res.residual:.3g} "
              f"verified={summary['verified']}")
    else:
        print(f"{sc.name}: no loop found after {res.candidates_tried} candidates")
    _write_summary(out, summary)
    return EXIT_OK if res.found and summary["verified"] else EXIT_INFEASIBLE


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cumstl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario_required=True):
        sp.add_argument("--scenario", required=scenario_required,
                        help="scenario file or bundled scenario name")
        sp.add_argument("--seed", type=_u64)
        sp.add_argument("--out", help="output directory")

    m = sub.add_parser("monitor", help="evaluate a formula on recorded traces")
    common(m, scenario_required=False)
    m.add_argument("--trace", nargs="+", required=True)
    m.add_argument("--formula")
    m.add_argument("--mode", choices=MODES, default="rho")
    m.add_argument("--beta", type=_positive)
    m.add_argument("--k", type=int, default=0)
    m.set_defaults(func=cmd_monitor)

    for name, func, text in (("synthesize", cmd_synthesize, "open-loop policy synthesis"),
                             ("mpc", cmd_mpc, "receding-horizon control"),
                             ("loop", cmd_loop, "search for a repeating policy")):
        sp = sub.add_parser(name, help=text)
        common(sp)
        sp.add_argument("--beta", type=_positive)
        sp.set_defaults(func=func)

    s = sub.add_parser("smc", help="estimate satisfaction probability under noise")
    common(s)
    s.add_argument("--beta", type=_positive)
    s.add_argument("--delta", type=float)
    s.add_argument("--confidence", type=float)
    s.set_defaults(func=cmd_smc)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, ScenarioError, ParseError, TrajectoryTooShortError,
            UnsupportedFormulaError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as e:
        # configuration values rejected by the solver dataclasses
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


__all__ = ["main", "build_parser", "read_trajectory", "write_trajectory", "write_policy",
           "write_robustness", "robustness_table", "monitor_value"]
