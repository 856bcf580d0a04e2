"""Command line entry point: ``delaybp <command> [options]``.

Commands write CSV data and a YAML report into ``--out`` (each file with a
``.meta.json`` sidecar holding versions and wall time) and print the report.

Exit codes: 0 success, 1 invalid network, 2 usage error, 3 I/O error,
4 scenario, dump or solver error.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__, experiments as ex, io, presets
from .capacity import CapacityError
from .engine import check_invariants, stationary_stats
from .presets import Scenario
from .scenario import ScenarioError, load_scenario, with_rate
from .topology import ScheduleCapExceeded, validate_network

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_IO, EXIT_DATA = 0, 1, 2, 3, 4

log = logging.getLogger("delaybp")


class UsageError(Exception):
    pass


def _plain(x):
    """Numpy scalars and arrays to YAML-friendly Python values."""
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    return x


def _emit_report(args, name: str, report: dict, started: float) -> None:
    text = yaml.safe_dump(_plain(report), sort_keys=False, default_flow_style=None)
    sys.stdout.write(text)
    if args.out:
        path = Path(args.out) / f"{name}.yaml"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(f"# schema: delaybp/{name}/v{io.CSV_SCHEMA_VERSION}\n" + text)
        _meta(args, path, started)


def _meta(args, path, started: float) -> None:
    io.write_meta(path, command=args.command, seed=getattr(args, "seed", None),
                  scenario=str(args.scenario) if args.scenario else "preset",
                  wall_seconds=round(time.time() - started, 3))


def _scenario(args, preset=None) -> Scenario:
    if args.scenario:
        return load_scenario(args.scenario)
    if preset is None:
        raise UsageError("--scenario is required for this command")
    return preset()


def _rates(args, sc: Scenario) -> tuple[float, ...]:
    if args.rates is None:
        grid = sc.rates
    else:
        grid = tuple(float(x) for x in args.rates.split(",") if x.strip())
    if not grid:
        raise UsageError("the rate grid is empty")
    return grid


def _out(args, name: str) -> Path | None:
    return Path(args.out) / name if args.out else None


def cmd_validate(args) -> int:
    sc = _scenario(args)
    rep = validate_network(sc.spec)
    print(rep)
    return EXIT_OK if rep.ok else EXIT_INVALID


def cmd_capacity(args) -> int:
    t0 = time.time()
    sc = _scenario(args, presets.table2_scenario)
    cap = ex.scenario_capacity(sc)
    report = {
        "network": sc.spec.name, "direction": cap.direction, "theta": cap.theta,
        "boundary": cap.boundary, "link_duals": cap.link_duals, "psi_flow": cap.psi_flow,
        "psi_queue": cap.psi_queue, "active_links": list(cap.active_links),
        "degenerate": cap.degenerate, "schedules": ex.schedule_count(sc),
    }
    if args.out:
        p = io.write_csv(_out(args, "capacity.csv"), "capacity",
                         ["flow", "direction", "boundary", "psi"],
                         [(f, cap.direction[f], cap.boundary[f], cap.psi_flow[f])
                          for f in range(sc.spec.n_flows)])
        _meta(args, p, t0)
    _emit_report(args, "capacity", report, t0)
    return EXIT_OK


def cmd_simulate(args) -> int:
    t0 = time.time()
    sc = _scenario(args)
    if args.rate is not None:
        sc = with_rate(sc, args.rate)
    trajs = ex.simulate(sc, horizon=args.horizon, reps=args.reps, seed=args.seed,
                        stride=args.stride, jobs=args.jobs)
    st = stationary_stats(trajs, burn_in=args.burn_in)
    report = {
        "network": sc.spec.name, "rates": sc.arrivals.means, "horizon": trajs[0].horizon,
        "replications": len(trajs), "seed": trajs[0].meta["seed"], "kernel": trajs[0].meta["kernel"],
        "burn_in": args.burn_in, "mean_flow_queue": st.mean, "ci_halfwidth": st.ci_halfwidth,
        "variance": st.variance,
    }
    bad = {i: v for i, tr in enumerate(trajs) if (v := check_invariants(tr))}
    report["invariant_violations"] = bad
    if args.out:
        labels = io.flow_labels(sc.spec)
        p = io.write_csv(_out(args, "stats.csv"), "stats",
                         ["replication"] + labels,
                         [[i] + list(row) for i, row in enumerate(st.replication_means)])
        _meta(args, p, t0)
        for i, tr in enumerate(trajs):
            io.save_trajectory(_out(args, f"rep{i:03d}.npz"), tr)
        p = io.export_trajectory_csv(_out(args, "trajectory_rep000.csv"), trajs[0])
        _meta(args, p, t0)
    _emit_report(args, "simulate", report, t0)
    return EXIT_OK if not bad else EXIT_DATA


def cmd_analyze(args) -> int:
    t0 = time.time()
    sc = _scenario(args)
    if not args.dump:
        raise UsageError("--dump is required")
    if not Path(args.dump).exists():
        raise FileNotFoundError(args.dump)
    traj = io.load_trajectory(args.dump, sc.spec)
    if args.rate is not None:
        sc = with_rate(sc, args.rate)
    rep = ex.analyze(sc, traj, n=args.n, burn_in=args.burn_in)
    if args.out:
        p = io.write_csv(_out(args, "analysis.csv"), "analysis", rep.series_header,
                         [[int(r[0])] + list(r[1:]) for r in rep.series])
        _meta(args, p, t0)
    _emit_report(args, "analyze", rep.summary, t0)
    return EXIT_OK


def cmd_table2(args) -> int:
    t0 = time.time()
    sc = _scenario(args, presets.table2_scenario)
    grid = _rates(args, sc)
    rows = ex.rate_sweep(sc, grid, horizon=args.horizon, reps=args.reps, seed=args.seed,
                         jobs=args.jobs, burn_in=args.burn_in)
    f = args.flow if args.flow is not None else sc.spec.n_flows - 1
    header = ["lambda", "sim_mean", "approx", "sim_ci", "approx_computed_boundary"]
    header += [f"sim_{lab}" for lab in io.flow_labels(sc.spec)]
    out = [[r.rate, r.mean[f], r.approx[f], r.ci[f], r.approx_computed[f]] + list(r.mean) for r in rows]
    if args.out:
        p = io.write_csv(_out(args, "table2.csv"), "table2", header, out)
        _meta(args, p, t0)
    report = {"flow": f, "rows": [dict(zip(header, row)) for row in out]}
    _emit_report(args, "table2", report, t0)
    return EXIT_OK


def cmd_table3(args) -> int:
    t0 = time.time()
    sc = _scenario(args, presets.table3_scenario)
    grid = _rates(args, sc)
    rows = ex.rate_sweep(sc, grid, horizon=args.horizon, reps=args.reps, seed=args.seed,
                         jobs=args.jobs, burn_in=args.burn_in, with_approx=False)
    nf = sc.spec.n_flows
    header = (["lambda"] + [f"target_{k}" for k in range(nf)] + [f"obtained_{k}" for k in range(nf)]
              + [f"ci_{k}" for k in range(nf)])
    out = [[r.rate] + list(sc.params.target) + list(r.mean) + list(r.ci) for r in rows]
    if args.out:
        p = io.write_csv(_out(args, "table3.csv"), "table3", header, out)
        _meta(args, p, t0)
    report = {"rows": [dict(zip(header, row)) for row in out]}
    _emit_report(args, "table3", report, t0)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="delaybp", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"delaybp {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, sim=False):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--scenario", help="scenario YAML file")
        p.add_argument("--out", help="output directory")
        if sim:
            p.add_argument("--seed", type=int)
            p.add_argument("--horizon", type=int)
            p.add_argument("--reps", type=int)
            p.add_argument("--jobs", type=int, default=1)
            p.add_argument("--burn-in", type=float, default=0.0, dest="burn_in")
        p.set_defaults(func=fn)
        return p

    add("validate", cmd_validate, "check the network description")
    add("capacity", cmd_capacity, "boundary point and normal along the scenario ray")
    p = add("simulate", cmd_simulate, "run replications and dump trajectories", sim=True)
    p.add_argument("--rate", type=float, help="arrival rate for every flow")
    p.add_argument("--stride", type=int, help="record every k-th slot")
    p = add("analyze", cmd_analyze, "diffusion diagnostics for a trajectory dump")
    p.add_argument("--dump", help="trajectory dump (.npz) written by simulate")
    p.add_argument("--rate", type=float, help="arrival rate the dump was produced with")
    p.add_argument("--n", type=int, help="heavy-traffic index (default: implied by the rate gap)")
    p.add_argument("--burn-in", type=float, default=0.0, dest="burn_in")
    for name, fn, h in (("table2", cmd_table2, "queue approximation sweep"),
                        ("table3", cmd_table3, "per-flow targets sweep")):
        p = add(name, fn, h, sim=True)
        p.add_argument("--rates", help="comma-separated rate grid (default: scenario grid)")
        if name == "table2":
            p.add_argument("--flow", type=int, help="flow index reported in sim_mean (default: last)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        ap.error(str(exc))
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"delaybp: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ScenarioError, io.DumpError, CapacityError, ScheduleCapExceeded, ValueError) as exc:
        print(f"delaybp: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK  # unreachable; ap.error exits


if __name__ == "__main__":
    sys.exit(main())
