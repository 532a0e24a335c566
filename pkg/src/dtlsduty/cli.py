"""Command line front end.

    dtlsduty run config.json [--out report.csv] [--format csv|jsonl] [--parallel N]
    dtlsduty tables [--table 1|2]
    dtlsduty engset --n 5 --r 3 --rho 0.5 [--horizon 20000 --seeds 10]
    dtlsduty trace config.json 3
"""

from __future__ import annotations

import argparse
import sys
from contextlib import contextmanager
from pathlib import Path

from . import analytic, runner
from .config import ConfigError, ScenarioConfig
from .sessions import ClientPopulation, simulate_blocking

EXIT_OK, EXIT_USAGE, EXIT_CONFIG = 0, 2, 3


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def cmd_run(args) -> int:
    cfg = ScenarioConfig.load(args.config)
    rows = runner.sweep(cfg, parallel=args.parallel)
    with _output(args.out) as fh:
        runner.emit(rows, args.format, fh)
    return EXIT_OK


def cmd_tables(args) -> int:
    blocks = []
    if args.table in ("1", "both"):
        blocks.append(("Table 1: single-hop handshake duration (s), rows L, columns C",
                       runner.analytic_rows(ScenarioConfig.from_dict(
                           {"mode": "analytic", "table": "tsch-single-hop"}))))
    if args.table in ("2", "both"):
        blocks.append(("Table 2: multi-hop handshake duration (s), C=1, rows L, columns H",
                       runner.analytic_rows(ScenarioConfig.from_dict(
                           {"mode": "analytic", "table": "tsch-multi-hop"}))))
    with _output(args.out) as fh:
        for i, (title, rows) in enumerate(blocks):
            if len(blocks) > 1:
                fh.write(("\n" if i else "") + f"# {title}\n")
            runner.emit(rows, args.format, fh)
    return EXIT_OK


def cmd_engset(args) -> int:
    rows = []
    for i, rho in enumerate(args.rho):
        q = analytic.EngsetQuery(args.n, args.r, rho)
        row = {"n": args.n, "r": args.r, "rho": rho,
               "time_exact": analytic.engset_time_congestion(q),
               "call_exact": analytic.engset_call_congestion(q)}
        if args.seeds > 0:
            pop = ClientPopulation.from_rho(args.n, rho, args.mu)
            ests = [simulate_blocking(pop, args.r, args.horizon, (args.seed, i, k))
                    for k in range(args.seeds)]
            t = runner.RunStats.from_samples("time", [e.time for e in ests])
            c = runner.RunStats.from_samples("call", [e.call for e in ests])
            row.update({"time_sim": t.mean, "time_sim_ci95": t.ci95 if t.ci95 is not None
                        else ests[0].time_ci95,
                        "call_sim": c.mean, "call_sim_ci95": c.ci95 if c.ci95 is not None
                        else ests[0].call_ci95,
                        "arrivals": sum(e.arrivals for e in ests)})
        rows.append(row)
    with _output(args.out) as fh:
        runner.emit(rows, args.format, fh)
    return EXIT_OK


def cmd_trace(args) -> int:
    cfg = ScenarioConfig.load(args.config)
    if cfg.grid:
        cfg = cfg.with_params(runner.grid_points(cfg.grid)[0])
    trace = runner.trace_replication(cfg, args.rep_index)
    with _output(args.out) as fh:
        trace.dump(fh)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dtlsduty",
                                description="DTLS handshake cost over duty-cycled MAC layers")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario or sweep from a JSON config")
    r.add_argument("config", type=Path)
    r.add_argument("--out", help="output file (default stdout)")
    r.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    r.add_argument("--parallel", type=int, default=1, metavar="N",
                   help="worker processes for replications")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("tables", help="TSCH handshake-duration tables from the closed form")
    t.add_argument("--table", choices=("1", "2", "both"), default="both")
    t.add_argument("--out")
    t.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    t.set_defaults(func=cmd_tables)

    e = sub.add_parser("engset", help="Engset blocking, closed form and Monte Carlo")
    e.add_argument("--n", type=int, default=5)
    e.add_argument("--r", type=int, default=3)
    e.add_argument("--rho", type=float, nargs="+", default=[0.5])
    e.add_argument("--mu", type=float, default=1.0)
    e.add_argument("--horizon", type=float, default=20000.0, help="simulated seconds per seed")
    e.add_argument("--seeds", type=int, default=0, help="Monte Carlo seeds (0: analytic only)")
    e.add_argument("--seed", type=int, default=1)
    e.add_argument("--out")
    e.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    e.set_defaults(func=cmd_engset)

    tr = sub.add_parser("trace", help="dump the event trace of one replication as TSV")
    tr.add_argument("config", type=Path)
    tr.add_argument("rep_index", type=int)
    tr.add_argument("--out")
    tr.set_defaults(func=cmd_trace)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "parallel", 1) < 1:
        print("error: --parallel must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
