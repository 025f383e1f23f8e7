"""Command-line entry point: ``smtlog run|bench|gen``.

Exit codes: 0 success, 1 usage or input error, 2 solver or environment
failure, 3 soundness-check failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from smtlog import bench
from smtlog.datalog import EvalConfig, QueryCache, evaluate, format_value, parse_program
from smtlog.errors import DatalogError, SmtlogError, SolverError, SoundnessError, SpecError
from smtlog.solver import SolverConfig, Strategy, open_reference_session, open_session

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_SOUNDNESS = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _solver_flags(p):
    p.add_argument("--reference-backend", action="store_true",
                   help="use the in-process brute-force backend instead of a solver process")
    p.add_argument("--solver-cmd", help="solver command line (default: $SMTLOG_SOLVER or 'z3 -in')")
    p.add_argument("--timeout-ms", type=int, default=0, help="per-check timeout, 0 for none")


def _spec_flags(p):
    p.add_argument("--seed", type=int, default=bench.DEFAULT_SPEC.seed)
    p.add_argument("--nodes", type=int, default=bench.DEFAULT_SPEC.nodes)
    p.add_argument("--deg", "--avg-out-degree", dest="deg", type=float, default=bench.DEFAULT_SPEC.avg_out_degree)
    p.add_argument("--logic", choices=bench.LOGICS, default=bench.DEFAULT_SPEC.label_logic)
    p.add_argument("--vars", type=int, default=bench.DEFAULT_SPEC.label_vars)
    p.add_argument("--max-path-len", type=int, default=bench.DEFAULT_MAX_PATH_LEN)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="smtlog", description="Datalog over SMT formulas with incremental solving strategies.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    run = sub.add_parser("run", help="evaluate a program and print derived tuples")
    run.add_argument("program", help="program file, '-' for stdin")
    run.add_argument("--strategy", choices=[s.value for s in Strategy], default="csa")
    run.add_argument("--order", choices=["dfs", "bfs"], default="dfs")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--unknown", choices=["false", "true", "error"], default="false")
    run.add_argument("--max-tuples", type=int, default=EvalConfig.max_tuples)
    run.add_argument("--relation", action="append", help="only print this relation (repeatable)")
    run.add_argument("--metrics", action="store_true", help="print solver metrics as JSON on stderr")
    _solver_flags(run)

    b = sub.add_parser("bench", help="run the reachability benchmark on a generated graph")
    _spec_flags(b)
    b.add_argument("--strategy", action="append", choices=[s.value for s in Strategy],
                   help="repeatable; default all")
    b.add_argument("--order", action="append", choices=["dfs", "bfs"], help="repeatable; default both")
    b.add_argument("--csv", help="write rows here instead of stdout")
    b.add_argument("--parallel-cells", action="store_true")
    _solver_flags(b)

    g = sub.add_parser("gen", help="print a generated graph as a runnable program")
    _spec_flags(g)
    g.add_argument("-o", "--output", help="write here instead of stdout")
    return parser


def _solver_config(args, logic="ALL"):
    kw = {"logic": logic, "timeout_ms": args.timeout_ms}
    if args.solver_cmd:
        kw["command"] = args.solver_cmd
    return SolverConfig(**kw)


def _spec(args) -> bench.GraphSpec:
    return bench.GraphSpec(seed=args.seed, nodes=args.nodes, avg_out_degree=args.deg,
                           label_logic=args.logic, label_vars=args.vars)


def _cmd_run(args) -> int:
    text = sys.stdin.read() if args.program == "-" else open(args.program, encoding="utf-8").read()
    program = parse_program(text)
    strategy = Strategy(args.strategy)
    n = max(1, args.workers)
    if args.reference_backend:
        sessions = [open_reference_session(strategy) for _ in range(n)]
    else:
        cfg = _solver_config(args)
        sessions = []
        try:
            for _ in range(n):
                sessions.append(open_session(cfg, strategy))
        except SolverError:
            for s in sessions:
                s.close()
            raise
    try:
        config = EvalConfig(order=args.order, worker_count=n, unknown_policy=args.unknown,
                            max_tuples=args.max_tuples)
        result = evaluate(program, sessions, config, QueryCache())
    finally:
        for s in sessions:
            s.close()
    wanted = args.relation or sorted(program.relations)
    out = sys.stdout
    for name in wanted:
        if name not in program.relations:
            print(f"smtlog: no relation named {name!r}", file=sys.stderr)
            return EXIT_USAGE
        for line in sorted(f"{name}({', '.join(format_value(v) for v in row)})." for row in result.database[name]):
            out.write(line + "\n")
    if args.metrics:
        print(json.dumps(result.metrics.as_dict(), sort_keys=True), file=sys.stderr)
    return EXIT_OK


def _cmd_bench(args) -> int:
    spec = _spec(args)
    solver = None if args.reference_backend else _solver_config(args)
    rows = bench.run_benchmark(spec, strategies=args.strategy or [s.value for s in Strategy],
                               orders=args.order or ["dfs", "bfs"], solver=solver,
                               reference_backend=args.reference_backend, max_path_len=args.max_path_len,
                               parallel_cells=args.parallel_cells)
    if args.csv:
        bench.emit_csv(rows, args.csv)
    else:
        sys.stdout.write(bench.emit_csv(rows))
    return EXIT_SOLVER if any(r.error for r in rows) else EXIT_OK


def _cmd_gen(args) -> int:
    text = bench.program_text(bench.gen_graph(_spec(args)), args.max_path_len)
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    handler = {"run": _cmd_run, "bench": _cmd_bench, "gen": _cmd_gen}[args.command]
    try:
        return handler(args)
    except SoundnessError as e:
        print(f"smtlog: soundness check failed: {e}", file=sys.stderr)
        return EXIT_SOUNDNESS
    except SolverError as e:
        print(f"smtlog: solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except (DatalogError, SpecError) as e:
        print(f"smtlog: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"smtlog: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except SmtlogError as e:
        print(f"smtlog: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
