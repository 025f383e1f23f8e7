"""Random labeled graphs and the reachability benchmark.

Graphs come from the ``mt19937-fisher-yates-v1`` generator:

* ``random.Random(seed)`` (Mersenne Twister) is the only entropy source, and
  only its ``random()`` method is called, so streams are stable across
  Python versions.
* Candidate edges are all ordered pairs ``(u, v)`` with ``u != v`` in
  lexicographic order.  A partial Fisher-Yates shuffle picks the first ``m``
  of them, ``j = i + floor(random() * (N - i))``.
* The chosen edges are sorted and labels are drawn edge by edge in that order.

Changing any of this changes every golden file, so bump the version tag.
"""

from __future__ import annotations

import csv
import io
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import astuple, dataclass, fields
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence

from smtlog import terms as T
from smtlog.datalog import EvalConfig, QueryCache, evaluate, parse_program
from smtlog.errors import SolverError, SoundnessError, SpecError
from smtlog.smtlib import serialize_term
from smtlog.solver import (Metrics, SolverConfig, Strategy, open_reference_session, open_session)

GENERATOR = "mt19937-fisher-yates-v1"
LOGICS = ("bool", "lia", "bv8")
SMT_LOGIC = {"bool": "QF_UF", "lia": "QF_LIA", "bv8": "QF_BV"}
LIA_OPS = ("<", "<=", ">", ">=", "=")
LIA_CONST = 3


@dataclass(frozen=True)
class GraphSpec:
    seed: int = 0
    nodes: int = 50
    avg_out_degree: float = 3
    label_logic: str = "lia"
    label_vars: int = 4

    def __post_init__(self):
        if self.nodes < 1:
            raise SpecError("nodes must be positive")
        if self.avg_out_degree <= 0:
            raise SpecError("avg_out_degree must be positive")
        if self.label_logic not in LOGICS:
            raise SpecError(f"label_logic must be one of {LOGICS}")
        if self.label_vars < 1:
            raise SpecError("label_vars must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise SpecError("seed must fit in 64 bits")

    @property
    def edge_count(self) -> int:
        # exact rational rounding, half to even like round()
        return round(Fraction(str(self.avg_out_degree)) * self.nodes)

    @property
    def graph_id(self) -> str:
        return f"{self.label_logic}-n{self.nodes}-d{self.avg_out_degree:g}-v{self.label_vars}-s{self.seed}"


DEFAULT_SPEC = GraphSpec()
DEFAULT_MAX_PATH_LEN = 8


@dataclass(frozen=True)
class Graph:
    spec: GraphSpec
    edges: tuple  # (src, dst, label term), sorted by (src, dst)

    @property
    def variables(self) -> list:
        seen = {}
        for _, _, t in self.edges:
            for name, sort in T.free_vars(t):
                seen[name] = sort
        return sorted(seen.items())


def _pick(rng, n):
    return int(rng.random() * n)


def _pool(spec: GraphSpec):
    sort = {"bool": T.BOOL, "lia": T.INT, "bv8": T.bitvec(8)}[spec.label_logic]
    return [T.var(f"v{i}", sort) for i in range(spec.label_vars)]


def _bool_literal(rng, v):
    return v if rng.random() < 0.5 else T.not_(v)


def _label(rng, spec: GraphSpec, pool):
    logic = spec.label_logic
    if logic == "bool":
        if len(pool) >= 2 and rng.random() < 0.5:
            i = _pick(rng, len(pool))
            j = _pick(rng, len(pool) - 1)
            if j >= i:
                j += 1
            return T.or_(_bool_literal(rng, pool[i]), _bool_literal(rng, pool[j]))
        return _bool_literal(rng, pool[_pick(rng, len(pool))])
    v = pool[_pick(rng, len(pool))]
    if logic == "lia":
        op = LIA_OPS[_pick(rng, len(LIA_OPS))]
        c = _pick(rng, 2 * LIA_CONST + 1) - LIA_CONST
        return T.mk_term(op, [v, T.int_const(c)])
    op = "bvult" if rng.random() < 0.5 else "bvule"
    c = T.bv_const(_pick(rng, 256), 8)
    args = [v, c] if rng.random() < 0.5 else [c, v]
    return T.mk_term(op, args)


def gen_graph(spec: GraphSpec) -> Graph:
    n = spec.nodes
    total = n * (n - 1)
    m = spec.edge_count
    if m > total:
        raise SpecError(f"{m} edges requested but only {total} non-self-loop pairs exist on {n} nodes")
    rng = random.Random(spec.seed)
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    for i in range(m):
        j = i + _pick(rng, total - i)
        pairs[i], pairs[j] = pairs[j], pairs[i]
    chosen = sorted(pairs[:m])
    pool = _pool(spec)
    edges = tuple((u, v, _label(rng, spec, pool)) for u, v in chosen)
    return Graph(spec, edges)


def reachability_rules(max_path_len: int = DEFAULT_MAX_PATH_LEN) -> str:
    """Simple paths of at most ``max_path_len`` edges whose labels are jointly satisfiable.

    ``path(X, Y, Labels, Visited)``: labels are kept root first and the
    visited list newest first.
    """
    return (
        "rel edge(int, int, smt_bool).\n"
        "rel path(int, int, smt_list, list).\n"
        "path(X, Y, L, V) :- edge(X, Y, F), L := [F], V := [Y, X], is_sat(L).\n"
        f"path(X, Z, L2, V2) :- path(X, Y, L, V), len(L) < {max_path_len}, edge(Y, Z, F),\n"
        "    not_member(Z, V), L2 := snoc(L, F), V2 := cons(Z, V), is_sat(L2).\n"
    )


def graph_facts(graph: Graph) -> str:
    return "".join(f"edge({u}, {v}, #smt{{{serialize_term(t)}}}).\n" for u, v, t in graph.edges)


def program_text(graph: Graph, max_path_len: int = DEFAULT_MAX_PATH_LEN) -> str:
    s = graph.spec
    head = (f"% generator {GENERATOR} seed={s.seed} nodes={s.nodes} avg_out_degree={s.avg_out_degree:g} "
            f"label_logic={s.label_logic} label_vars={s.label_vars} max_path_len={max_path_len}\n")
    return head + reachability_rules(max_path_len) + graph_facts(graph)


def feasible_paths(database) -> frozenset:
    """Node sequences of derived paths, root first."""
    return frozenset(tuple(reversed(v)) for _, _, _, v in database["path"])


# -- rows and CSV -----------------------------------------------------------


@dataclass
class RunRow:
    graph_id: str
    strategy: str
    order: str
    checks: int = 0
    asserts: int = 0
    pushes: int = 0
    pops: int = 0
    cache_hits: int = 0
    sat: int = 0
    unsat: int = 0
    unknown: int = 0
    solver_wall_ns: int = 0
    total_wall_ns: int = 0
    mean_common_prefix: float = 0.0
    error: str = ""

    @classmethod
    def from_metrics(cls, graph_id, strategy, order, m: Metrics) -> "RunRow":
        return cls(graph_id, strategy, order, m.checks, m.asserts, m.pushes, m.pops, m.cache_hits,
                   m.sat, m.unsat, m.unknown, m.solver_wall_ns, m.total_wall_ns, m.mean_common_prefix)

    def counters(self) -> tuple:
        """Every column except wall times."""
        return tuple(getattr(self, f.name) for f in fields(self) if not f.name.endswith("_wall_ns"))


COLUMNS = [f.name for f in fields(RunRow)]


def emit_csv(rows: Iterable[RunRow], path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in astuple(r)])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            f.write(text)
    return text


def read_csv(source) -> List[RunRow]:
    if isinstance(source, str) and "\n" not in source:
        with open(source, newline="", encoding="utf-8") as f:
            text = f.read()
    else:
        text = source
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != COLUMNS:
        raise ValueError(f"unexpected CSV header {header}")
    types = [f.type for f in fields(RunRow)]
    rows = []
    for rec in reader:
        vals = []
        for v, ty in zip(rec, types):
            vals.append(int(v) if ty in (int, "int") else float(v) if ty in (float, "float") else v)
        rows.append(RunRow(*vals))
    return rows


# -- runner -----------------------------------------------------------------


class _FaultInjector:
    """Session proxy that kills the solver process after a number of checks."""

    def __init__(self, session, kill_after: int):
        self._s = session
        self._left = kill_after

    @property
    def metrics(self):
        return self._s.metrics

    def check(self, query):
        self._left -= 1
        if self._left == 0:
            self._s.backend.kill()
        return self._s.check(query)

    def get_model(self, query):
        return self._s.get_model(query)

    def close(self):
        return self._s.close()


@dataclass
class CellResult:
    row: RunRow
    paths: Optional[frozenset]
    metrics: Optional[Metrics] = None


def _open(strategy, solver: Optional[SolverConfig], reference_backend: bool, logic: str):
    if reference_backend:
        return open_reference_session(strategy)
    cfg = solver or SolverConfig()
    if cfg.logic == "ALL":
        cfg = SolverConfig(command=cfg.command, logic=logic, timeout_ms=cfg.timeout_ms,
                           restart_on_crash=cfg.restart_on_crash, stderr_log=cfg.stderr_log)
    return open_session(cfg, strategy)


def run_cell(program, spec: GraphSpec, strategy, order: str, solver=None, reference_backend=False,
             kill_after: Optional[int] = None) -> CellResult:
    strategy = Strategy(strategy)
    session = None
    try:
        session = _open(strategy, solver, reference_backend, SMT_LOGIC[spec.label_logic])
        target = _FaultInjector(session, kill_after) if kill_after else session
        result = evaluate(program, target, EvalConfig(order=order), QueryCache())
        row = RunRow.from_metrics(spec.graph_id, strategy.value, order, result.metrics)
        return CellResult(row, feasible_paths(result.database), result.metrics)
    except SolverError as e:
        if session is None:
            raise
        row = RunRow(spec.graph_id, strategy.value, order, error=f"{type(e).__name__}: {e}")
        return CellResult(row, None)
    finally:
        if session is not None:
            session.close()


def run_benchmark(spec: GraphSpec = DEFAULT_SPEC, strategies: Sequence = tuple(Strategy),
                  orders: Sequence[str] = ("dfs", "bfs"), solver: Optional[SolverConfig] = None,
                  reference_backend: bool = False, max_path_len: int = DEFAULT_MAX_PATH_LEN,
                  parallel_cells: bool = False, kill_after: Optional[int] = None,
                  return_paths: bool = False):
    """Run every (strategy, order) cell on one generated graph.

    A cell whose solver dies for good becomes a row with ``error`` set.  If
    two completed cells disagree on the feasible-path set, SoundnessError is
    raised before any row is returned.
    """
    program = parse_program(program_text(gen_graph(spec), max_path_len))
    cells = [(Strategy(s), o) for s in _ordered(strategies, [x.value for x in Strategy])
             for o in _ordered(orders, ["dfs", "bfs"])]

    def one(cell):
        return run_cell(program, spec, cell[0], cell[1], solver, reference_backend, kill_after)

    if parallel_cells and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=len(cells)) as pool:
            results = list(pool.map(one, cells))
    else:
        results = [one(c) for c in cells]
    done = [r for r in results if r.paths is not None]
    for r in done[1:]:
        if r.paths != done[0].paths:
            a, b = done[0].row, r.row
            raise SoundnessError(
                f"feasible paths differ between {a.strategy}/{a.order} ({len(done[0].paths)}) "
                f"and {b.strategy}/{b.order} ({len(r.paths)}) on {spec.graph_id}")
    rows = [r.row for r in results]
    if return_paths:
        return rows, (done[0].paths if done else None)
    return rows


def _ordered(selected, canonical):
    sel = {getattr(s, "value", s) for s in selected}
    unknown = sel - set(canonical)
    if unknown:
        raise ValueError(f"unknown choice(s): {sorted(unknown)}")
    return [c for c in canonical if c in sel]
