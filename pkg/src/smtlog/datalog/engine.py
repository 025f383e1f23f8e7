"""Worklist-driven semi-naive evaluation with solver-backed ``is_sat``.

Every unit of work sits on one worklist: either a freshly derived tuple that
still has to be joined against the rules, or a suspended rule body waiting on
an ``is_sat`` answer.  Taking work from the back of the list (``dfs``) makes
solver queries arrive in pre-order along derivation chains, so consecutive
queries tend to share long prefixes.  Taking it from the front (``bfs``)
gives level order.  The final database is the same either way.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Callable, Iterable, List, Optional, Sequence

from smtlog import terms as T
from smtlog.errors import BudgetExceeded, EvalError, SoundnessError
from smtlog.smtlib import RESULT_SAT, SAT, UNKNOWN, UNSAT, SatResult
from smtlog.solver import Metrics, Session
from smtlog.datalog.program import (Atom, Bind, Call, Compare, Compound, Const, GetModel, IsSat,
                                    ListExpr, NotMember, Program, Rule, Var, Wildcard, expr_vars,
                                    format_value, type_ok)

ORDERS = ("dfs", "bfs")
UNKNOWN_POLICIES = ("false", "true", "error")


@dataclass
class EvalConfig:
    order: str = "dfs"
    max_path_len: Optional[int] = 8
    worker_count: int = 1
    unknown_policy: str = "false"
    max_tuples: int = 1_000_000
    trace: bool = False

    def __post_init__(self):
        if self.order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}, got {self.order!r}")
        if self.unknown_policy not in UNKNOWN_POLICIES:
            raise ValueError(f"unknown_policy must be one of {UNKNOWN_POLICIES}")
        if self.worker_count < 1:
            raise ValueError("worker_count must be at least 1")


# -- expression evaluation --------------------------------------------------


def _as_formula(v, what):
    if isinstance(v, T.Term) and v.sort.is_bool:
        return v
    raise EvalError(f"{what} expects an SMT Bool term, got {format_value(v)}")


def eval_expr(e, env: dict, max_path_len=None):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise EvalError(f"unbound variable {e.name}") from None
    if isinstance(e, ListExpr):
        return tuple(eval_expr(x, env, max_path_len) for x in e.items)
    if isinstance(e, Wildcard):
        raise EvalError("wildcard in an evaluated position")
    args = [eval_expr(a, env, max_path_len) for a in e.args]
    name = e.name
    if name == "cons":
        if not isinstance(args[1], tuple):
            raise EvalError(f"cons onto a non-list {format_value(args[1])}")
        return (args[0],) + args[1]
    if name == "snoc":
        if not isinstance(args[0], tuple):
            raise EvalError("snoc expects a list")
        return args[0] + (args[1],)
    if name == "append":
        if not (isinstance(args[0], tuple) and isinstance(args[1], tuple)):
            raise EvalError("append expects two lists")
        return args[0] + args[1]
    if name == "len":
        if not isinstance(args[0], tuple):
            raise EvalError("len expects a list")
        return len(args[0])
    if name in ("add", "sub"):
        if not all(isinstance(a, int) for a in args):
            raise EvalError(f"{name} expects integers")
        return args[0] + args[1] if name == "add" else args[0] - args[1]
    if name == "smt_and":
        return T.and_(_as_formula(args[0], name), _as_formula(args[1], name))
    if name == "smt_not":
        return T.not_(_as_formula(args[0], name))
    if name == "max_path_len":
        if max_path_len is None:
            raise EvalError("max_path_len is not configured")
        return max_path_len
    return Compound(name, tuple(args))


def match(pattern, value, env: dict, max_path_len=None) -> Optional[dict]:
    """Extend ``env`` so that ``pattern`` equals ``value``; ``None`` on failure."""
    if isinstance(pattern, Wildcard):
        return env
    if isinstance(pattern, Var):
        cur = env.get(pattern.name, _MISSING)
        if cur is _MISSING:
            out = dict(env)
            out[pattern.name] = value
            return out
        return env if _same(cur, value) else None
    if isinstance(pattern, Const):
        return env if _same(pattern.value, value) else None
    if isinstance(pattern, ListExpr):
        if not isinstance(value, tuple) or len(value) != len(pattern.items):
            return None
        for p, v in zip(pattern.items, value):
            env = match(p, v, env, max_path_len)
            if env is None:
                return None
        return env
    if pattern.name == "cons":
        if not isinstance(value, tuple) or not value:
            return None
        env = match(pattern.args[0], value[0], env, max_path_len)
        return None if env is None else match(pattern.args[1], value[1:], env, max_path_len)
    if pattern.evaluated:
        return env if _same(eval_expr(pattern, env, max_path_len), value) else None
    if not isinstance(value, Compound) or value.functor != pattern.name or len(value.args) != len(pattern.args):
        return None
    for p, v in zip(pattern.args, value.args):
        env = match(p, v, env, max_path_len)
        if env is None:
            return None
    return env


_MISSING = object()


def _same(a, b) -> bool:
    # bool is an int subclass; keep the two apart
    return type(a) is type(b) and a == b


def _compare(op, a, b) -> bool:
    if op == "=":
        return _same(a, b)
    if op == "!=":
        return not _same(a, b)
    if not (isinstance(a, int) and isinstance(b, int)):
        raise EvalError(f"ordering comparison {op} needs integers, got {format_value(a)} and {format_value(b)}")
    return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]


def conjunction_of(v) -> List[T.Conjunct]:
    """Canonical conjunct list for an ``is_sat`` argument (term or list of terms)."""
    items = v if isinstance(v, tuple) else (v,)
    return [T.canonicalize(_as_formula(x, "is_sat")) for x in items]


# -- issue order ------------------------------------------------------------


def issue_order(items: Sequence, order: str, parent: Callable = None) -> list:
    """Order a forest of work items the way the worklist would issue them.

    ``parent(item)`` names the item's parent (or ``None``); by default items
    are ``(path, conjuncts)`` pairs and the parent of a path is the path with
    its last element dropped.  Siblings keep their input order.  ``dfs`` is
    pre-order; ``bfs`` is level order.
    """
    if order not in ORDERS:
        raise ValueError(f"order must be one of {ORDERS}")
    if parent is None:
        def parent(item):
            path = tuple(item[0])
            return path[:-1] if len(path) > 1 else None
        def key(item):
            return tuple(item[0])
    else:
        def key(item):
            return item
    by_key = {key(it): it for it in items}
    children: dict = {}
    roots = []
    for it in items:
        p = parent(it)
        if p is not None and p in by_key:
            children.setdefault(p, []).append(it)
        else:
            roots.append(it)
    out = []
    if order == "dfs":
        stack = list(reversed(roots))
        while stack:
            it = stack.pop()
            out.append(it)
            stack.extend(reversed(children.get(key(it), ())))
    else:
        q = deque(roots)
        while q:
            it = q.popleft()
            out.append(it)
            q.extend(children.get(key(it), ()))
    return out


# -- query cache ------------------------------------------------------------


class QueryCache:
    """Verdicts keyed by the set of canonical conjuncts.

    Two queries with the same conjuncts in any order share one entry.  An
    insert that disagrees with a stored definite verdict is a soundness bug
    and raises.
    """

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self._data: dict = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(conjuncts: Iterable[T.Conjunct]) -> tuple:
        return tuple(sorted({c.id for c in conjuncts}))

    def get(self, conjuncts) -> Optional[SatResult]:
        if not self.enabled:
            self.misses += 1
            return None
        k = self.key(conjuncts)
        with self._lock:
            r = self._data.get(k)
            if r is None:
                self.misses += 1
            else:
                self.hits += 1
            return r

    def put(self, conjuncts, result: SatResult) -> SatResult:
        if not self.enabled:
            return result
        k = self.key(conjuncts)
        with self._lock:
            old = self._data.get(k)
            if old is None or old.verdict == UNKNOWN:
                self._data[k] = result
                return result
            if result.verdict != UNKNOWN and old.verdict != result.verdict:
                raise SoundnessError(f"conflicting verdicts {old.verdict} and {result.verdict} for one query")
            return old

    def __len__(self):
        return len(self._data)


def _decide(result: SatResult, policy: str) -> bool:
    if result.verdict == SAT:
        return True
    if result.verdict == UNSAT:
        return False
    if policy == "true":
        return True
    if policy == "error":
        raise EvalError(f"solver answered unknown ({result.reason})")
    return False


def builtin_is_sat(conjuncts: Sequence[T.Conjunct], session: Session, cache: Optional[QueryCache] = None,
                   unknown_policy: str = "false") -> bool:
    """Answer one ``is_sat`` literal through ``cache`` and then ``session``."""
    if not conjuncts:
        return True
    result = cache.get(conjuncts) if cache is not None else None
    if result is None:
        result = session.check(list(conjuncts))
        if cache is not None:
            result = cache.put(conjuncts, result)
    return _decide(result, unknown_policy)


# -- database ---------------------------------------------------------------


class Relation:
    def __init__(self, name, arity):
        self.name = name
        self.arity = arity
        self.rows: list = []
        self._set: set = set()
        self._indexes: dict = {}

    def add(self, row) -> bool:
        if row in self._set:
            return False
        self._set.add(row)
        self.rows.append(row)
        for positions, idx in self._indexes.items():
            idx.setdefault(tuple(row[p] for p in positions), []).append(row)
        return True

    def lookup(self, positions: tuple, key: tuple):
        if not positions:
            return self.rows
        idx = self._indexes.get(positions)
        if idx is None:
            idx = {}
            for r in self.rows:
                idx.setdefault(tuple(r[p] for p in positions), []).append(r)
            self._indexes[positions] = idx
        return idx.get(key, ())

    def __contains__(self, row):
        return row in self._set

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)


class Database:
    """Relation name to set of tuples."""

    def __init__(self, program: Program):
        self.relations = {n: Relation(n, d.arity) for n, d in program.relations.items()}

    def __getitem__(self, name) -> set:
        return set(self.relations[name].rows)

    def tuples(self, name) -> list:
        return list(self.relations[name].rows)

    def as_dict(self) -> dict:
        return {n: set(r.rows) for n, r in self.relations.items()}

    def size(self) -> int:
        return sum(len(r) for r in self.relations.values())


# -- evaluation -------------------------------------------------------------


@dataclass
class TraceEntry:
    rule: int
    conjuncts: tuple
    env: dict
    verdict: bool = False


@dataclass
class _Delta:
    relation: str
    row: tuple


@dataclass
class _Query:
    rule: int
    index: int
    env: dict
    skip: Optional[int]
    conjuncts: list
    result: Optional[SatResult] = None


@dataclass
class EvalResult:
    database: Database
    metrics: Metrics
    trace: list = field(default_factory=list)

    def __iter__(self):
        yield self.database
        yield self.metrics


class Evaluator:
    def __init__(self, program: Program, sessions: Sequence[Session], config: EvalConfig,
                 cache: Optional[QueryCache] = None):
        if not sessions:
            raise ValueError("at least one session is required")
        self.program = program
        self.sessions = list(sessions)
        self.config = config
        self.cache = cache if cache is not None else QueryCache()
        self.db = Database(program)
        self.done = Database(program)
        self.idb = program.idb
        self.trace: list = []
        self._uses: dict = {}
        for ri, rule in enumerate(program.rules):
            for li, lit in enumerate(rule.body):
                if isinstance(lit, Atom) and lit.relation in self.idb:
                    self._uses.setdefault(lit.relation, []).append((ri, li))

    # body evaluation produces new work items in generation order
    def _body(self, ri: int, k: int, env: dict, skip: Optional[int], out: list):
        rule: Rule = self.program.rules[ri]
        body = rule.body
        mpl = self.config.max_path_len
        while k < len(body):
            if k == skip:
                k += 1
                continue
            lit = body[k]
            if isinstance(lit, Atom):
                view = self.done if lit.relation in self.idb else self.db
                rel = view.relations[lit.relation]
                positions, key = [], []
                for p, arg in enumerate(lit.args):
                    if not (expr_vars(arg) - env.keys()) and not _is_pattern_only(arg):
                        positions.append(p)
                        key.append(eval_expr(arg, env, mpl))
                for row in list(rel.lookup(tuple(positions), tuple(key))):
                    e2 = env
                    for arg, v in zip(lit.args, row):
                        e2 = match(arg, v, e2, mpl)
                        if e2 is None:
                            break
                    if e2 is not None:
                        self._body(ri, k + 1, e2, skip, out)
                return
            if isinstance(lit, IsSat):
                conj = conjunction_of(eval_expr(lit.expr, env, mpl))
                out.append(_Query(ri, k, env, skip, conj))
                return
            if isinstance(lit, Bind):
                v = eval_expr(lit.expr, env, mpl)
                if lit.var in env:
                    if not _same(env[lit.var], v):
                        return
                else:
                    env = dict(env)
                    env[lit.var] = v
            elif isinstance(lit, Compare):
                if not _compare(lit.op, eval_expr(lit.left, env, mpl), eval_expr(lit.right, env, mpl)):
                    return
            elif isinstance(lit, NotMember):
                coll = eval_expr(lit.collection, env, mpl)
                if not isinstance(coll, tuple):
                    raise EvalError("not_member expects a list")
                item = eval_expr(lit.item, env, mpl)
                if any(_same(item, x) for x in coll):
                    return
            elif isinstance(lit, GetModel):
                conj = conjunction_of(eval_expr(lit.expr, env, mpl))
                model = self.sessions[0].get_model(conj) if conj else None
                if model is None and conj:
                    return
                value = tuple(sorted((n, v) for (n, _s), v in model.without_prefix().bindings.items())) \
                    if model is not None else ()
                if lit.var in env:
                    if not _same(env[lit.var], value):
                        return
                else:
                    env = dict(env)
                    env[lit.var] = value
            k += 1
        self._derive(rule, env, out)

    def _derive(self, rule: Rule, env: dict, out: list):
        mpl = self.config.max_path_len
        row = tuple(eval_expr(a, env, mpl) for a in rule.head.args)
        decl = self.program.relations[rule.head.relation]
        for v, ty in zip(row, decl.types):
            if not type_ok(v, ty):
                raise EvalError(f"derived value {format_value(v)} does not fit column type {ty} "
                                f"of {decl.name}")
        if self.db.relations[rule.head.relation].add(row):
            if self.db.size() > self.config.max_tuples:
                raise BudgetExceeded(f"more than {self.config.max_tuples} tuples derived")
            out.append(_Delta(rule.head.relation, row))

    def _on_delta(self, d: _Delta, out: list):
        self.done.relations[d.relation].add(d.row)
        mpl = self.config.max_path_len
        for ri, li in self._uses.get(d.relation, ()):
            atom = self.program.rules[ri].body[li]
            env: Optional[dict] = {}
            for arg, v in zip(atom.args, d.row):
                env = match(arg, v, env, mpl)
                if env is None:
                    break
            if env is not None:
                self._body(ri, 0, env, li, out)

    def _resolve(self, queries: List[_Query]):
        cfg = self.config
        todo = []
        for q in queries:
            if not q.conjuncts:
                q.result = RESULT_SAT
                continue
            q.result = self.cache.get(q.conjuncts)
            if q.result is None:
                todo.append(q)
        if not todo:
            return
        if len(self.sessions) == 1 or len(todo) == 1:
            for q in todo:
                q.result = self.cache.put(q.conjuncts, self.sessions[0].check(q.conjuncts))
            return
        n = len(self.sessions)
        chunks = [todo[i::n] for i in range(n)]

        def work(i):
            s = self.sessions[i]
            for q in chunks[i]:
                q.result = self.cache.put(q.conjuncts, s.check(q.conjuncts))

        with ThreadPoolExecutor(max_workers=n) as pool:
            for f in [pool.submit(work, i) for i in range(n) if chunks[i]]:
                f.result()

    def _on_query(self, q: _Query, out: list):
        ok = _decide(q.result, self.config.unknown_policy)
        if self.config.trace:
            self.trace.append(TraceEntry(q.rule, tuple(q.conjuncts), q.env, ok))
        if ok:
            self._body(q.rule, q.index + 1, q.env, q.skip, out)

    def run(self) -> Database:
        work: deque = deque()
        dfs = self.config.order == "dfs"

        def schedule(items):
            if dfs:
                work.extend(reversed(items))
            else:
                work.extend(items)

        initial = []
        for rel, row in self.program.facts:
            if self.db.relations[rel].add(row):
                if rel in self.idb:
                    initial.append(_Delta(rel, row))
                else:
                    self.done.relations[rel].add(row)
        for ri, rule in enumerate(self.program.rules):
            if not any(isinstance(l, Atom) and l.relation in self.idb for l in rule.body):
                self._body(ri, 0, {}, None, initial)
        schedule(initial)

        batch = len(self.sessions)
        while work:
            item = work.pop() if dfs else work.popleft()
            if isinstance(item, _Delta):
                out: list = []
                self._on_delta(item, out)
                schedule(out)
                continue
            queries = [item]
            while batch > 1 and len(queries) < batch * 4 and work:
                nxt = work[-1] if dfs else work[0]
                if not isinstance(nxt, _Query):
                    break
                queries.append(work.pop() if dfs else work.popleft())
            self._resolve(queries)
            produced = []
            for q in queries:
                out = []
                self._on_query(q, out)
                produced.append(out)
            if dfs:
                # the first query's children must come out first
                for out in reversed(produced):
                    work.extend(reversed(out))
            else:
                for out in produced:
                    work.extend(out)
        return self.db


def _is_pattern_only(arg) -> bool:
    return isinstance(arg, Wildcard)


def evaluate(program: Program, session, config: Optional[EvalConfig] = None,
             cache: Optional[QueryCache] = None) -> EvalResult:
    """Compute the least model of ``program``.

    ``session`` is one :class:`Session` or a list of them (one per worker).
    Returns the database together with the solver metrics accumulated during
    this call.
    """
    config = config or EvalConfig()
    sessions = list(session) if isinstance(session, (list, tuple)) else [session]
    if config.worker_count > len(sessions):
        raise ValueError(f"worker_count={config.worker_count} but only {len(sessions)} session(s) given")
    sessions = sessions[:config.worker_count]
    before = [s.metrics.copy() for s in sessions]
    cache = cache if cache is not None else QueryCache()
    hits0, misses0 = cache.hits, cache.misses
    t0 = time.perf_counter_ns()
    ev = Evaluator(program, sessions, config, cache)
    db = ev.run()
    m = Metrics()
    for s, b in zip(sessions, before):
        m.add(_diff(s.metrics, b))
    m.cache_hits = cache.hits - hits0
    m.cache_misses = cache.misses - misses0
    m.total_wall_ns = time.perf_counter_ns() - t0
    return EvalResult(db, m, ev.trace)


def _diff(a: Metrics, b: Metrics) -> Metrics:
    return Metrics(**{f.name: getattr(a, f.name) - getattr(b, f.name) for f in fields(Metrics)})
