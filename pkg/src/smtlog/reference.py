"""In-process brute-force satisfiability for a small fragment.

The fragment is quantifier-free Bool / Int / BitVec (variable width <= 8)
without uninterpreted symbols.  Int variables range over
``[-domain_bound, domain_bound]``, so an Unsat answer is only exact relative
to that bound.  Conjuncts are split into variable-connected components and
each component is enumerated exhaustively with numpy broadcasting.

:class:`ReferenceBackend` wraps the search in the same command/response
protocol a solver process speaks, so sessions can drive it unchanged.
"""

from __future__ import annotations

from collections import deque
from typing import Iterable, Optional, Sequence

import numpy as np

from smtlog import smtlib as S
from smtlog import terms as T
from smtlog.errors import ProtocolError, SolverCrash, UnsupportedFragment
from smtlog.terms import Conjunct, FunDecl, Term

DEFAULT_DOMAIN_BOUND = 4
MAX_BV_VAR_WIDTH = 8
MAX_GRID = 1 << 22
_MAX_CONST = 1 << 31


def _as_terms(query: Iterable) -> list:
    return [q.term if isinstance(q, Conjunct) else q for q in query]


def check_fragment(terms: Iterable[Term]) -> None:
    for t in terms:
        for u in T._walk(t):
            s = u.sort
            if s.kind == "Uninterpreted":
                raise UnsupportedFragment(f"uninterpreted sort {s} is outside the reference fragment")
            if s.is_bv and s.width > 62:
                raise UnsupportedFragment(f"{s} is too wide for the reference backend")
            if u.kind == T.APP and isinstance(u.op, FunDecl):
                raise UnsupportedFragment(f"uninterpreted function {u.op.name} is outside the reference fragment")
            if u.kind == T.VAR and s.is_bv and s.width > MAX_BV_VAR_WIDTH:
                raise UnsupportedFragment(f"bit-vector variable {u.op} of width {s.width} > {MAX_BV_VAR_WIDTH}")
            if u.kind == T.CONST and s.is_int and abs(u.value) > _MAX_CONST:
                raise UnsupportedFragment(f"integer constant {u.value} is too large")


def _domain(sort, bound):
    if sort.is_bool:
        return np.array([False, True])
    if sort.is_int:
        return np.arange(-bound, bound + 1, dtype=np.int64)
    return np.arange(1 << sort.width, dtype=np.int64)


def _vec(t: Term, env: dict, memo: dict):
    r = memo.get(t.id)
    if r is not None:
        return r
    if t.kind == T.CONST:
        r = np.bool_(t.value) if t.sort.is_bool else np.int64(t.value)
    elif t.kind == T.VAR:
        r = env[t.op]
    else:
        op = t.op
        a = [_vec(x, env, memo) for x in t.args]
        if op == "not":
            r = np.logical_not(a[0])
        elif op == "and":
            r = a[0]
            for x in a[1:]:
                r = np.logical_and(r, x)
        elif op == "or":
            r = a[0]
            for x in a[1:]:
                r = np.logical_or(r, x)
        elif op == "=>":
            r = a[-1]
            for x in reversed(a[:-1]):
                r = np.logical_or(np.logical_not(x), r)
        elif op == "ite":
            r = np.where(a[0], a[1], a[2])
        elif op == "=":
            r = np.equal(a[0], a[1])
        elif op == "+":
            r = a[0]
            for x in a[1:]:
                r = r + x
        elif op == "*":
            r = a[0]
            for x in a[1:]:
                r = r * x
        elif op == "-":
            if len(a) == 1:
                r = -a[0]
            else:
                r = a[0]
                for x in a[1:]:
                    r = r - x
        elif op == "<":
            r = np.less(a[0], a[1])
        elif op == "<=":
            r = np.less_equal(a[0], a[1])
        elif op == ">":
            r = np.greater(a[0], a[1])
        elif op == ">=":
            r = np.greater_equal(a[0], a[1])
        elif op in ("bvadd", "bvsub", "bvand", "bvor"):
            m = np.int64((1 << t.sort.width) - 1)
            if op == "bvadd":
                r = (a[0] + a[1]) & m
            elif op == "bvsub":
                r = (a[0] - a[1]) & m
            elif op == "bvand":
                r = a[0] & a[1]
            else:
                r = a[0] | a[1]
        elif op == "bvult":
            r = np.less(a[0], a[1])
        elif op == "bvule":
            r = np.less_equal(a[0], a[1])
        elif op == "concat":
            r = (a[0] << np.int64(t.args[1].sort.width)) | a[1]
        elif op == "extract":
            hi, lo = t.params
            r = (a[0] >> np.int64(lo)) & np.int64((1 << (hi - lo + 1)) - 1)
        else:
            raise UnsupportedFragment(f"operator {op!r} is outside the reference fragment")
    memo[t.id] = r
    return r


def _components(terms: Sequence[Term]):
    """Group terms into components connected through shared variables."""
    parent = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for t in terms:
        names = [n for n, _ in T.free_vars(t)]
        for n in names:
            parent.setdefault(n, n)
        for n in names[1:]:
            ra, rb = find(names[0]), find(n)
            if ra != rb:
                parent[rb] = ra
    groups: dict = {}
    ground = []
    for t in terms:
        fv = T.free_vars(t)
        if not fv:
            ground.append(t)
        else:
            groups.setdefault(find(fv[0][0]), []).append(t)
    return ground, list(groups.values())


_component_cache: dict = {}
_CACHE_LIMIT = 200_000


def _solve_component(terms: Sequence[Term], bound: int) -> Optional[dict]:
    key = (frozenset(terms), bound)
    if key in _component_cache:
        return _component_cache[key]
    vars_ = sorted({p for t in terms for p in T.free_vars(t)}, key=lambda p: p[0])
    domains = [_domain(s, bound) for _, s in vars_]
    size = 1
    for d in domains:
        size *= len(d)
    if size > MAX_GRID:
        raise UnsupportedFragment(f"component over {len(vars_)} variables needs {size} assignments")
    k = len(vars_)
    env = {}
    for i, ((name, _), d) in enumerate(zip(vars_, domains)):
        shape = [1] * k
        shape[i] = len(d)
        env[name] = d.reshape(shape)
    memo: dict = {}
    ok = np.ones([len(d) for d in domains], dtype=bool)
    for t in terms:
        ok = np.logical_and(ok, _vec(t, env, memo))
        if not ok.any():
            break
    hits = np.argwhere(ok)
    if len(hits) == 0:
        witness = None
    else:
        idx = hits[0]
        witness = {name: _py(d[j], s) for (name, s), d, j in zip(vars_, domains, idx)}
    if len(_component_cache) > _CACHE_LIMIT:
        _component_cache.clear()
    _component_cache[key] = witness
    return witness


def _py(v, sort):
    return bool(v) if sort.is_bool else int(v)


def reference_solve(query: Iterable, domain_bound: int = DEFAULT_DOMAIN_BOUND,
                    assumptions: Sequence[str] = ()) -> Optional[dict]:
    """Return a satisfying assignment {name: value} or None.

    ``assumptions`` names Boolean variables fixed to true.  A top-level
    ``(=> x phi)`` whose guard ``x`` is not assumed and occurs nowhere else
    is satisfied by ``x = false`` and dropped before enumeration.
    """
    terms = _as_terms(query)
    check_fragment(terms)
    assumed = set(assumptions)
    occurrences: dict = {}
    for t in terms:
        for n, _ in T.free_vars(t):
            occurrences[n] = occurrences.get(n, 0) + 1
    fixed = {n: True for n in assumed}
    work = []
    for t in terms:
        if t.kind == T.APP and t.op == "=>" and len(t.args) == 2 and t.args[0].kind == T.VAR:
            g = t.args[0].op
            if g in assumed:
                work.append(t.args[1])
                continue
            if occurrences.get(g) == 1 and not any(n == g for n, _ in T.free_vars(t.args[1])):
                fixed[g] = False
                continue
        work.append(t)
    for n in assumed:
        work.append(T.var(n, T.BOOL))
    ground, comps = _components(work)
    for t in ground:
        if not T.evaluate(t, {}):
            return None
    witness = dict(fixed)
    for comp in comps:
        w = _solve_component(comp, domain_bound)
        if w is None:
            return None
        witness.update(w)
    return witness


def reference_check(query: Iterable, domain_bound: int = DEFAULT_DOMAIN_BOUND) -> S.SatResult:
    """Brute-force verdict for the conjunction of ``query``; never Unknown."""
    if domain_bound < 1:
        raise ValueError("domain_bound must be positive")
    return S.RESULT_SAT if reference_solve(query, domain_bound) is not None else S.RESULT_UNSAT


def _default_value(sort):
    return False if sort.is_bool else 0


class ReferenceBackend:
    """Speaks the solver command protocol, answering with :func:`reference_solve`.

    Responses are produced as text, exactly as a solver process would print
    them (``sat``, ``(error "...")``, a get-model list, echo lines).
    """

    name = "reference"

    def __init__(self, domain_bound: int = DEFAULT_DOMAIN_BOUND):
        self.domain_bound = domain_bound
        self.alive = False
        self.commands_seen = 0

    def start(self):
        self.frames = [[]]
        self.declared: dict = {}
        self.responses: deque = deque()
        self.last_witness = None
        self.alive = True

    def kill(self):
        """Simulate the process dying: all state is lost."""
        self.alive = False
        self.responses = deque()

    def close(self):
        self.alive = False

    @property
    def depth(self):
        return len(self.frames) - 1

    def assertions(self):
        return [t for f in self.frames for t in f]

    def _error(self, msg):
        self.responses.append('(error "' + msg.replace('"', '""') + '")')

    def send(self, cmds: Iterable[S.Command]):
        if not self.alive:
            raise SolverCrash("reference backend is not running")
        for c in cmds:
            self.commands_seen += 1
            self._apply(c)

    def _apply(self, c):
        if isinstance(c, (S.SetLogic, S.SetOption)):
            return
        if isinstance(c, S.DeclareConst):
            self._declare(c.name, c.sort)
        elif isinstance(c, S.DeclareFun):
            self._declare(c.name, FunDecl(c.name, c.arg_sorts, c.ret))
        elif isinstance(c, S.Assert):
            missing = self._undeclared(c.term)
            if missing:
                self._error(f"unknown constant {missing}")
            elif not c.term.sort.is_bool:
                self._error("assert expects a Bool term")
            else:
                self.frames[-1].append(c.term)
        elif isinstance(c, S.Push):
            self.frames.extend([] for _ in range(c.n))
        elif isinstance(c, S.Pop):
            if c.n > self.depth:
                self._error(f"cannot pop {c.n} frames from depth {self.depth}")
            else:
                del self.frames[len(self.frames) - c.n:]
        elif isinstance(c, S.CheckSat):
            self._check(())
        elif isinstance(c, S.CheckSatAssuming):
            names = [a.name if isinstance(a, S.AssumptionVar) else a for a in c.assumptions]
            bad = [n for n in names if self.declared.get(n) != T.BOOL]
            if bad:
                self._error(f"assumption {bad[0]} is not a declared Bool constant")
            else:
                self._check(names)
        elif isinstance(c, S.GetModel):
            if self.last_witness is None:
                self._error("model is not available")
            else:
                model = {}
                for name, sort in sorted(self.declared.items()):
                    if isinstance(sort, FunDecl):
                        continue
                    model[(name, sort)] = self.last_witness.get(name, _default_value(sort))
                self.responses.append(S.serialize_model(model))
        elif isinstance(c, S.Echo):
            self.responses.append(c.message)
        elif isinstance(c, S.Exit):
            self.alive = False
        else:
            self._error(f"unsupported command {c}")

    def _declare(self, name, what):
        if name in self.declared:
            self._error(f"invalid declaration, constant {name} already declared")
        else:
            self.declared[name] = what

    def _undeclared(self, t):
        for name, sort in T.free_vars(t):
            if self.declared.get(name) != sort:
                return name
        for f in T.free_funs(t):
            if self.declared.get(f.name) != f:
                return f.name
        return None

    def _check(self, assumptions):
        w = reference_solve(self.assertions(), self.domain_bound, assumptions)
        self.last_witness = w
        self.responses.append("sat" if w is not None else "unsat")

    def read(self, timeout: Optional[float] = None) -> str:
        if not self.responses:
            if not self.alive:
                raise SolverCrash("reference backend is not running")
            raise ProtocolError("no response pending")
        return self.responses.popleft()
