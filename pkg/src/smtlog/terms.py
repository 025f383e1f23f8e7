"""Sorted, hash-consed SMT terms.

Every term is built through :func:`mk_term` (or the small helpers wrapping it)
and interned, so structurally equal terms are the same Python object and can
be compared with ``is``.  :func:`canonicalize` normalises Boolean terms into
:class:`Conjunct` values whose identity is stable under the usual shallow
rewrites (flattening, sorting of commutative arguments, duplicate removal,
double negation).
"""

from __future__ import annotations

import itertools
import re
import threading
import weakref
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

from smtlog.errors import SortError

SIMPLE_SYMBOL = re.compile(r"^[a-zA-Z~!@$%^&*_+=<>.?/\-][0-9a-zA-Z~!@$%^&*_+=<>.?/\-]*$")


@dataclass(frozen=True)
class Sort:
    kind: str
    width: int = 0
    name: str = ""

    def __post_init__(self):
        if self.kind == "BitVec":
            if not isinstance(self.width, int) or self.width < 1:
                raise SortError(f"bit-vector width must be >= 1, got {self.width!r}")
        elif self.kind == "Uninterpreted":
            if not SIMPLE_SYMBOL.match(self.name):
                raise SortError(f"invalid sort name {self.name!r}")
        elif self.kind not in ("Bool", "Int"):
            raise SortError(f"unknown sort kind {self.kind!r}")

    @property
    def is_bool(self) -> bool:
        return self.kind == "Bool"

    @property
    def is_int(self) -> bool:
        return self.kind == "Int"

    @property
    def is_bv(self) -> bool:
        return self.kind == "BitVec"

    def key(self):
        return (_SORT_RANK[self.kind], self.width, self.name)

    def __str__(self):
        if self.kind == "BitVec":
            return f"(_ BitVec {self.width})"
        if self.kind == "Uninterpreted":
            return self.name
        return self.kind


_SORT_RANK = {"Bool": 0, "Int": 1, "BitVec": 2, "Uninterpreted": 3}

BOOL = Sort("Bool")
INT = Sort("Int")


def bitvec(width: int) -> Sort:
    return Sort("BitVec", width=width)


def uninterpreted(name: str) -> Sort:
    return Sort("Uninterpreted", name=name)


@dataclass(frozen=True)
class FunDecl:
    """An uninterpreted function symbol with a fixed signature."""

    name: str
    arg_sorts: tuple
    ret: Sort

    def __post_init__(self):
        object.__setattr__(self, "arg_sorts", tuple(self.arg_sorts))
        if not SIMPLE_SYMBOL.match(self.name):
            raise SortError(f"invalid function name {self.name!r}")
        if self.name in SIGNATURES:
            raise SortError(f"{self.name!r} is a builtin operator")


CONST, VAR, APP = 0, 1, 2

Operator = Union[str, FunDecl]


class Term:
    """An interned term node.  Do not instantiate directly."""

    __slots__ = ("kind", "op", "value", "args", "params", "sort", "id",
                 "_key", "_canon", "_fv", "__weakref__")

    def __init__(self, kind, op, value, args, params, sort, id_):
        self.kind = kind
        self.op = op
        self.value = value
        self.args = args
        self.params = params
        self.sort = sort
        self.id = id_
        self._key = None
        self._canon = None
        self._fv = None

    def __hash__(self):
        return self.id

    def __eq__(self, other):
        return self is other

    def __lt__(self, other):
        return term_key(self) < term_key(other)

    def __setattr__(self, name, value):
        if name in ("_key", "_canon", "_fv") or not hasattr(self, "id"):
            object.__setattr__(self, name, value)
        else:
            raise AttributeError("Term is immutable")

    def __reduce__(self):
        return (_rebuild, (self.kind, self.op, self.value, self.args, self.params, self.sort))

    @property
    def is_const(self):
        return self.kind == CONST

    @property
    def is_var(self):
        return self.kind == VAR

    @property
    def is_app(self):
        return self.kind == APP

    @property
    def name(self):
        """Variable name or operator symbol."""
        if self.kind == APP:
            return self.op.name if isinstance(self.op, FunDecl) else self.op
        return self.op

    def __repr__(self):
        from smtlog.smtlib import serialize_term

        return f"Term<{serialize_term(self)}>"


def _rebuild(kind, op, value, args, params, sort):
    if kind == CONST:
        return const(value, sort)
    if kind == VAR:
        return var(op, sort)
    return mk_term(op, args, params)


_table: "weakref.WeakValueDictionary[tuple, Term]" = weakref.WeakValueDictionary()
_lock = threading.Lock()
_ids = itertools.count(1)


def _intern(kind, op, value, args, params, sort) -> Term:
    key = (kind, op, value, tuple(a.id for a in args), params, sort)
    t = _table.get(key)
    if t is not None:
        return t
    with _lock:
        t = _table.get(key)
        if t is None:
            t = Term(kind, op, value, tuple(args), params, sort, next(_ids))
            _table[key] = t
        return t


def const(value, sort: Sort) -> Term:
    if sort.is_bool:
        if not isinstance(value, bool):
            raise SortError(f"Bool constant must be True/False, got {value!r}")
    elif sort.is_int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise SortError(f"Int constant must be an integer, got {value!r}")
    elif sort.is_bv:
        if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < (1 << sort.width):
            raise SortError(f"value {value!r} does not fit in {sort}")
    else:
        raise SortError(f"no constants of sort {sort}")
    return _intern(CONST, None, value, (), (), sort)


def bool_const(b: bool) -> Term:
    return const(bool(b), BOOL)


def int_const(n: int) -> Term:
    return const(n, INT)


def bv_const(value: int, width: int) -> Term:
    return const(value, bitvec(width))


TRUE = bool_const(True)
FALSE = bool_const(False)


def var(name: str, sort: Sort) -> Term:
    if not isinstance(name, str) or not name or "|" in name or "\\" in name:
        raise SortError(f"invalid variable name {name!r}")
    if not isinstance(sort, Sort):
        raise SortError(f"not a sort: {sort!r}")
    return _intern(VAR, name, None, (), (), sort)


# --------------------------------------------------------------------------
# Operator signatures.  Each checker receives (op, arg sorts, params) and
# returns the result sort or raises SortError.


def _fail(op, pos, msg):
    where = f" argument {pos}" if pos is not None else ""
    raise SortError(f"{op}:{where} {msg}")


def _nary(sort_pred, what, min_args, result):
    def check(op, sorts, params):
        if len(sorts) < min_args:
            _fail(op, None, f"expects at least {min_args} arguments, got {len(sorts)}")
        for i, s in enumerate(sorts):
            if not sort_pred(s):
                _fail(op, i, f"expected {what}, got {s}")
        return result if result is not None else sorts[0]
    return check


def _fixed(arg_pred, what, arity, result):
    def check(op, sorts, params):
        if len(sorts) != arity:
            _fail(op, None, f"expects {arity} arguments, got {len(sorts)}")
        for i, s in enumerate(sorts):
            if not arg_pred(s):
                _fail(op, i, f"expected {what}, got {s}")
        return result
    return check


def _is_bool(s):
    return s.is_bool


def _is_int(s):
    return s.is_int


def _check_not(op, sorts, params):
    return _fixed(_is_bool, "Bool", 1, BOOL)(op, sorts, params)


def _check_eq(op, sorts, params):
    if len(sorts) != 2:
        _fail(op, None, f"expects 2 arguments, got {len(sorts)}")
    if sorts[0] != sorts[1]:
        _fail(op, 1, f"expected {sorts[0]}, got {sorts[1]}")
    return BOOL


def _check_ite(op, sorts, params):
    if len(sorts) != 3:
        _fail(op, None, f"expects 3 arguments, got {len(sorts)}")
    if not sorts[0].is_bool:
        _fail(op, 0, f"expected Bool, got {sorts[0]}")
    if sorts[1] != sorts[2]:
        _fail(op, 2, f"expected {sorts[1]}, got {sorts[2]}")
    return sorts[1]


def _check_minus(op, sorts, params):
    return _nary(_is_int, "Int", 1, INT)(op, sorts, params)


def _bv_same(result_bool):
    def check(op, sorts, params):
        if len(sorts) != 2:
            _fail(op, None, f"expects 2 arguments, got {len(sorts)}")
        for i, s in enumerate(sorts):
            if not s.is_bv:
                _fail(op, i, f"expected a bit-vector, got {s}")
        if sorts[0] != sorts[1]:
            _fail(op, 1, f"expected {sorts[0]}, got {sorts[1]}")
        return BOOL if result_bool else sorts[0]
    return check


def _check_concat(op, sorts, params):
    if len(sorts) != 2:
        _fail(op, None, f"expects 2 arguments, got {len(sorts)}")
    for i, s in enumerate(sorts):
        if not s.is_bv:
            _fail(op, i, f"expected a bit-vector, got {s}")
    return bitvec(sorts[0].width + sorts[1].width)


def _check_extract(op, sorts, params):
    if len(params) != 2 or not all(isinstance(p, int) and not isinstance(p, bool) for p in params):
        _fail(op, None, "needs two integer indices (hi, lo)")
    hi, lo = params
    if len(sorts) != 1:
        _fail(op, None, f"expects 1 argument, got {len(sorts)}")
    if not sorts[0].is_bv:
        _fail(op, 0, f"expected a bit-vector, got {sorts[0]}")
    if not sorts[0].width > hi >= lo >= 0:
        _fail(op, 0, f"indices {hi},{lo} out of range for {sorts[0]}")
    return bitvec(hi - lo + 1)


SIGNATURES = {
    "not": _check_not,
    "and": _nary(_is_bool, "Bool", 2, BOOL),
    "or": _nary(_is_bool, "Bool", 2, BOOL),
    "=>": _nary(_is_bool, "Bool", 2, BOOL),
    "ite": _check_ite,
    "=": _check_eq,
    "+": _nary(_is_int, "Int", 2, INT),
    "*": _nary(_is_int, "Int", 2, INT),
    "-": _check_minus,
    "<": _fixed(_is_int, "Int", 2, BOOL),
    "<=": _fixed(_is_int, "Int", 2, BOOL),
    ">": _fixed(_is_int, "Int", 2, BOOL),
    ">=": _fixed(_is_int, "Int", 2, BOOL),
    "bvadd": _bv_same(False),
    "bvsub": _bv_same(False),
    "bvand": _bv_same(False),
    "bvor": _bv_same(False),
    "bvult": _bv_same(True),
    "bvule": _bv_same(True),
    "concat": _check_concat,
    "extract": _check_extract,
}

COMMUTATIVE = frozenset({"and", "or", "=", "+", "*", "bvadd", "bvand", "bvor"})


def mk_term(op: Operator, args: Sequence[Term], params: tuple = ()) -> Term:
    """Build (or fetch) the interned application ``op(args)``.

    ``op`` is either a builtin operator symbol or a :class:`FunDecl`.
    ``params`` carries the indices of indexed operators (``extract``).
    """
    args = tuple(args)
    for i, a in enumerate(args):
        if not isinstance(a, Term):
            raise SortError(f"{op}: argument {i} is not a term: {a!r}")
    sorts = [a.sort for a in args]
    params = tuple(params)
    if isinstance(op, FunDecl):
        if params:
            _fail(op.name, None, "uninterpreted functions take no indices")
        if len(args) != len(op.arg_sorts):
            _fail(op.name, None, f"expects {len(op.arg_sorts)} arguments, got {len(args)}")
        for i, (s, want) in enumerate(zip(sorts, op.arg_sorts)):
            if s != want:
                _fail(op.name, i, f"expected {want}, got {s}")
        result = op.ret
    else:
        check = SIGNATURES.get(op)
        if check is None:
            raise SortError(f"unsupported operator {op!r}")
        if params and op != "extract":
            _fail(op, None, "takes no indices")
        result = check(op, sorts, params)
    return _intern(APP, op, None, args, params, result)


def not_(t: Term) -> Term:
    return mk_term("not", [t])


def and_(*ts: Term) -> Term:
    return mk_term("and", ts)


def or_(*ts: Term) -> Term:
    return mk_term("or", ts)


def implies(a: Term, b: Term) -> Term:
    return mk_term("=>", [a, b])


def eq(a: Term, b: Term) -> Term:
    return mk_term("=", [a, b])


# --------------------------------------------------------------------------
# Ordering and canonical form


def term_key(t: Term):
    """Total order key: (node kind, operator/name, children, ...)."""
    k = t._key
    if k is None:
        if t.kind == CONST:
            k = (CONST, "", t.sort.key(), int(t.value))
        elif t.kind == VAR:
            k = (VAR, t.op, t.sort.key())
        else:
            op = t.op
            opname = op.name if isinstance(op, FunDecl) else op
            k = (APP, opname, t.params, tuple(term_key(a) for a in t.args), t.sort.key())
        t._key = k
    return k


@dataclass(frozen=True)
class Conjunct:
    """A canonical Boolean term, usable as an exact map key."""

    term: Term = field(compare=True)

    def __post_init__(self):
        if not self.term.sort.is_bool:
            raise SortError(f"conjunct must be Bool, got {self.term.sort}")

    @property
    def id(self) -> int:
        return self.term.id

    def __hash__(self):
        return self.term.id

    def __lt__(self, other):
        return term_key(self.term) < term_key(other.term)

    def __repr__(self):
        from smtlog.smtlib import serialize_term

        return f"Conjunct<{serialize_term(self.term)}>"


def _canon(t: Term) -> Term:
    c = t._canon
    if c is not None:
        return c
    if t.kind != APP:
        t._canon = t
        return t
    args = [_canon(a) for a in t.args]
    op = t.op
    if op == "not" and args[0].kind == APP and args[0].op == "not":
        c = args[0].args[0]
    elif op in ("and", "or"):
        flat = []
        for a in args:
            if a.kind == APP and a.op == op:
                flat.extend(a.args)
            else:
                flat.append(a)
        uniq = sorted(set(flat), key=term_key)
        c = uniq[0] if len(uniq) == 1 else mk_term(op, uniq)
    elif op in COMMUTATIVE:
        c = mk_term(op, sorted(args, key=term_key), t.params)
    else:
        c = mk_term(op, args, t.params)
    c._canon = c
    t._canon = c
    return c


def canonicalize(t: Union[Term, Conjunct]) -> Conjunct:
    if isinstance(t, Conjunct):
        return t
    if not isinstance(t, Term):
        raise SortError(f"not a term: {t!r}")
    if not t.sort.is_bool:
        raise SortError(f"canonicalize expects a Bool term, got {t.sort}")
    return Conjunct(_canon(t))


def _walk(t: Term):
    seen = set()
    stack = [t]
    while stack:
        u = stack.pop()
        if u.id in seen:
            continue
        seen.add(u.id)
        yield u
        stack.extend(u.args)


def free_vars(t: Union[Term, Conjunct]) -> tuple:
    """The (name, sort) pairs of all variables in ``t``, sorted by name."""
    if isinstance(t, Conjunct):
        t = t.term
    fv = t._fv
    if fv is None:
        fv = tuple(sorted({(u.op, u.sort) for u in _walk(t) if u.kind == VAR},
                          key=lambda p: (p[0], p[1].key())))
        t._fv = fv
    return fv


def free_funs(t: Union[Term, Conjunct]) -> tuple:
    """Uninterpreted function symbols applied in ``t``, sorted by name."""
    if isinstance(t, Conjunct):
        t = t.term
    return tuple(sorted({u.op for u in _walk(t) if u.kind == APP and isinstance(u.op, FunDecl)},
                        key=lambda f: f.name))


# --------------------------------------------------------------------------
# Scalar semantics


def _mask(w):
    return (1 << w) - 1


def evaluate(t: Term, env: Mapping) -> Union[bool, int]:
    """Evaluate ``t`` under ``env`` (variable name -> value).

    Uninterpreted functions are looked up in ``env`` by name and must be
    callables.  Bit-vectors are unsigned Python ints.
    """
    if t.kind == CONST:
        return t.value
    if t.kind == VAR:
        try:
            return env[t.op]
        except KeyError:
            raise KeyError(f"no value for variable {t.op!r}") from None
    op = t.op
    if isinstance(op, FunDecl):
        return env[op.name](*(evaluate(a, env) for a in t.args))
    if op == "and":
        return all(evaluate(a, env) for a in t.args)
    if op == "or":
        return any(evaluate(a, env) for a in t.args)
    if op == "=>":
        # right associative
        vals = [evaluate(a, env) for a in t.args]
        r = vals[-1]
        for v in reversed(vals[:-1]):
            r = (not v) or r
        return r
    if op == "ite":
        return evaluate(t.args[1], env) if evaluate(t.args[0], env) else evaluate(t.args[2], env)
    vals = [evaluate(a, env) for a in t.args]
    if op == "not":
        return not vals[0]
    if op == "=":
        return vals[0] == vals[1]
    if op == "+":
        return sum(vals)
    if op == "*":
        r = 1
        for v in vals:
            r *= v
        return r
    if op == "-":
        if len(vals) == 1:
            return -vals[0]
        r = vals[0]
        for v in vals[1:]:
            r -= v
        return r
    if op == "<":
        return vals[0] < vals[1]
    if op == "<=":
        return vals[0] <= vals[1]
    if op == ">":
        return vals[0] > vals[1]
    if op == ">=":
        return vals[0] >= vals[1]
    m = _mask(t.args[0].sort.width) if t.args and t.args[0].sort.is_bv else 0
    if op == "bvadd":
        return (vals[0] + vals[1]) & m
    if op == "bvsub":
        return (vals[0] - vals[1]) & m
    if op == "bvand":
        return vals[0] & vals[1]
    if op == "bvor":
        return vals[0] | vals[1]
    if op == "bvult":
        return vals[0] < vals[1]
    if op == "bvule":
        return vals[0] <= vals[1]
    if op == "concat":
        return (vals[0] << t.args[1].sort.width) | vals[1]
    if op == "extract":
        hi, lo = t.params
        return (vals[0] >> lo) & _mask(hi - lo + 1)
    raise SortError(f"cannot evaluate operator {op!r}")


def conjuncts_of(terms: Iterable[Union[Term, Conjunct]]) -> list:
    return [canonicalize(t) for t in terms]
