"""Datalog programs whose tuples may carry SMT terms.

Surface syntax (``%`` starts a comment)::

    program    ::= { statement }
    statement  ::= "rel" NAME "(" [ coltype { "," coltype } ] ")" "."
                 | atom [ ":-" literal { "," literal } ] "."
    coltype    ::= "int" | "sym" | "list" | "any"
                 | "smt_bool" | "smt_int" | "smt_bv" | "smt_term" | "smt_list"
    literal    ::= "is_sat" "(" expr ")"
                 | "get_model" "(" expr "," VAR ")"
                 | "not_member" "(" expr "," expr ")"
                 | VAR ":=" expr
                 | expr CMP expr                      CMP ::= = != < <= > >=
                 | atom
    atom       ::= NAME "(" [ expr { "," expr } ] ")"
    expr       ::= VAR | "_" | INT | NAME [ "(" [ expr { "," expr } ] ")" ]
                 | "[" [ expr { "," expr } ] "]" | "#smt{" smtlib-term "}"

``VAR`` starts with an upper-case letter or ``_``; ``NAME`` with a lower-case
letter.  Lists are ``[...]``, ``nil`` and ``cons(H, T)``.  Evaluated
functions: ``snoc(L, X)``, ``append(L1, L2)``, ``len(L)``, ``add(A, B)``,
``sub(A, B)``, ``smt_and(F, G)``, ``smt_not(F)`` and the nullary
``max_path_len`` (taken from the evaluation config).  Any other ``NAME(...)``
is a data constructor.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from smtlog import terms as T
from smtlog.errors import (ArityError, DatalogError, DatalogSyntaxError, RangeRestrictionError,
                           ReservedNameError, SortClash, SortError, UnknownRelation)
from smtlog.smtlib import AssumptionVar, TermReader

RESERVED_PREFIX = AssumptionVar.PREFIX

COLUMN_TYPES = ("int", "sym", "list", "any", "smt_bool", "smt_int", "smt_bv", "smt_term", "smt_list")
FUNCTIONS = {"snoc": 2, "append": 2, "len": 1, "add": 2, "sub": 2,
             "smt_and": 2, "smt_not": 1, "max_path_len": 0}
BUILTIN_LITERALS = ("is_sat", "get_model", "not_member")
COMPARISONS = ("=", "!=", "<", "<=", ">", ">=")

# sort hints for #smt{...} literals; _FORMULAS means "a formula or a list of formulas"
_FORMULAS = object()
_COLUMN_SORT = {"smt_bool": T.BOOL, "smt_int": T.INT, "smt_list": _FORMULAS}


@dataclass(frozen=True)
class Compound:
    """A ground constructor term ``functor(args...)``."""

    functor: str
    args: tuple

    def __str__(self):
        return f"{self.functor}({', '.join(format_value(a) for a in self.args)})"


def format_value(v) -> str:
    from smtlog.smtlib import serialize_term

    if isinstance(v, T.Term):
        return "#smt{" + serialize_term(v) + "}"
    if isinstance(v, tuple):
        return "[" + ", ".join(format_value(x) for x in v) + "]"
    return str(v)


# -- expressions ------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Wildcard:
    pass


@dataclass(frozen=True)
class Const:
    value: object


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple

    @property
    def evaluated(self):
        return self.name in FUNCTIONS


@dataclass(frozen=True)
class ListExpr:
    items: tuple


def expr_vars(e, out=None, pattern=False) -> set:
    """Variables of ``e``.  With ``pattern=True`` only those a match can bind."""
    if out is None:
        out = set()
    if isinstance(e, Var):
        out.add(e.name)
    elif isinstance(e, ListExpr):
        for x in e.items:
            expr_vars(x, out, pattern)
    elif isinstance(e, Call):
        if pattern and e.evaluated:
            return out
        for x in e.args:
            expr_vars(x, out, pattern)
    return out


# -- literals ---------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    relation: str
    args: tuple
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class IsSat:
    expr: object


@dataclass(frozen=True)
class GetModel:
    expr: object
    var: str


@dataclass(frozen=True)
class NotMember:
    item: object
    collection: object


@dataclass(frozen=True)
class Bind:
    var: str
    expr: object


@dataclass(frozen=True)
class Compare:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class RelDecl:
    name: str
    types: tuple

    @property
    def arity(self):
        return len(self.types)


@dataclass
class Rule:
    head: Atom
    body: list
    line: int = 0

    def __str__(self):
        return f"rule at line {self.line}: {self.head.relation}/{len(self.head.args)}"


@dataclass
class Program:
    relations: dict = field(default_factory=dict)
    rules: list = field(default_factory=list)
    facts: list = field(default_factory=list)
    symbols: dict = field(default_factory=dict)

    @property
    def idb(self) -> set:
        return {r.head.relation for r in self.rules}

    @property
    def edb(self) -> set:
        return set(self.relations) - self.idb


# -- lexer ------------------------------------------------------------------

_LEX = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>%[^\n]*)
  | (?P<smt>\#s(?:mt|at)\{)
  | (?P<int>-?[0-9]+)
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<name>[a-z][A-Za-z0-9_]*)
  | (?P<punct>:-|:=|!=|<=|>=|[(),.\[\]<>=])
""", re.VERBOSE)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def _lex(text: str):
    pos, line, line_start = 0, 1, 0
    out = []
    while pos < len(text):
        m = _LEX.match(text, pos)
        if m is None:
            raise DatalogSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
            pos = m.end()
            continue
        if kind in ("ws", "comment"):
            pos = m.end()
            continue
        if kind == "smt":
            depth, j = 1, m.end()
            while j < len(text) and depth:
                if text[j] == "{":
                    depth += 1
                elif text[j] == "}":
                    depth -= 1
                j += 1
            if depth:
                raise DatalogSyntaxError("unterminated #smt{", line, col)
            body = text[m.end():j - 1]
            out.append(Token("smt", body, line, col))
            newlines = body.count("\n")
            if newlines:
                line += newlines
                line_start = m.end() + body.rfind("\n") + 1
            pos = j
            continue
        tok = m.group()
        if kind == "var" and tok == "_":
            kind = "wild"
        out.append(Token(kind if kind != "punct" else tok, tok, line, col))
        pos = m.end()
    out.append(Token("eof", "", line, pos - line_start + 1))
    return out


# -- parser -----------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.toks = _lex(text)
        self.i = 0
        self.program = Program()
        self.reader = TermReader()
        self.pending = []

    def peek(self, k=0):
        return self.toks[self.i + k]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, kind):
        t = self.next()
        if t.kind != kind:
            raise DatalogSyntaxError(f"expected {kind!r}, found {t.text or t.kind!r}", t.line, t.col)
        return t

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        return DatalogSyntaxError(msg, tok.line, tok.col)

    def parse(self) -> Program:
        while self.peek().kind != "eof":
            t = self.peek()
            nxt = self.peek(1)
            if t.kind == "name" and t.text == "rel" and nxt.kind == "var" and nxt.text.startswith(RESERVED_PREFIX):
                raise ReservedNameError(f"relation name {nxt.text!r} uses a reserved prefix", nxt.line, nxt.col)
            if t.kind == "name" and t.text == "rel" and nxt.kind == "name":
                self.rel_decl()
            else:
                self.pending.append(self.clause())
        for item in self.pending:
            self.check_clause(*item)
        return self.program

    def rel_decl(self):
        self.next()
        name_tok = self.expect("name")
        name = name_tok.text
        if name in self.program.relations:
            raise DatalogSyntaxError(f"relation {name!r} declared twice", name_tok.line, name_tok.col)
        self.expect("(")
        types = []
        if self.peek().kind != ")":
            while True:
                t = self.expect("name")
                if t.text not in COLUMN_TYPES:
                    raise DatalogSyntaxError(f"unknown column type {t.text!r}", t.line, t.col)
                types.append(t.text)
                if self.peek().kind != ",":
                    break
                self.next()
        self.expect(")")
        self.expect(".")
        self.program.relations[name] = RelDecl(name, tuple(types))

    def clause(self):
        start = self.peek()
        head = self.atom()
        body = []
        if self.peek().kind == ":-":
            self.next()
            while True:
                body.append(self.literal())
                if self.peek().kind != ",":
                    break
                self.next()
        self.expect(".")
        return head, body, start

    def atom(self):
        t = self.expect("name")
        self.expect("(")
        decl = self.program.relations.get(t.text)
        expected = [_COLUMN_SORT.get(ty) for ty in decl.types] if decl else None
        args = self.args(")", expected)
        return Atom(t.text, tuple(args), t.line)

    def args(self, close, expected=None):
        # expected: one sort hint per position, or a single hint for all
        out = []
        if self.peek().kind != close:
            while True:
                if isinstance(expected, list):
                    hint = expected[len(out)] if len(out) < len(expected) else None
                else:
                    hint = expected
                out.append(self.expr(hint))
                if self.peek().kind != ",":
                    break
                self.next()
        self.expect(close)
        return out

    def literal(self):
        t = self.peek()
        if t.kind == "var" and self.peek(1).kind == ":=":
            self.next()
            self.next()
            return Bind(t.text, self.expr())
        if t.kind == "name" and t.text in BUILTIN_LITERALS and self.peek(1).kind == "(":
            self.next()
            self.next()
            if t.text == "is_sat":
                e = self.expr(_FORMULAS)
                self.expect(")")
                return IsSat(e)
            if t.text == "get_model":
                e = self.expr(_FORMULAS)
                self.expect(",")
                v = self.expect("var")
                self.expect(")")
                return GetModel(e, v.text)
            a = self.expr()
            self.expect(",")
            b = self.expr()
            self.expect(")")
            return NotMember(a, b)
        left = self.expr()
        if self.peek().kind in COMPARISONS:
            op = self.next().kind
            return Compare(op, left, self.expr())
        if isinstance(left, Call) and not left.evaluated:
            return Atom(left.name, left.args, t.line)
        raise self.error("expected a body literal", t)

    def expr(self, hint=None):
        t = self.next()
        if t.kind == "var":
            return Var(t.text)
        if t.kind == "wild":
            return Wildcard()
        if t.kind == "int":
            return Const(int(t.text))
        if t.kind == "smt":
            return Const(self.smt_term(t, T.BOOL if hint is _FORMULAS else hint))
        if t.kind == "[":
            return ListExpr(tuple(self.args("]", T.BOOL if hint is _FORMULAS else None)))
        if t.kind == "name":
            if self.peek().kind == "(":
                self.next()
                if hint is _FORMULAS and t.text in ("cons", "snoc", "append"):
                    args = tuple(self.args(")", hint))
                else:
                    args = tuple(self.args(")"))
                if t.text == "cons" and len(args) != 2:
                    raise self.error("cons takes two arguments", t)
                if t.text in FUNCTIONS and FUNCTIONS[t.text] != len(args):
                    raise self.error(f"{t.text} takes {FUNCTIONS[t.text]} arguments", t)
                return Call(t.text, args)
            if t.text == "nil":
                return Const(())
            if t.text in FUNCTIONS and FUNCTIONS[t.text] == 0:
                return Call(t.text, ())
            return Const(t.text)
        raise DatalogSyntaxError(f"unexpected {t.text or t.kind!r}", t.line, t.col)

    def smt_term(self, tok, expected=None):
        try:
            term = self.reader.read(tok.text, expected)
        except (SortError, SortClash) as e:
            if RESERVED_PREFIX in str(e):
                raise ReservedNameError(str(e), tok.line, tok.col) from None
            raise DatalogSyntaxError(f"bad SMT term: {e}", tok.line, tok.col) from None
        return term

    # -- validation ---------------------------------------------------------

    def check_clause(self, head, body, start):
        rels = self.program.relations
        for a in [head] + [b for b in body if isinstance(b, Atom)]:
            if a.relation not in rels:
                raise UnknownRelation(f"unknown relation {a.relation!r}", a.line, 1)
            if len(a.args) != rels[a.relation].arity:
                raise ArityError(f"{a.relation} has arity {rels[a.relation].arity}, used with {len(a.args)}",
                                 a.line, 1)
        if not body:
            self.fact(head, start)
            return
        bound: set = set()
        for lit in body:
            if isinstance(lit, Atom):
                for arg in lit.args:
                    need = expr_vars(arg) - expr_vars(arg, pattern=True)
                    self._require(need, bound, lit, start)
                for arg in lit.args:
                    bound |= expr_vars(arg, pattern=True)
            elif isinstance(lit, Bind):
                self._require(expr_vars(lit.expr), bound, lit, start)
                bound.add(lit.var)
            elif isinstance(lit, GetModel):
                self._require(expr_vars(lit.expr), bound, lit, start)
                bound.add(lit.var)
            elif isinstance(lit, IsSat):
                self._require(expr_vars(lit.expr), bound, lit, start)
            elif isinstance(lit, NotMember):
                self._require(expr_vars(lit.item) | expr_vars(lit.collection), bound, lit, start)
            elif isinstance(lit, Compare):
                self._require(expr_vars(lit.left) | expr_vars(lit.right), bound, lit, start)
        for arg in head.args:
            if isinstance(arg, Wildcard) or _has_wildcard(arg):
                raise RangeRestrictionError("wildcard in rule head", start.line, start.col)
        missing = set().union(*(expr_vars(a) for a in head.args)) - bound if head.args else set()
        if missing:
            raise RangeRestrictionError(
                f"head variable(s) {', '.join(sorted(missing))} do not occur in a positive body atom",
                start.line, start.col)
        self.program.rules.append(Rule(head, list(body), start.line))

    def _require(self, need, bound, lit, start):
        missing = need - bound
        if missing:
            raise RangeRestrictionError(
                f"variable(s) {', '.join(sorted(missing))} used before being bound in {type(lit).__name__}",
                start.line, start.col)

    def fact(self, head, start):
        decl = self.program.relations[head.relation]
        values = []
        for arg, ty in zip(head.args, decl.types):
            if expr_vars(arg) or _has_wildcard(arg):
                raise RangeRestrictionError("facts must be ground", start.line, start.col)
            v = ground_value(arg, max_path_len=None)
            if not type_ok(v, ty):
                raise DatalogError(f"value {format_value(v)} does not fit column type {ty}",
                                   start.line, start.col)
            values.append(v)
        self.program.facts.append((head.relation, tuple(values)))


def _has_wildcard(e):
    if isinstance(e, Wildcard):
        return True
    if isinstance(e, ListExpr):
        return any(_has_wildcard(x) for x in e.items)
    if isinstance(e, Call):
        return any(_has_wildcard(x) for x in e.args)
    return False


def type_ok(v, ty) -> bool:
    if ty == "any":
        return True
    if ty == "int":
        return isinstance(v, int) and not isinstance(v, bool)
    if ty == "sym":
        return isinstance(v, str)
    if ty == "list":
        return isinstance(v, tuple)
    if ty == "smt_list":
        return isinstance(v, tuple) and all(isinstance(x, T.Term) and x.sort.is_bool for x in v)
    if not isinstance(v, T.Term):
        return False
    if ty == "smt_bool":
        return v.sort.is_bool
    if ty == "smt_int":
        return v.sort.is_int
    if ty == "smt_bv":
        return v.sort.is_bv
    return True


def ground_value(e, max_path_len):
    from smtlog.datalog.engine import eval_expr

    return eval_expr(e, {}, max_path_len)


def parse_program(text: str) -> Program:
    """Parse and validate program text."""
    p = _Parser(text)
    prog = p.parse()
    prog.symbols = dict(p.reader.symbols)
    return prog
