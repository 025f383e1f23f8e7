"""SMT-LIB 2.6 text: term/command serialization and response parsing."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

from smtlog import terms as T
from smtlog.errors import ProtocolError, SortClash, SortError
from smtlog.terms import BOOL, INT, Conjunct, FunDecl, Sort, Term

# --------------------------------------------------------------------------
# Serialization


def symbol(name: str) -> str:
    return name if T.SIMPLE_SYMBOL.match(name) else f"|{name}|"


def serialize_sort(s: Sort) -> str:
    return str(s)


def _const_text(t: Term) -> str:
    s = t.sort
    if s.is_bool:
        return "true" if t.value else "false"
    if s.is_int:
        return str(t.value) if t.value >= 0 else f"(- {-t.value})"
    return "#b" + format(t.value, f"0{s.width}b")


def serialize_term(t: Union[Term, Conjunct]) -> str:
    if isinstance(t, Conjunct):
        t = t.term
    out = []
    # iterative to cope with deep terms
    stack = [t]
    while stack:
        u = stack.pop()
        if isinstance(u, str):
            out.append(u)
            continue
        if u.kind == T.CONST:
            out.append(_const_text(u))
        elif u.kind == T.VAR:
            out.append(symbol(u.op))
        else:
            if u.op == "extract":
                head = f"((_ extract {u.params[0]} {u.params[1]})"
            else:
                head = "(" + symbol(u.name)
            out.append(head)
            stack.append(")")
            for a in reversed(u.args):
                stack.append(a)
                stack.append(" ")
    return "".join(out)


@dataclass(frozen=True)
class AssumptionVar:
    """Fresh Boolean guard for one conjunct under check-sat-assuming."""

    index: int
    name: str = ""

    PREFIX = "__csa_"

    def __post_init__(self):
        if not self.name:
            object.__setattr__(self, "name", f"{self.PREFIX}{self.index}")

    @property
    def term(self) -> Term:
        return T.var(self.name, BOOL)


class Command:
    """Base class of SMT-LIB commands; ``str(cmd)`` is its wire form."""

    def text(self) -> str:
        raise NotImplementedError

    def __str__(self):
        return self.text()

    expects_response = False


@dataclass(frozen=True)
class SetLogic(Command):
    logic: str

    def text(self):
        return f"(set-logic {self.logic})"


@dataclass(frozen=True)
class SetOption(Command):
    key: str
    value: str

    def text(self):
        key = self.key if self.key.startswith(":") else ":" + self.key
        return f"(set-option {key} {self.value})"


@dataclass(frozen=True)
class DeclareConst(Command):
    name: str
    sort: Sort

    def text(self):
        return f"(declare-const {symbol(self.name)} {self.sort})"


@dataclass(frozen=True)
class DeclareFun(Command):
    name: str
    arg_sorts: tuple
    ret: Sort

    def text(self):
        args = " ".join(str(s) for s in self.arg_sorts)
        return f"(declare-fun {symbol(self.name)} ({args}) {self.ret})"


@dataclass(frozen=True)
class Assert(Command):
    term: Term

    def text(self):
        return f"(assert {serialize_term(self.term)})"


@dataclass(frozen=True)
class Push(Command):
    n: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("push count must be >= 1")

    def text(self):
        return f"(push {self.n})"


@dataclass(frozen=True)
class Pop(Command):
    n: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("pop count must be >= 1")

    def text(self):
        return f"(pop {self.n})"


@dataclass(frozen=True)
class CheckSat(Command):
    expects_response = True

    def text(self):
        return "(check-sat)"


@dataclass(frozen=True)
class CheckSatAssuming(Command):
    assumptions: tuple

    expects_response = True

    def __post_init__(self):
        object.__setattr__(self, "assumptions", tuple(self.assumptions))
        if not self.assumptions:
            raise ValueError("check-sat-assuming needs at least one assumption")

    def text(self):
        names = " ".join(symbol(a.name if isinstance(a, AssumptionVar) else a)
                         for a in self.assumptions)
        return f"(check-sat-assuming ({names}))"


@dataclass(frozen=True)
class GetModel(Command):
    expects_response = True

    def text(self):
        return "(get-model)"


@dataclass(frozen=True)
class Echo(Command):
    message: str

    expects_response = True

    def text(self):
        return '(echo "' + self.message.replace('"', '""') + '")'


@dataclass(frozen=True)
class Exit(Command):
    def text(self):
        return "(exit)"


def serialize_command(c: Command) -> str:
    return c.text() + "\n"


def serialize_script(cmds: Iterable[Command]) -> str:
    return "".join(serialize_command(c) for c in cmds)


# --------------------------------------------------------------------------
# S-expressions

_TOKEN = re.compile(r"""
    (?P<ws>\s+|;[^\n]*)
  | (?P<lp>\()
  | (?P<rp>\))
  | (?P<str>"(?:[^"]|"")*")
  | (?P<qsym>\|[^|\\]*\|)
  | (?P<atom>[^\s()";|]+)
""", re.VERBOSE)


class Str(str):
    """A string literal (as opposed to a symbol) in a parsed s-expression."""


def tokenize(text: str):
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ProtocolError(f"unexpected character {text[pos]!r} at {pos}", raw=text)
        pos = m.end()
        kind = m.lastgroup
        if kind == "ws":
            continue
        tok = m.group()
        if kind == "str":
            yield ("str", Str(tok[1:-1].replace('""', '"')))
        elif kind == "qsym":
            yield ("atom", tok[1:-1])
        else:
            yield (kind, tok)


def parse_sexprs(text: str) -> list:
    """Parse all s-expressions in ``text``; lists become Python lists."""
    stack = [[]]
    for kind, tok in tokenize(text):
        if kind == "lp":
            stack.append([])
        elif kind == "rp":
            if len(stack) == 1:
                raise ProtocolError("unbalanced ')'", raw=text)
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise ProtocolError("unbalanced '('", raw=text)
    return stack[0]


def parse_sexpr(text: str):
    items = parse_sexprs(text)
    if len(items) != 1:
        raise ProtocolError(f"expected one s-expression, got {len(items)}", raw=text)
    return items[0]


def paren_depth(text: str) -> int:
    """Net parenthesis depth of ``text`` ignoring strings, quoted symbols and comments."""
    depth = 0
    for kind, _ in tokenize(text):
        if kind == "lp":
            depth += 1
        elif kind == "rp":
            depth -= 1
    return depth


# --------------------------------------------------------------------------
# Responses

SAT, UNSAT, UNKNOWN = "sat", "unsat", "unknown"


@dataclass(frozen=True)
class SatResult:
    verdict: str
    reason: Optional[str] = None

    def __post_init__(self):
        if self.verdict not in (SAT, UNSAT, UNKNOWN):
            raise ValueError(f"bad verdict {self.verdict!r}")
        if self.verdict != UNKNOWN and self.reason is not None:
            raise ValueError("only unknown verdicts carry a reason")

    @property
    def is_sat(self):
        return self.verdict == SAT

    @property
    def is_unsat(self):
        return self.verdict == UNSAT

    @property
    def is_unknown(self):
        return self.verdict == UNKNOWN

    def __str__(self):
        return self.verdict


RESULT_SAT = SatResult(SAT)
RESULT_UNSAT = SatResult(UNSAT)


def unknown(reason="incomplete") -> SatResult:
    return SatResult(UNKNOWN, reason)


def _error_message(sx) -> Optional[str]:
    if isinstance(sx, list) and sx and sx[0] == "error":
        return str(sx[1]) if len(sx) > 1 else ""
    return None


def parse_check_sat_response(text: str) -> SatResult:
    s = text.strip()
    if s == "sat":
        return RESULT_SAT
    if s == "unsat":
        return RESULT_UNSAT
    if s == "unknown":
        return unknown("incomplete")
    try:
        sx = parse_sexpr(s)
    except ProtocolError:
        raise ProtocolError(f"unparseable check-sat response: {s!r}", raw=text) from None
    msg = _error_message(sx)
    if msg is not None:
        raise ProtocolError(f"solver error: {msg}", raw=text)
    raise ProtocolError(f"unexpected check-sat response: {s!r}", raw=text)


@dataclass
class Model:
    bindings: dict = field(default_factory=dict)
    skipped: bool = False

    def __getitem__(self, name):
        for (n, _), v in self.bindings.items():
            if n == name:
                return v
        raise KeyError(name)

    def __contains__(self, name):
        return any(n == name for n, _ in self.bindings)

    def get(self, name, default=None):
        try:
            return self[name]
        except KeyError:
            return default

    def as_env(self) -> dict:
        return {n: v for (n, _), v in self.bindings.items()}

    def without_prefix(self, prefix: str = AssumptionVar.PREFIX) -> "Model":
        return Model({k: v for k, v in self.bindings.items() if not k[0].startswith(prefix)},
                     self.skipped)


def sexpr_to_sort(sx) -> Sort:
    if isinstance(sx, list):
        if len(sx) == 3 and sx[0] == "_" and sx[1] == "BitVec":
            try:
                return T.bitvec(int(sx[2]))
            except ValueError:
                pass
        raise SortError(f"unsupported sort {sx!r}")
    if sx == "Bool":
        return BOOL
    if sx == "Int":
        return INT
    return T.uninterpreted(sx)


_NUMERAL = re.compile(r"^(0|[1-9][0-9]*)$")


def sexpr_to_value(sx, sort: Sort):
    """Decode a constant value s-expression of the given sort."""
    if sort.is_bool:
        if sx == "true":
            return True
        if sx == "false":
            return False
    elif sort.is_int:
        if isinstance(sx, str) and not isinstance(sx, Str) and _NUMERAL.match(sx):
            return int(sx)
        if isinstance(sx, list) and len(sx) == 2 and sx[0] == "-":
            inner = sexpr_to_value(sx[1], sort)
            return -inner
    elif sort.is_bv:
        w = sort.width
        if isinstance(sx, str):
            if sx.startswith("#b") and len(sx) == 2 + w and set(sx[2:]) <= {"0", "1"}:
                return int(sx[2:], 2)
            if sx.startswith("#x") and len(sx) == 2 + w // 4 and w % 4 == 0:
                try:
                    return int(sx[2:], 16)
                except ValueError:
                    pass
        if (isinstance(sx, list) and len(sx) == 3 and sx[0] == "_"
                and isinstance(sx[1], str) and sx[1].startswith("bv") and sx[2] == str(w)):
            try:
                v = int(sx[1][2:])
            except ValueError:
                v = -1
            if 0 <= v < (1 << w):
                return v
    raise ProtocolError(f"cannot read {sx!r} as a value of sort {sort}")


def parse_model(text: str) -> Model:
    items = parse_sexprs(text)
    if len(items) != 1 or not isinstance(items[0], list):
        raise ProtocolError("model must be a single parenthesised list", raw=text)
    entries = items[0]
    msg = _error_message(entries)
    if msg is not None:
        raise ProtocolError(f"solver error: {msg}", raw=text)
    if entries and entries[0] == "model":
        entries = entries[1:]
    model = Model()
    for e in entries:
        if not (isinstance(e, list) and e and e[0] == "define-fun" and len(e) == 5):
            model.skipped = True
            continue
        _, name, params, sort_sx, value_sx = e
        if params:
            model.skipped = True
            continue
        try:
            sort = sexpr_to_sort(sort_sx)
        except SortError:
            model.skipped = True
            continue
        if sort.kind == "Uninterpreted":
            model.skipped = True
            continue
        if any(n == name for n, _ in model.bindings):
            raise ProtocolError(f"duplicate model entry for {name!r}", raw=text)
        model.bindings[(name, sort)] = sexpr_to_value(value_sx, sort)
    return model


def value_text(value, sort: Sort) -> str:
    return _const_text(T.const(value, sort))


def serialize_model(model: Mapping) -> str:
    """Render a ``{(name, sort): value}`` mapping in get-model response form."""
    lines = ["("]
    for (name, sort), value in model.items():
        lines.append(f"  (define-fun {symbol(name)} () {sort} {value_text(value, sort)})")
    lines.append(")")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# Declarations


def declarations_for(conjuncts: Sequence, already_declared) -> list:
    """Declarations for every symbol of ``conjuncts`` not in ``already_declared``.

    ``already_declared`` may be a set of names or a mapping of name -> sort
    (or FunDecl); with a mapping, clashes with earlier declarations are
    reported too.  The caller records the new names.
    """
    seen: dict = {}
    for c in conjuncts:
        for name, sort in T.free_vars(c):
            _note(seen, name, sort)
        for f in T.free_funs(c):
            _note(seen, f.name, f)
    cmds = []
    for name in sorted(seen):
        what = seen[name]
        if name in already_declared:
            if isinstance(already_declared, Mapping) and already_declared[name] != what:
                raise SortClash(f"{name!r} already declared as {already_declared[name]}, used as {what}")
            continue
        if isinstance(what, FunDecl):
            cmds.append(DeclareFun(name, what.arg_sorts, what.ret))
        else:
            cmds.append(DeclareConst(name, what))
    return cmds


def _note(seen, name, what):
    prev = seen.get(name)
    if prev is not None and prev != what:
        raise SortClash(f"{name!r} used with two sorts: {prev} and {what}")
    seen[name] = what


# --------------------------------------------------------------------------
# Reading terms


class TermReader:
    """Convert SMT-LIB term text to :class:`Term`, inferring symbol sorts.

    Unknown symbols get their sort from context (the other side of ``=``,
    the operator's argument sorts, or an expected sort).  The reader keeps
    its symbol table across calls so one name keeps one sort.
    """

    def __init__(self, symbols: Optional[dict] = None, functions: Optional[dict] = None):
        self.symbols: dict = dict(symbols or {})
        self.functions: dict = dict(functions or {})

    def read(self, text: str, expected: Optional[Sort] = None) -> Term:
        try:
            sx = parse_sexpr(text)
        except ProtocolError as e:
            raise SortError(f"bad SMT-LIB term {text!r}: {e}") from None
        return self.build(sx, expected)

    # a literal we can type without context
    def _infer(self, sx) -> Optional[Sort]:
        if isinstance(sx, list):
            if not sx:
                raise SortError("empty application")
            head = sx[0]
            if isinstance(head, list):
                if len(head) == 4 and head[:2] == ["_", "extract"]:
                    return T.bitvec(int(head[2]) - int(head[3]) + 1)
                raise SortError(f"unsupported indexed operator {head!r}")
            if head in ("not", "and", "or", "=>", "=", "<", "<=", ">", ">=", "bvult", "bvule"):
                return BOOL
            if head in ("+", "-", "*"):
                return INT
            if head in ("bvadd", "bvsub", "bvand", "bvor"):
                for a in sx[1:]:
                    s = self._infer(a)
                    if s is not None:
                        return s
                return None
            if head == "concat":
                parts = [self._infer(a) for a in sx[1:]]
                if len(parts) == 2 and all(p is not None for p in parts):
                    return T.bitvec(parts[0].width + parts[1].width)
                return None
            if head == "ite":
                for a in sx[2:]:
                    s = self._infer(a)
                    if s is not None:
                        return s
                return None
            if head == "_" and len(sx) == 3 and str(sx[1]).startswith("bv"):
                return T.bitvec(int(sx[2]))
            if head in self.functions:
                return self.functions[head].ret
            if head == "as" and len(sx) == 3:
                return sexpr_to_sort(sx[2])
            return None
        if isinstance(sx, Str):
            raise SortError("string literals are not supported")
        if sx in ("true", "false"):
            return BOOL
        if _NUMERAL.match(sx):
            return INT
        if sx.startswith("#b"):
            return T.bitvec(len(sx) - 2)
        if sx.startswith("#x"):
            return T.bitvec(4 * (len(sx) - 2))
        return self.symbols.get(sx)

    def build(self, sx, expected: Optional[Sort] = None) -> Term:
        t = self._build(sx, expected)
        if expected is not None and t.sort != expected:
            raise SortError(f"expected {expected}, got {t.sort}")
        return t

    def _symbol(self, name, expected):
        s = self.symbols.get(name)
        if s is None:
            if expected is None:
                raise SortError(f"cannot infer the sort of {name!r}")
            if name.startswith(AssumptionVar.PREFIX):
                raise SortError(f"{name!r} uses the reserved prefix {AssumptionVar.PREFIX}")
            self.symbols[name] = s = expected
        return T.var(name, s)

    def _build(self, sx, expected):
        if not isinstance(sx, list):
            if sx in ("true", "false"):
                return T.bool_const(sx == "true")
            if _NUMERAL.match(sx):
                return T.int_const(int(sx))
            if sx.startswith("#b") or sx.startswith("#x"):
                s = self._infer(sx)
                return T.const(sexpr_to_value(sx, s), s)
            return self._symbol(sx, expected)
        head, rest = sx[0], sx[1:]
        if isinstance(head, list):
            if len(head) == 4 and head[:2] == ["_", "extract"]:
                hi, lo = int(head[2]), int(head[3])
                arg = self.build(rest[0]) if len(rest) == 1 else None
                if arg is None:
                    raise SortError("extract takes one argument")
                return T.mk_term("extract", [arg], (hi, lo))
            raise SortError(f"unsupported indexed operator {head!r}")
        if head == "_":
            s = self._infer(sx)
            return T.const(sexpr_to_value(sx, s), s)
        if head == "as" and len(rest) == 2:
            return self.build(rest[0], sexpr_to_sort(rest[1]))
        if head == "-" and len(rest) == 1 and isinstance(rest[0], str) and _NUMERAL.match(rest[0]):
            return T.int_const(-int(rest[0]))
        if head in self.functions:
            f = self.functions[head]
            return T.mk_term(f, [self.build(a, s) for a, s in zip(rest, f.arg_sorts)])
        if head in ("not", "and", "or", "=>"):
            return T.mk_term(head, [self.build(a, BOOL) for a in rest])
        if head in ("+", "-", "*", "<", "<=", ">", ">="):
            return T.mk_term(head, [self.build(a, INT) for a in rest])
        if head in ("=", "bvadd", "bvsub", "bvand", "bvor", "bvult", "bvule"):
            common = None
            for a in rest:
                common = self._infer(a)
                if common is not None:
                    break
            if common is None and head in ("bvadd", "bvsub", "bvand", "bvor") and expected is not None:
                common = expected
            if common is None:
                raise SortError(f"cannot infer argument sorts of {head}")
            return T.mk_term(head, [self.build(a, common) for a in rest])
        if head == "ite":
            if len(rest) != 3:
                raise SortError("ite takes three arguments")
            branch = self._infer(rest[1]) or self._infer(rest[2]) or expected
            return T.mk_term("ite", [self.build(rest[0], BOOL),
                                     self.build(rest[1], branch), self.build(rest[2], branch)])
        if head == "concat":
            return T.mk_term("concat", [self.build(a) for a in rest])
        raise SortError(f"unsupported operator {head!r}")


def parse_term(text: str, symbols: Optional[dict] = None, expected: Optional[Sort] = None) -> Term:
    """One-shot convenience wrapper around :class:`TermReader`."""
    return TermReader(symbols).read(text, expected)
