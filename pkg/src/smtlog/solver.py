"""Solver sessions and the three query strategies.

A query is an ordered list of canonical conjuncts.  Each strategy turns it
into SMT-LIB commands differently:

* ``naive``: push a frame, assert every conjunct, check, pop.
* ``pp``: keep one frame per conjunct; pop until the frame stack is a prefix
  of the query, push the rest, check.
* ``csa``: assert ``(=> x phi)`` once per distinct conjunct with a fresh
  guard ``x`` and check with ``(check-sat-assuming (x ...))``.

The strategies only differ in how much solver state they reuse; the verdict
for a query must not depend on the strategy.
"""

from __future__ import annotations

import logging
import os
import queue
import shlex
import subprocess
import tempfile
import threading
import time
from dataclasses import asdict, dataclass, fields
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence

from smtlog import smtlib as S
from smtlog import terms as T
from smtlog.errors import (HandshakeError, ProtocolError, SolverCrash, SolverTimeout,
                           SpawnError)
from smtlog.reference import DEFAULT_DOMAIN_BOUND, ReferenceBackend
from smtlog.smtlib import AssumptionVar, SatResult
from smtlog.terms import Conjunct

log = logging.getLogger(__name__)

SOLVER_ENV = "SMTLOG_SOLVER"
DEFAULT_COMMAND = ("z3", "-in")
HANDSHAKE_TIMEOUT = 10.0


class Strategy(str, Enum):
    NAIVE = "naive"
    PP = "pp"
    CSA = "csa"

    def __str__(self):
        return self.value


@dataclass
class SolverConfig:
    command: Sequence[str] = DEFAULT_COMMAND
    logic: str = "ALL"
    timeout_ms: int = 0
    restart_on_crash: bool = True
    stderr_log: Optional[str] = None

    def __post_init__(self):
        if isinstance(self.command, str):
            self.command = shlex.split(self.command)
        self.command = tuple(self.command)
        if not self.command:
            raise ValueError("solver command must not be empty")
        if self.logic != "ALL" and not T.SIMPLE_SYMBOL.match(self.logic):
            raise ValueError(f"invalid logic name {self.logic!r}")
        if self.timeout_ms < 0:
            raise ValueError("timeout_ms must be nonnegative")

    def resolved_command(self) -> tuple:
        override = os.environ.get(SOLVER_ENV)
        if override:
            return tuple(shlex.split(override))
        return self.command


@dataclass
class Metrics:
    checks: int = 0
    asserts: int = 0
    pushes: int = 0
    pops: int = 0
    sat: int = 0
    unsat: int = 0
    unknown: int = 0
    solver_wall_ns: int = 0
    total_wall_ns: int = 0
    prefix_len_sum: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    restarts: int = 0
    replayed_asserts: int = 0

    @property
    def mean_common_prefix(self) -> float:
        return self.prefix_len_sum / self.checks if self.checks else 0.0

    def add(self, other: "Metrics") -> "Metrics":
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def copy(self) -> "Metrics":
        return Metrics(**asdict(self))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["mean_common_prefix"] = self.mean_common_prefix
        return d


def common_prefix_len(a: Sequence, b: Sequence) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


@dataclass(frozen=True)
class AlignmentPlan:
    pops: int
    pushes: tuple

    def apply(self, stack: Sequence) -> list:
        kept = list(stack[:len(stack) - self.pops]) if self.pops else list(stack)
        return kept + list(self.pushes)


def plan_pp(pp_stack: Sequence[Conjunct], query: Sequence[Conjunct]) -> AlignmentPlan:
    keep = common_prefix_len(pp_stack, query)
    return AlignmentPlan(len(pp_stack) - keep, tuple(query[keep:]))


@dataclass(frozen=True)
class CsaPlan:
    new_assertions: tuple
    assumptions: tuple

    @property
    def next_index(self) -> int:
        return self.new_assertions[-1][0].index + 1 if self.new_assertions else 0


def plan_csa(csa_map: dict, query: Sequence[Conjunct], next_index: Optional[int] = None) -> CsaPlan:
    """Guards for ``query``: reuse mapped ones, mint fresh ones for the rest.

    ``next_index`` is the session's monotone guard counter; by default one
    past the largest index already in ``csa_map``.
    """
    if next_index is None:
        next_index = max((x.index for x in csa_map.values()), default=0) + 1
    fresh = {}
    new = []
    assumptions = []
    for c in query:
        x = csa_map.get(c) or fresh.get(c)
        if x is None:
            x = AssumptionVar(next_index)
            next_index += 1
            fresh[c] = x
            new.append((x, c))
        assumptions.append(x)
    return CsaPlan(tuple(new), tuple(assumptions))


# --------------------------------------------------------------------------
# Process backend


class ProcessBackend:
    """A solver child process speaking SMT-LIB on stdin/stdout."""

    def __init__(self, command: Sequence[str], stderr_log: Optional[str] = None):
        self.command = tuple(command)
        self.stderr_log = stderr_log
        self.proc = None
        self._lines: queue.Queue = queue.Queue()
        self._errfile = None

    @property
    def name(self):
        return os.path.basename(self.command[0])

    @property
    def alive(self):
        return self.proc is not None and self.proc.poll() is None

    def start(self):
        if self.stderr_log:
            self._errfile = open(self.stderr_log, "ab")
        else:
            self._errfile = tempfile.NamedTemporaryFile(prefix="smtlog-stderr-", suffix=".log",
                                                        delete=False)
        self.stderr_path = self._errfile.name
        try:
            self.proc = subprocess.Popen(self.command, stdin=subprocess.PIPE,
                                         stdout=subprocess.PIPE, stderr=self._errfile,
                                         bufsize=0)
        except OSError as e:
            self._errfile.close()
            raise SpawnError(f"cannot start solver {' '.join(self.command)!r}: {e}") from e
        self._lines = queue.Queue()
        threading.Thread(target=self._pump, args=(self.proc.stdout, self._lines),
                         daemon=True).start()

    @staticmethod
    def _pump(stream, lines):
        try:
            for raw in iter(stream.readline, b""):
                lines.put(raw.decode("utf-8", "replace"))
        except (OSError, ValueError):
            pass
        lines.put(None)

    def send(self, cmds: Iterable[S.Command]):
        data = S.serialize_script(cmds).encode()
        if not self.alive:
            raise SolverCrash(f"solver {self.name} is not running{self._stderr_tail()}")
        try:
            self.proc.stdin.write(data)
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise SolverCrash(f"solver {self.name} died: {e}{self._stderr_tail()}") from e

    def _next_line(self, deadline):
        wait = None if deadline is None else max(0.0, deadline - time.monotonic())
        try:
            line = self._lines.get(timeout=wait)
        except queue.Empty:
            raise SolverTimeout(f"no response from {self.name} in time") from None
        if line is None:
            self._lines.put(None)
            raise SolverCrash(f"solver {self.name} closed its output{self._stderr_tail()}")
        return line

    def read(self, timeout: Optional[float] = None) -> str:
        """Next complete response (an atom or a balanced s-expression)."""
        deadline = None if timeout is None else time.monotonic() + timeout
        buf = ""
        while True:
            line = self._next_line(deadline)
            stripped = line.strip()
            if not buf and (not stripped or stripped.startswith(";")):
                continue
            buf += line
            try:
                depth = S.paren_depth(buf)
            except ProtocolError:
                # unterminated string literal spanning lines
                continue
            if depth <= 0:
                return buf.strip()

    def _stderr_tail(self):
        try:
            with open(self.stderr_path, "rb") as f:
                tail = f.read()[-400:].decode("utf-8", "replace").strip()
        except (OSError, AttributeError):
            return ""
        return f" (stderr: {tail})" if tail else ""

    def kill(self):
        if self.proc is not None and self.proc.poll() is None:
            self.proc.kill()
        self._reap()

    def close(self, grace: float = 2.0):
        if self.proc is None:
            return
        if self.proc.poll() is None:
            try:
                self.proc.stdin.write(S.serialize_command(S.Exit()).encode())
                self.proc.stdin.flush()
            except OSError:
                pass
            try:
                self.proc.wait(grace)
            except subprocess.TimeoutExpired:
                self.proc.kill()
        self._reap()

    def _reap(self):
        if self.proc is None:
            return
        try:
            self.proc.wait(5)
        except subprocess.TimeoutExpired:
            pass
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        if self._errfile is not None:
            self._errfile.close()


def _timeout_options(command, timeout_ms):
    if not timeout_ms:
        return []
    exe = os.path.basename(command[0])
    if exe.startswith("z3"):
        return [S.SetOption(":timeout", str(timeout_ms))]
    if exe.startswith("cvc"):
        return [S.SetOption(":tlimit-per", str(timeout_ms))]
    return []


# --------------------------------------------------------------------------
# Sessions


class Session:
    """A live solver plus the per-strategy state.

    A session is exclusive-use: one operation at a time.
    """

    _READY = "__smtlog_ready__"
    _LOGIC_OK = "__smtlog_logic__"

    def __init__(self, strategy, backend_factory: Callable, config: Optional[SolverConfig] = None):
        self.strategy = Strategy(strategy)
        self.config = config or SolverConfig()
        self._factory = backend_factory
        self.backend = None
        self.metrics = Metrics()
        self.declared: dict = {}
        self.pp_stack: list = []
        self.csa_map: dict = {}
        self._next_index = 1
        self._prev_query: tuple = ()
        self._busy = threading.Lock()
        self.global_declarations = True
        self.closed = False
        self._start()

    # -- lifecycle --------------------------------------------------------

    def _start(self):
        backend = self._factory()
        backend.start()
        self.backend = backend
        try:
            self._handshake()
        except (SolverCrash, SolverTimeout, ProtocolError) as e:
            self.backend.kill()
            raise HandshakeError(f"solver handshake failed: {e}") from e

    def _handshake(self):
        b = self.backend
        opts = [S.SetOption(":print-success", "false"),
                S.SetOption(":global-declarations", "true"),
                *_timeout_options(self.config.resolved_command(), self.config.timeout_ms)]
        b.send(opts + [S.Echo(self._READY), S.SetLogic(self.config.logic), S.Echo(self._LOGIC_OK)])
        complaints = []
        while True:
            r = b.read(HANDSHAKE_TIMEOUT)
            if r.strip('"') == self._READY:
                break
            if r != "success":
                complaints.append(r)
        if complaints:
            # an option we rely on may be missing; fall back to declaring at depth 0
            self.global_declarations = False
            log.info("solver rejected options: %s", complaints)
        rejected = []
        while True:
            r = b.read(HANDSHAKE_TIMEOUT)
            if r.strip('"') == self._LOGIC_OK:
                break
            if r != "success":
                rejected.append(r)
        if rejected:
            b.kill()
            raise HandshakeError(f"solver rejected (set-logic {self.config.logic}): {' '.join(rejected)}")

    def _restart(self):
        self.backend.kill()
        self.metrics.restarts += 1
        self.declared = {}
        self.pp_stack = []
        self._start()
        if self.strategy is Strategy.CSA and self.csa_map:
            pairs = sorted(((x, c) for c, x in self.csa_map.items()), key=lambda xc: xc[0].index)
            cmds = self._csa_assertions(pairs)
            self.backend.send(cmds)
            self.metrics.replayed_asserts += len(self.csa_map)

    def close(self) -> Metrics:
        if not self.closed:
            self.closed = True
            if self.backend is not None:
                self.backend.close()
        return self.metrics.copy()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- queries ----------------------------------------------------------

    def check(self, query: Sequence) -> SatResult:
        return self._run(query, want_model=False)[0]

    def get_model(self, query: Sequence) -> Optional[S.Model]:
        result, model = self._run(query, want_model=True)
        return model if result.is_sat else None

    def _run(self, query, want_model):
        query = tuple(T.canonicalize(q) for q in query)
        if not query:
            raise ValueError("query must contain at least one conjunct")
        if self.closed:
            raise SolverCrash("session is closed")
        if not self._busy.acquire(blocking=False):
            raise RuntimeError("session is already in use")
        t0 = time.perf_counter_ns()
        try:
            result, model = self._with_recovery(query, want_model)
        finally:
            self._busy.release()
            self.metrics.total_wall_ns += time.perf_counter_ns() - t0
        m = self.metrics
        m.checks += 1
        m.prefix_len_sum += common_prefix_len(self._prev_query, query)
        self._prev_query = query
        if result.is_sat:
            m.sat += 1
        elif result.is_unsat:
            m.unsat += 1
        else:
            m.unknown += 1
        return result, model

    def _with_recovery(self, query, want_model):
        attempt = 0
        while True:
            try:
                return self._dispatch(query, want_model)
            except SolverTimeout:
                log.warning("solver timed out; restarting")
                self._restart()
                return S.unknown("timeout"), None
            except SolverCrash:
                if not self.config.restart_on_crash or attempt >= 1:
                    raise
                attempt += 1
                log.warning("solver crashed; restarting and retrying the query")
                self._restart()

    def _read_timeout(self):
        ms = self.config.timeout_ms
        return None if not ms else ms / 1000.0 + 1.0

    def _declare(self, conjuncts) -> list:
        cmds = S.declarations_for(conjuncts, self.declared)
        for c in cmds:
            self.declared[c.name] = c.sort if isinstance(c, S.DeclareConst) else \
                T.FunDecl(c.name, c.arg_sorts, c.ret)
        return cmds

    def _dispatch(self, query, want_model):
        delta = Metrics()
        if self.strategy is Strategy.NAIVE:
            cmds = self._declare(query)
            cmds.append(S.Push(1))
            cmds.extend(S.Assert(c.term) for c in query)
            cmds.append(S.CheckSat())
            if not want_model:
                cmds.append(S.Pop(1))
            delta.pushes, delta.asserts, delta.pops = 1, len(query), 1
            after = [S.Pop(1)] if want_model else []
        elif self.strategy is Strategy.PP:
            plan = plan_pp(self.pp_stack, query)
            decls = self._declare(plan.pushes)
            if decls and not self.global_declarations and len(self.pp_stack) > plan.pops:
                plan = AlignmentPlan(len(self.pp_stack), tuple(query))
            cmds = [S.Pop(plan.pops)] if plan.pops else []
            cmds.extend(decls)
            for c in plan.pushes:
                cmds.append(S.Push(1))
                cmds.append(S.Assert(c.term))
            cmds.append(S.CheckSat())
            self.pp_stack = plan.apply(self.pp_stack)
            delta.pushes, delta.asserts, delta.pops = len(plan.pushes), len(plan.pushes), plan.pops
            after = []
        else:
            plan = plan_csa(self.csa_map, query, self._next_index)
            cmds = self._csa_assertions(plan.new_assertions)
            cmds.append(S.CheckSatAssuming(plan.assumptions))
            for x, c in plan.new_assertions:
                self.csa_map[c] = x
            if plan.new_assertions:
                self._next_index = plan.next_index
            delta.asserts = len(plan.new_assertions)
            after = []

        t0 = time.perf_counter_ns()
        try:
            self.backend.send(cmds)
            # commands that reached the solver count even if it dies later
            self.metrics.pushes += delta.pushes
            self.metrics.asserts += delta.asserts
            self.metrics.pops += delta.pops
            result = S.parse_check_sat_response(self.backend.read(self._read_timeout()))
            model = None
            if want_model and result.is_sat:
                self.backend.send([S.GetModel()])
                model = S.parse_model(self.backend.read(self._read_timeout()))
                model = model.without_prefix(AssumptionVar.PREFIX)
            if after:
                self.backend.send(after)
        finally:
            elapsed = time.perf_counter_ns() - t0
            self.metrics.solver_wall_ns += elapsed
        if result.is_unknown and self.config.timeout_ms:
            if elapsed >= 0.9 * self.config.timeout_ms * 1_000_000:
                result = S.unknown("timeout")
        return result, model

    def _csa_assertions(self, pairs) -> list:
        cmds = self._declare([c for _, c in pairs])
        for x, _ in pairs:
            cmds.append(S.DeclareConst(x.name, T.BOOL))
            self.declared[x.name] = T.BOOL
        cmds.extend(S.Assert(T.implies(x.term, c.term)) for x, c in pairs)
        return cmds


def open_session(config: SolverConfig, strategy) -> Session:
    """Spawn the configured solver and return a ready session."""
    return Session(strategy,
                   lambda: ProcessBackend(config.resolved_command(), config.stderr_log),
                   config)


def open_reference_session(strategy, domain_bound: int = DEFAULT_DOMAIN_BOUND,
                           restart_on_crash: bool = True) -> Session:
    """A session backed by the in-process brute-force backend."""
    config = SolverConfig(command=("<reference>",), restart_on_crash=restart_on_crash)
    return Session(strategy, lambda: ReferenceBackend(domain_bound), config)


def close_session(session: Session) -> Metrics:
    return session.close()


def solver_available(config: Optional[SolverConfig] = None) -> bool:
    """True when the configured solver binary can be spawned."""
    import shutil

    cmd = (config or SolverConfig()).resolved_command()
    return shutil.which(cmd[0]) is not None
