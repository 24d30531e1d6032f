"""SMT-LIB 2 rendering and an incremental session with an external solver process."""

from __future__ import annotations

import logging
import os
import re
import select
import shutil
import subprocess
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional

from .terms import BOOL, INT, PERM, REF, SNAP, Fun, Sort, Term, Var, subterms
from .triggers import legal_trigger

log = logging.getLogger(__name__)


class SolverError(Exception):
    """The solver process failed, rejected a command or could not be started."""


# Symbols that clash with SMT-LIB or solver built-ins are renamed.
RESERVED = frozenset("""
and or not xor => ite = distinct true false + - * / div mod abs to_real to_int is_int
< <= > >= select store let forall exists par as _ ! assert check-sat push pop exit
declare-fun declare-const declare-sort define-fun define-sort Int Real Bool Array
concat bvadd const map default subset union intersection difference complement
member empty insert card min max sum
""".split())


def symbol(name: str) -> str:
    if name in RESERVED:
        return "u_%s" % name
    if all(c.isalnum() or c in "~!@$%^&*_-+=<>.?/" for c in name) and not name[0].isdigit():
        return name
    return "|%s|" % name.replace("|", "_")


def sort_name(s: Sort) -> str:
    if s == INT:
        return "Int"
    if s == BOOL:
        return "Bool"
    if s == PERM:
        return "Real"
    if s == REF:
        return "Ref"
    if s == SNAP:
        return "Snap"
    if s.name == "Set":
        return "Set<%s>" % _bare(s.args[0])
    if s.name == "PVM":
        return "PVM<%s>" % s.args[0]
    return symbol("D<%s>" % s.name)


def _bare(s: Sort) -> str:
    n = sort_name(s)
    return n[1:-1] if n.startswith("|") else n


def _real(q: Fraction) -> str:
    q = Fraction(q)
    if q < 0:
        return "(- %s)" % _real(-q)
    if q.denominator == 1:
        return "%d.0" % q.numerator
    return "(/ %d.0 %d.0)" % (q.numerator, q.denominator)


_OPS = {"and": "and", "or": "or", "not": "not", "=>": "=>", "iff": "=", "=": "=",
        "ite": "ite", "<": "<", "<=": "<=", "+": "+", "-": "-", "*": "*", "div": "div",
        "mod": "mod", "/": "/", "neg": "-", "to_real": "to_real", "distinct": "distinct"}


def render(t: Term, triggers: bool = True) -> str:
    """SMT-LIB text of a term.  With triggers=False no patterns are emitted."""
    out: List[str] = []
    _render(t, triggers, out)
    return "".join(out)


def _render(t: Term, trig: bool, out: List[str]):
    # iterative over deep conjunctions would be nicer; recursion depth is fine in practice
    op = t.op
    if op == "var":
        out.append(symbol(t.data))
    elif op == "int":
        out.append(str(t.data) if t.data >= 0 else "(- %d)" % -t.data)
    elif op == "real":
        out.append(_real(t.data))
    elif op == "bool":
        out.append("true" if t.data else "false")
    elif op == "null":
        out.append("null")
    elif op == "app":
        if t.args:
            out.append("(" + symbol(t.data.name))
            for a in t.args:
                out.append(" ")
                _render(a, trig, out)
            out.append(")")
        else:
            out.append(symbol(t.data.name))
    elif t.is_quant:
        out.append("(%s (" % t.op)
        out.append(" ".join("(%s %s)" % (symbol(v.name), sort_name(v.sort)) for v in t.qvars))
        out.append(") ")
        pats = t.triggers if trig else ()
        if pats or t.qid:
            out.append("(! ")
            _render(t.body, trig, out)
            for p in pats:
                out.append(" :pattern (")
                for i, x in enumerate(p):
                    if i:
                        out.append(" ")
                    _render(x, trig, out)
                out.append(")")
            if t.qid:
                out.append(" :qid |%s|" % t.qid)
            out.append(")")
        else:
            _render(t.body, trig, out)
        out.append(")")
    else:
        out.append("(" + _OPS[op])
        for a in t.args:
            out.append(" ")
            _render(a, trig, out)
        out.append(")")


def declaration(f: Fun, triggers: bool = True) -> str:
    if f.definition is not None:
        params, body = f.definition
        ps = " ".join("(%s %s)" % (symbol(p.name), sort_name(p.sort)) for p in params)
        return "(define-fun %s (%s) %s %s)" % (symbol(f.name), ps, sort_name(f.result),
                                               render(body, triggers))
    if not f.arg_sorts:
        return "(declare-const %s %s)" % (symbol(f.name), sort_name(f.result))
    return "(declare-fun %s (%s) %s)" % (symbol(f.name), " ".join(sort_name(s) for s in f.arg_sorts),
                                        sort_name(f.result))


def find_solver(explicit: Optional[str] = None) -> str:
    path = explicit or os.environ.get("QPV_SOLVER") or "z3"
    found = shutil.which(path)
    if found is None:
        raise SolverError("solver binary not found: %s" % path)
    return found


@dataclass
class SolverConfig:
    path: Optional[str] = None
    timeout_ms: int = 10000
    seed: int = 0
    triggers: bool = True
    dump_dir: Optional[str] = None
    dump_prefix: str = "query"


@dataclass
class Stats:
    checks: int = 0
    quantifiers: int = 0
    value_maps: int = 0
    unknown: int = 0
    solver_ms: float = 0.0
    dumps: List[str] = field(default_factory=list)


VALUE_MAP_STEMS = ("fvf", "sm")


def _is_value_map(name: str) -> bool:
    return name.split("@")[0] in VALUE_MAP_STEMS and "@" in name


def _vet_patterns(t: Term) -> int:
    """Refuse to emit an illegal pattern; returns the number of quantifiers in t."""
    n = 0
    for x in subterms(t):
        if x.is_quant:
            n += 1
            for p in x.triggers:
                if not legal_trigger(p, x.qvars):
                    raise SolverError("illegal pattern in quantifier %s" % (x.qid or "?"))
    return n


class SolverSession:
    """One solver process; push/pop mirror the verifier's path-condition scopes."""

    def __init__(self, cfg: SolverConfig):
        self.cfg = cfg
        self.stats = Stats()
        self.declared = set()
        self.transcript: List[str] = []
        self._globals: List[str] = []          # options, sorts, declarations, background
        self._frames: List[List[str]] = [[]]   # live assertions per scope
        self.proc = None
        self.last_reason = ""
        self._start()

    # -- process ------------------------------------------------------------------

    def _start(self):
        binary = find_solver(self.cfg.path)
        try:
            self.proc = subprocess.Popen([binary, "-in", "-smt2"], stdin=subprocess.PIPE,
                                         stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
                                         text=True, bufsize=1)
        except OSError as e:
            raise SolverError("cannot start solver: %s" % e)
        for opt in ("(set-option :print-success false)",
                    "(set-option :global-declarations true)",
                    "(set-option :auto-config false)",
                    "(set-option :smt.mbqi false)",
                    "(set-option :smt.random-seed %d)" % self.cfg.seed,
                    "(set-option :timeout %d)" % self.cfg.timeout_ms):
            self._send(opt, glob=True)

    def close(self):
        if self.proc is not None:
            try:
                self.proc.stdin.write("(exit)\n")
                self.proc.stdin.flush()
            except (OSError, ValueError):
                pass
            try:
                self.proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self.proc.kill()
            self.proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _send(self, cmd: str, glob=False):
        self.transcript.append(cmd)
        if glob:
            self._globals.append(cmd)
        try:
            self.proc.stdin.write(cmd + "\n")
            self.proc.stdin.flush()
        except (OSError, ValueError) as e:
            raise SolverError("solver pipe closed: %s" % e)

    def _read_line(self, deadline: float) -> str:
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                self.proc.kill()
                raise SolverError("solver did not answer in time")
            ready, _, _ = select.select([self.proc.stdout], [], [], remaining)
            if ready:
                line = self.proc.stdout.readline()
                if line == "":
                    raise SolverError("solver exited unexpectedly")
                line = line.strip()
                if line:
                    return line

    # -- declarations ----------------------------------------------------------------

    def declare_sort(self, s: Sort):
        name = sort_name(s)
        if name in self.declared or s in (INT, BOOL, PERM):
            return
        self.declared.add(name)
        self._send("(declare-sort %s 0)" % name, glob=True)

    def declare_fun(self, f: Fun):
        if f.name in self.declared:
            return
        if f.definition is not None:
            self._declare_symbols(f.definition[1], bound=set(f.definition[0]))
        self.declared.add(f.name)
        if _is_value_map(f.name):
            self.stats.value_maps += 1
        self._send(declaration(f, self.cfg.triggers), glob=True)

    def _declare_symbols(self, t: Term, bound=frozenset()):
        for x in subterms(t):
            if x.op == "app":
                self.declare_fun(x.data)
            elif x.op == "var" and x not in bound and x.name not in self.declared:
                if x in t.free_vars():
                    self.declare_fun(Fun(x.name, (), x.sort))

    def define_background(self, sorts, funs, axioms):
        self.declare_sort(REF)
        self._send("(declare-const null Ref)", glob=True)
        self.declared.add("null")
        for s in sorts:
            self.declare_sort(s)
        for f in funs:
            self.declare_fun(f)
        for name, ax in axioms:
            self._declare_symbols(ax)
            self._count_quants(ax)
            self._send("(assert %s) ; %s" % (render(ax, self.cfg.triggers), name), glob=True)

    def _count_quants(self, t: Term):
        self.stats.quantifiers += _vet_patterns(t)

    # -- assertions and queries -----------------------------------------------------------

    def push(self):
        self._frames.append([])
        self._send("(push 1)")

    def pop(self):
        if len(self._frames) == 1:
            raise SolverError("pop at depth 0")
        self._frames.pop()
        self._send("(pop 1)")

    @property
    def depth(self):
        return len(self._frames) - 1

    def assume(self, t: Term):
        if t.op == "bool" and t.data:
            return
        self._declare_symbols(t)
        self._count_quants(t)
        cmd = "(assert %s)" % render(t, self.cfg.triggers)
        self._frames[-1].append(cmd)
        self._send(cmd)

    def check(self, goal: Term, label: str = "", probe: bool = False) -> str:
        """'valid' if the assumptions entail goal, else 'invalid' or 'unknown'.

        Probes are internal questions whose negative answer is not an error; they are
        never dumped."""
        self.stats.checks += 1
        if goal.op == "bool" and goal.data:
            return "valid"
        self._declare_symbols(goal)
        _vet_patterns(goal)
        negated = "(assert (not %s))" % render(goal, self.cfg.triggers)
        self._send("(push 1)")
        self._send(negated)
        start = time.monotonic()
        self._send("(check-sat)")
        try:
            answer = self._answer(start)
        except SolverError:
            if self.cfg.dump_dir:
                self._dump(negated, label)
            raise
        self.last_reason = ""
        if answer == "unknown":
            self.stats.unknown += 1
            self.last_reason = self._reason_unknown(start)
        self._send("(pop 1)")
        self.stats.solver_ms += (time.monotonic() - start) * 1000
        result = {"unsat": "valid", "sat": "invalid", "unknown": "unknown"}[answer]
        if result != "valid" and self.cfg.dump_dir and not probe:
            self._dump(negated, label)
        return result

    def _reason_unknown(self, start: float) -> str:
        self._send("(get-info :reason-unknown)")
        line = self._read_line(start + self.cfg.timeout_ms / 1000.0 + 30)
        m = re.search(r'"([^"]*)"', line)
        reason = m.group(1) if m else line
        return "timeout" if "timeout" in reason else ("canceled" if "cancel" in reason else reason)

    def is_sat(self) -> bool:
        """False only when the current assumptions are known to be inconsistent."""
        start = time.monotonic()
        self._send("(check-sat)")
        return self._answer(start) != "unsat"

    def _answer(self, start: float) -> str:
        deadline = start + self.cfg.timeout_ms / 1000.0 + 30
        while True:
            line = self._read_line(deadline)
            if line in ("sat", "unsat", "unknown"):
                return line
            if line.startswith("(error"):
                raise SolverError(line)
            log.debug("solver: %s", line)

    def _dump(self, negated: str, label: str):
        os.makedirs(self.cfg.dump_dir, exist_ok=True)
        path = os.path.join(self.cfg.dump_dir, "%s-%03d.smt2" % (self.cfg.dump_prefix,
                                                                 len(self.stats.dumps)))
        with open(path, "w") as fh:
            if label:
                fh.write("; %s\n" % label)
            for cmd in self._globals:
                fh.write(cmd + "\n")
            for frame in self._frames:
                for cmd in frame:
                    fh.write(cmd + "\n")
            fh.write(negated + "\n(check-sat)\n")
        self.stats.dumps.append(path)


class ScriptSession(SolverSession):
    """Records the command stream without starting a solver; queries are not supported."""

    def _start(self):
        self.proc = None

    def _send(self, cmd: str, glob=False):
        self.transcript.append(cmd)
        if glob:
            self._globals.append(cmd)

    def _answer(self, start: float) -> str:
        raise SolverError("no solver attached")

    def close(self):
        pass


def emit_preamble(program) -> str:
    """Background declarations and axioms of a checked program as SMT-LIB text.

    This is exactly what each method's session receives before the method's
    own precondition, user domain axioms included.
    """
    from .engine import Verifier
    session = Verifier(program).background(ScriptSession(SolverConfig()))
    body, depth = [], 0
    for c in session.transcript:
        if c.startswith("(push"):
            depth += 1
        elif c.startswith("(pop"):
            depth -= 1
        elif c.startswith("(declare") or (depth == 0 and not c.startswith("(set-option")):
            # scratch scopes from evaluating axiom bodies leave only their (global) declarations
            body.append(c)
    return "\n".join(body) + "\n"


__all__ = ["SolverError", "SolverConfig", "SolverSession", "Stats", "render", "declaration",
           "emit_preamble", "ScriptSession", "find_solver", "symbol", "sort_name", "Var"]
