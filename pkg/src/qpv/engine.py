"""Symbolic execution with quantified permissions.

Every method is verified in its own solver session.  Path conditions live in a
scoped stack mirrored by solver push/pop.  Only ``if`` statements branch;
conditional assertions are handled with guards.  Verification of a method
stops at the first error.
"""

from __future__ import annotations

import logging
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from . import ast, triggers
from .ast import Pos
from .signature import Signature, resource_parts
from .smt import SolverConfig, SolverError, SolverSession
from .state import (R, BasicChunk, Heap, PathConditionStack, QuantifiedChunk, Scope,
                    SymbolicState, is_syntactically_empty)
from .terms import (BOOL, FALSE, NULL, ONE, PERM, REF, SNAP, TRUE, ZERO, Add, And, App, Eq,
                    Exists, Forall, Fun, Ge, Iff, Implies, IntDiv, IntLit, Ite, Le, Lt, Min, Mod,
                    Mul, Ne, Neg, Not, Or, PermDiv, PermLit, Sub, SymbolPool, Term, Var,
                    pvm_sort, simplify, substitute, subterms)

log = logging.getLogger(__name__)

ERROR_KINDS = ("insufficient.permission", "assertion.false", "receiver.not.injective",
               "negative.permission", "application.precondition", "solver.failure",
               "internal.invariant")


class VerificationError(Exception):
    def __init__(self, kind: str, message: str, pos: Pos, unknown: bool = False):
        self.kind = kind
        self.message = message
        self.pos = pos
        self.unknown = unknown      # the solver answered "unknown" rather than "sat"
        super().__init__("%s: [%s] %s" % (pos, kind, message))


@dataclass
class Options:
    memoize: bool = True
    strict_inhale_injectivity: bool = False
    debug_invariants: bool = False
    reverse_heap: bool = False
    solver_drop_empty: bool = True


@dataclass
class Outcome:
    method: str
    error: Optional[VerificationError]
    millis: float
    checks: int = 0
    quantifiers: int = 0
    value_maps: int = 0
    summarise_queries: int = 0
    accounting_checks: int = 0
    dumps: List[str] = field(default_factory=list)

    @property
    def verified(self) -> bool:
        return self.error is None


# largest term kept inline in a chunk permission before it is named
_INLINE_LIMIT = 12


def _size(t: Term, limit: int) -> int:
    n = 0
    for _ in subterms(t):
        n += 1
        if n > limit:
            break
    return n


class Verifier:
    def __init__(self, program: ast.Program, solver: Optional[SolverConfig] = None,
                 options: Optional[Options] = None):
        self.prog = program
        self.cfg = solver or SolverConfig()
        self.opts = options or Options()
        self.sig = Signature(program)

    # ------------------------------------------------------------------ driver

    def verify_all(self) -> List[Outcome]:
        return [self.verify_method(m.name) for m in self.prog.methods]

    def verify_method(self, name: str) -> Outcome:
        m = self.prog.find_method(name)
        if m is None:
            raise KeyError(name)
        start = time.monotonic()
        cfg = replace(self.cfg, dump_prefix="%s-%s" % (self.cfg.dump_prefix, name))
        error = None
        self.solver = None
        try:
            self.solver = SolverSession(cfg)
            self._setup()
            self._run_method(m)
        except VerificationError as e:
            error = e
        except SolverError as e:
            error = VerificationError("solver.failure", str(e), m.pos)
        finally:
            st = self.solver.stats if self.solver else None
            if self.solver:
                self.solver.close()
        millis = (time.monotonic() - start) * 1000
        out = Outcome(name, error, millis)
        if st is not None:
            out.checks, out.quantifiers, out.value_maps = st.checks, st.quantifiers, st.value_maps
            out.dumps = list(st.dumps)
        out.summarise_queries = getattr(self, "summarise_queries", 0)
        out.accounting_checks = getattr(self, "accounting_checks", 0)
        return out

    def _setup(self):
        self.pc = PathConditionStack()
        self.pool = SymbolPool()
        self.checking = True
        self.trigger_mode = False
        self.fn_depth = 0
        self.summarise_queries = 0
        self.accounting_checks = 0
        axioms = list(self.sig.axioms())
        self.solver.define_background(self.sig.sorts(), self.sig.declared_funs(), axioms)
        # user axioms are evaluated like pure assertions over an empty heap
        empty = SymbolicState(self._heap(), {}, {})
        for d in self.prog.domains:
            for ax in d.axioms:
                t = self.ev(empty, ax.expr)
                if t.is_quant and ax.name:
                    t = Term(t.op, t.args, BOOL, (t.qvars, t.triggers, ax.name))
                self.assume(t)

    def background(self, session: SolverSession) -> SolverSession:
        """Send the program's background theory to session and return it."""
        self.solver = session
        self._setup()
        return session

    def _heap(self) -> Heap:
        return Heap((), prepend=self.opts.reverse_heap)

    def _run_method(self, m: ast.Method):
        store = {}
        for v in m.params + m.returns:
            store[v.name] = self.pool.fresh(v.name, self.sig.sort(v.typ))
        s = SymbolicState(self._heap(), store, {})
        self.produce(s, m.pre_norm, TRUE, None)
        s.olds["old"] = s.heap
        if m.body is None:
            return

        def at_exit(st: SymbolicState):
            self.consume(st, st.heap, m.post_norm, TRUE)

        self.exec_block(m.body, 0, s, at_exit)

    # ------------------------------------------------------------ path conditions

    def assume(self, t: Term, is_def: bool = False):
        if t == TRUE:
            return
        self.pc.add(t, is_def)
        self.solver.assume(t)

    def check(self, goal: Term, kind: str, message: str, pos: Pos):
        if not self.checking:
            return
        res = self.solver.check(goal, "%s %s: %s" % (pos, kind, message))
        if res == "valid":
            return
        if res == "unknown" and self.solver.last_reason in ("timeout", "canceled"):
            raise VerificationError("solver.failure", "solver timeout while checking: " + message,
                                    pos, unknown=True)
        raise VerificationError(kind, message, pos, unknown=(res == "unknown"))

    def push(self, branch: Optional[Term] = None):
        self.pc.push(branch)
        self.solver.push()
        if branch is not None:
            self.solver.assume(branch)

    def pop(self, keep_memo: bool) -> Scope:
        sc = self.pc.pop()
        self.solver.pop()
        if keep_memo:
            for k, v in sc.memo.items():
                self.pc.remember(k, v)
        return sc

    def scoped(self, guard: Term, thunk: Callable, bound: Sequence[Tuple[Term, Term]] = ()):
        """Run thunk with guard assumed; keep its path conditions, guarded (and generalised
        over the (symbol, bound variable) pairs in ``bound``)."""
        self.push(guard if guard != TRUE else None)
        value = thunk()
        sc = self.pop(keep_memo=True)
        self.residue(sc, guard, bound)
        return value

    def residue(self, sc: Scope, guard: Term, bound: Sequence[Tuple[Term, Term]] = ()):
        ys = frozenset(y for y, _ in bound)
        sub = {y: x for y, x in bound}
        xs = [x for _, x in bound]
        rest = []
        for d in sc.defs:
            if d.free_vars() & ys:
                rest.append(d)
            else:
                self.assume(d, is_def=True)
        rest.extend(sc.terms)
        for t in rest:
            body = Implies(guard, t)
            if ys and body.free_vars() & ys:
                body = substitute(body, sub)
                body = Forall(xs, body, triggers.infer(body, xs), "residue")
            self.assume(body)

    @contextmanager
    def no_checks(self):
        old = self.checking, self.trigger_mode
        self.checking, self.trigger_mode = False, True
        try:
            yield
        finally:
            self.checking, self.trigger_mode = old

    def _bound_var(self, name: str, sort) -> Term:
        # the chunk receiver variable must never be captured by an ISC variable
        return Var(name + "$" if name == R.name else name, sort)

    def _name(self, stem: str, body: Term) -> Term:
        """Keep permission terms small by naming large ones with a macro symbol of r."""
        body = simplify(body)
        if body.free_vars() - {R} or _size(body, _INLINE_LIMIT) <= _INLINE_LIMIT:
            return body
        f = self.pool.define_fun(stem, [R], body)
        return App(f, R)

    # ------------------------------------------------------------------ summaries

    def summarise(self, heap: Heap, fieldname: str) -> Tuple[Fun, Term]:
        """Fresh value map agreeing with every chunk where it grants permission, and the
        total permission per receiver.  Issues no solver queries."""
        chunks = heap.field_chunks(fieldname)
        key = (fieldname, chunks)
        if self.opts.memoize or self.trigger_mode:
            hit = self.pc.lookup(key)
            if hit is not None:
                return hit
        before = self.solver.stats.checks
        sm = self.pool.fresh_fun("sm", [REF], self.sig.field_sort[fieldname])
        perm = ZERO
        for ch in chunks:
            d = Forall([R], Implies(Lt(ZERO, ch.perm), Eq(App(sm, R), App(ch.fvf, R))),
                       triggers.vmdefeq(sm, ch.fvf, R).triggers, "vmdefeq")
            self.assume(d, is_def=True)
            perm = Add(perm, ch.perm)
        self.summarise_queries += self.solver.stats.checks - before
        self.pc.remember(key, (sm, perm))
        return sm, perm

    def read(self, s: SymbolicState, rcv: Term, fieldname: str, pos: Pos) -> Term:
        sm, perm = self.summarise(s.heap, fieldname)
        self.check(Lt(ZERO, substitute(perm, {R: rcv})), "insufficient.permission",
                   "no permission to read field '%s'" % fieldname, pos)
        return App(sm, rcv)

    # ------------------------------------------------------------------ evaluation

    def ev(self, s: SymbolicState, e: ast.Expr) -> Term:
        if isinstance(e, ast.IntLit):
            return IntLit(e.value)
        if isinstance(e, ast.BoolLit):
            return TRUE if e.value else FALSE
        if isinstance(e, ast.NullLit):
            return NULL
        if isinstance(e, ast.PermLit):
            return ONE if e.keyword == "write" else ZERO
        if isinstance(e, ast.Ident):
            return s.store[e.name]
        if isinstance(e, ast.Result):
            return s.store["result"]
        if isinstance(e, ast.Unary):
            v = self.ev(s, e.operand)
            return Not(v) if e.op == "!" else Neg(v)
        if isinstance(e, ast.Binary):
            return self._binary(s, e)
        if isinstance(e, ast.CondExp):
            c = self.ev(s, e.cond)
            a = self.scoped(c, lambda: self.ev(s, e.then))
            b = self.scoped(Not(c), lambda: self.ev(s, e.els))
            return Ite(c, a, b)
        if isinstance(e, ast.Call):
            args = [self.ev(s, a) for a in e.args]
            if e.name in self.sig.domain_funs:
                return App(self.sig.domain_funs[e.name], *args)
            return self.apply_function(s, e, args)
        if isinstance(e, ast.FieldAccess):
            rcv = self.ev(s, e.receiver)
            return self.read(s, rcv, e.field, e.pos)
        if isinstance(e, ast.Old):
            label = e.label or "old"
            old = SymbolicState(s.olds[label], s.store, s.olds)
            return self.ev(old, e.expr)
        if isinstance(e, ast.Quant):
            return self._quant(s, e)
        if isinstance(e, ast.SetLit):
            elem = self.sig.sort(e.typ).elem
            out = App(self.sig.set_fun("empty", elem))
            for x in e.elems:
                single = App(self.sig.set_fun("singleton", elem), self.ev(s, x))
                out = single if out.op == "app" and out.data.name.startswith("Set_empty") \
                    else App(self.sig.set_fun("union", elem), out, single)
            return out
        if isinstance(e, ast.SetCard):
            v = self.ev(s, e.operand)
            return App(self.sig.set_fun("card", v.sort.elem), v)
        raise TypeError("cannot evaluate %r" % (e,))

    def _binary(self, s, e: ast.Binary) -> Term:
        op = e.op
        a = self.ev(s, e.left)
        if op == "&&":
            return And(a, self.scoped(a, lambda: self.ev(s, e.right)))
        if op == "||":
            return Or(a, self.scoped(Not(a), lambda: self.ev(s, e.right)))
        if op == "==>":
            return Implies(a, self.scoped(a, lambda: self.ev(s, e.right)))
        b = self.ev(s, e.right)
        if op == "<==>":
            return Iff(a, b)
        if op in ("==", "!="):
            if a.sort.is_set:
                eq = App(self.sig.set_fun("equal", a.sort.elem), a, b)
            else:
                eq = Eq(a, b)
            return eq if op == "==" else Not(eq)
        simple = {"<": Lt, "<=": Le, ">": lambda x, y: Lt(y, x), ">=": lambda x, y: Le(y, x),
                  "+": Add, "-": Sub, "*": Mul, "/": PermDiv, "\\": IntDiv, "%": Mod}
        if op in simple:
            return simple[op](a, b)
        if op == "in":
            return self.sig.set_in(a, b)
        kinds = {"union": "union", "intersection": "intersection", "setminus": "difference",
                 "subset": "subset"}
        return App(self.sig.set_fun(kinds[op], a.sort.elem), a, b)

    def _quant(self, s: SymbolicState, q: ast.Quant) -> Term:
        store = dict(s.store)
        ys, xs = [], []
        for v in q.vars:
            srt = self.sig.sort(v.typ)
            y = self.pool.fresh(v.name, srt)
            ys.append(y)
            xs.append(self._bound_var(v.name, srt))
            store[v.name] = y
        s1 = SymbolicState(s.heap, store, s.olds)
        self.push()
        body = self.ev(s1, q.body)
        user = []
        if q.triggers:
            with self.no_checks():
                for tr in q.triggers:
                    user.append(tuple(self.ev(s1, t) for t in tr))
        sc = self.pop(keep_memo=True)
        bound = list(zip(ys, xs))
        self.residue(sc, TRUE, bound)
        sub = dict(bound)
        body_x = substitute(body, sub)
        trigs = []
        for tr in user:
            tr = tuple(substitute(t, sub) for t in tr)
            if triggers.legal_trigger(tr, xs):
                trigs.append(tr)
            else:
                log.debug("dropping illegal trigger %s", tr)
        if not trigs:
            trigs = list(triggers.infer(body_x, xs))
        make = Forall if q.kind == "forall" else Exists
        return make(xs, body_x, trigs, "user")

    # ------------------------------------------------------------ heap functions

    def apply_function(self, s: SymbolicState, call: ast.Call, args: List[Term]) -> Term:
        fn = self.prog.find_function(call.name)
        fun, _k = self.sig.heap_funs[call.name]
        store = {p.name: a for p, a in zip(fn.params, args)}
        fs = SymbolicState(s.heap, store, s.olds)
        snaps = []
        try:
            heap = s.heap
            for part in _flat_parts(fn.pre_norm):
                heap, snap = self.consume(fs, heap, part, TRUE, want_snap=True)
                if not isinstance(part, ast.PureA):
                    snaps.append(snap)
        except VerificationError as err:
            if err.kind == "solver.failure":
                raise
            raise VerificationError("application.precondition",
                                    "precondition of '%s' might not hold: %s" % (call.name, err.message),
                                    call.pos, err.unknown)
        app = App(fun, *args, *snaps)
        if self.fn_depth == 0:
            self.fn_depth += 1
            try:
                with self.no_checks():
                    fs2 = SymbolicState(s.heap, dict(store, result=app), s.olds)
                    if fn.body is not None:
                        self.assume(Eq(app, self.ev(fs, fn.body)))
                    for post in fn.posts:
                        self.assume(self.ev(fs2, post))
            finally:
                self.fn_depth -= 1
        return app

    # ------------------------------------------------------------------ produce

    def produce(self, s: SymbolicState, a: Optional[ast.Assertion], g: Term,
                snap: Optional[Term], scale: Term = ONE):
        """Inhale ``a`` under guard g into s (s.heap is replaced)."""
        if a is None:
            return
        if isinstance(a, ast.PureA):
            v = self.scoped(g, lambda: self.ev(s, a.expr))
            self.assume(Implies(g, v))
        elif isinstance(a, ast.SepA):
            parts = a.parts
            for i, p in enumerate(parts):
                self.produce(s, p, g, _split(self.sig, snap, i, len(parts)), scale)
        elif isinstance(a, ast.ImpA):
            c = self.scoped(g, lambda: self.ev(s, a.cond))
            self.produce(s, a.body, And(g, c), snap, scale)
        elif isinstance(a, ast.CondA):
            c = self.scoped(g, lambda: self.ev(s, a.cond))
            self.produce(s, a.then, And(g, c), snap, scale)
            self.produce(s, a.els, And(g, Not(c)), snap, scale)
        elif isinstance(a, ast.AccA):
            self._produce_acc(s, a, g, snap, scale)
        elif isinstance(a, ast.ISC):
            self._produce_isc(s, a, g, snap, scale)
        elif isinstance(a, ast.PredA):
            args, p = self.scoped(g, lambda: ([self.ev(s, x) for x in a.args], self.ev(s, a.perm)))
            p = Mul(scale, p)
            if not p.is_literal:
                self.assume(Implies(g, Ge(p, ZERO)))
            if snap is None:
                snap = self.pool.fresh("snap", SNAP)
            s.heap = s.heap.add(BasicChunk(a.name, tuple(args), snap, Ite(g, p, ZERO)))
        else:
            raise TypeError(a)
        self._debug_heap(s.heap)

    def _produce_acc(self, s, a: ast.AccA, g, snap, scale):
        rcv, p = self.scoped(g, lambda: (self.ev(s, a.receiver), self.ev(s, a.perm)))
        p = Mul(scale, p)
        fvf = self.pool.fresh_fun("fvf", [REF], self.sig.field_sort[a.field])
        s.heap = s.heap.add(QuantifiedChunk(a.field, fvf, Ite(And(g, Eq(R, rcv)), p, ZERO), a.pos))
        if not p.is_literal:
            self.assume(Implies(g, Ge(p, ZERO)))
        self.assume(Implies(And(g, Lt(ZERO, p)), Ne(rcv, NULL)))
        if snap is not None:
            self.assume(Implies(And(g, Lt(ZERO, p)),
                                Eq(App(fvf, rcv), self.sig.from_snap(snap, fvf.result))))

    def _isc_parts(self, s, a: ast.ISC, g):
        """Evaluate condition, receiver and amount at a fresh instance y.

        Returns (y, x, c, e, p) with c/e/p expressed over the bound variable x."""
        srt = self.sig.sort(a.var.typ)
        y = self.pool.fresh(a.var.name, srt)
        x = self._bound_var(a.var.name, srt)
        s1 = SymbolicState(s.heap, dict(s.store, **{a.var.name: y}), s.olds)
        bound = [(y, x)]
        cy = self.scoped(g, lambda: self.ev(s1, a.cond), bound)

        def ep():
            e, p = self.ev(s1, a.receiver), self.ev(s1, a.perm)
            return e, p

        ey, py = self.scoped(And(g, cy), ep, bound)
        sub = {y: x}
        return y, x, substitute(cy, sub), substitute(ey, sub), substitute(py, sub)

    def _inverse(self, g, x, cx, ex, px, fvf: Optional[Fun]):
        """Fresh inverse of the receiver; returns (c, p) at inv(r) and assumes its axioms."""
        inv = self.pool.fresh_fun("inv", [REF], x.sort)
        inv_r = App(inv, R)
        cond = And(g, cx)
        at = {x: inv_r}
        c_inv, e_inv, p_inv = (substitute(t, at) for t in (cond, ex, px))
        self.assume(Forall([R], Implies(c_inv, Eq(e_inv, R)), triggers.inv1(inv, R).triggers, "inv1"))
        choice = triggers.inv2(ex, cx, x, fvf)
        self.assume(Forall([x], Implies(cond, Eq(App(inv, ex), x)), choice.triggers, "inv2"))
        return c_inv, p_inv

    def _injectivity(self, g, x, cx, ex, pos):
        y1 = self.pool.fresh(x.name.rstrip("$"), x.sort)
        y2 = self.pool.fresh(x.name.rstrip("$"), x.sort)
        c1, e1 = substitute(cx, {x: y1}), substitute(ex, {x: y1})
        c2, e2 = substitute(cx, {x: y2}), substitute(ex, {x: y2})
        self.check(Implies(And(g, c1, c2, Eq(e1, e2)), Eq(y1, y2)), "receiver.not.injective",
                   "receiver of quantified permission might not be injective", pos)

    def _produce_isc(self, s, a: ast.ISC, g, snap, scale):
        y, x, cx, ex, px = self._isc_parts(s, a, g)
        px = Mul(scale, px)
        if self.opts.strict_inhale_injectivity:
            self._injectivity(g, x, cx, ex, a.pos)
        fvf = self.pool.fresh_fun("fvf", [REF], self.sig.field_sort[a.field])
        c_inv, p_inv = self._inverse(g, x, cx, ex, px, fvf)
        perm = self._name("pq", Ite(c_inv, p_inv, ZERO))
        cond = And(g, cx)
        if not px.is_literal:
            nonneg = Implies(cond, Ge(px, ZERO))
            self.assume(Forall([x], nonneg, triggers.infer(nonneg, [x]), "nonneg"))
        nonnull = Implies(And(cond, Lt(ZERO, px)), Ne(ex, NULL))
        self.assume(Forall([x], nonnull, triggers.infer(nonnull, [x]), "nonnull"))
        s.heap = s.heap.add(QuantifiedChunk(a.field, fvf, perm, a.pos))
        if snap is not None:
            pvs = self.sig.from_snap(snap, pvm_sort(a.field))
            ap = App(self.sig.pvm_apply(a.field), pvs, R)
            self.assume(Forall([R], Implies(Lt(ZERO, perm), Eq(App(fvf, R), ap)),
                               [[App(fvf, R)], [ap]], "snap_isc"))

    # ------------------------------------------------------------------ consume

    def consume(self, s: SymbolicState, heap: Heap, a: Optional[ast.Assertion], g: Term,
                want_snap: bool = False, scale: Term = ONE) -> Tuple[Heap, Optional[Term]]:
        """Exhale ``a`` under guard g.  Expressions are evaluated in s (the heap before
        the exhale); permissions are removed from ``heap``.  Returns the new heap and,
        if requested, the snapshot of the consumed resources."""
        if a is None:
            return heap, (self.sig.unit if want_snap else None)
        if isinstance(a, ast.PureA):
            self.check_pure(s, a.expr, g)
            return heap, (self.sig.unit if want_snap else None)
        if isinstance(a, ast.SepA):
            snaps = []
            for p in a.parts:
                heap, sn = self.consume(s, heap, p, g, want_snap, scale)
                snaps.append(sn)
            return heap, (_combine(self.sig, snaps) if want_snap else None)
        if isinstance(a, ast.ImpA):
            c = self.scoped(g, lambda: self.ev(s, a.cond))
            heap, sn = self.consume(s, heap, a.body, And(g, c), want_snap, scale)
            return heap, (Ite(c, sn, self.sig.unit) if want_snap else None)
        if isinstance(a, ast.CondA):
            c = self.scoped(g, lambda: self.ev(s, a.cond))
            heap, s1 = self.consume(s, heap, a.then, And(g, c), want_snap, scale)
            heap, s2 = self.consume(s, heap, a.els, And(g, Not(c)), want_snap, scale)
            return heap, (Ite(c, s1, s2) if want_snap else None)
        if isinstance(a, ast.AccA):
            return self._consume_acc(s, heap, a, g, want_snap, scale)
        if isinstance(a, ast.ISC):
            return self._consume_isc(s, heap, a, g, want_snap, scale)
        if isinstance(a, ast.PredA):
            args, p = self.scoped(g, lambda: ([self.ev(s, x) for x in a.args], self.ev(s, a.perm)))
            p = Mul(scale, p)
            self._check_nonneg(g, p, a.pos)
            return self.remove_predicate(heap, a.name, tuple(args), Ite(g, p, ZERO), a.pos, want_snap)
        raise TypeError(a)

    def check_pure(self, s: SymbolicState, e: ast.Expr, g: Term):
        """Assert a pure expression conjunct by conjunct; proven facts are kept."""
        if isinstance(e, ast.Binary) and e.op == "&&":
            self.check_pure(s, e.left, g)
            self.check_pure(s, e.right, g)
            return
        v = self.scoped(g, lambda: self.ev(s, e))
        self.check(Implies(g, v), "assertion.false", "assertion might not hold", e.pos)
        self.assume(Implies(g, v))

    def _check_nonneg(self, g, p, pos):
        if not p.is_literal:
            self.check(Implies(g, Ge(p, ZERO)), "negative.permission",
                       "permission amount might be negative", pos)
        elif p.data < 0:
            self.check(Not(g), "negative.permission", "permission amount is negative", pos)

    def _consume_acc(self, s, heap, a: ast.AccA, g, want_snap, scale):
        rcv, p = self.scoped(g, lambda: (self.ev(s, a.receiver), self.ev(s, a.perm)))
        p = Mul(scale, p)
        self._check_nonneg(g, p, a.pos)
        snap = None
        if want_snap:
            sm, _ = self.summarise(s.heap, a.field)
            snap = self.sig.to_snap(App(sm, rcv))
        heap = self.remove_permissions(heap, a.field, Ite(And(g, Eq(R, rcv)), p, ZERO), a.pos,
                                       "field '%s'" % a.field)
        return heap, snap

    def _consume_isc(self, s, heap, a: ast.ISC, g, want_snap, scale):
        y, x, cx, ex, px = self._isc_parts(s, a, g)
        px = Mul(scale, px)
        self._injectivity(g, x, cx, ex, a.pos)
        if not px.is_literal:
            self.check(Forall([x], Implies(And(g, cx), Ge(px, ZERO))), "negative.permission",
                       "permission amount might be negative", a.pos)
        elif px.data < 0:
            self.check(Forall([x], Not(And(g, cx))), "negative.permission",
                       "permission amount is negative", a.pos)
        c_inv, p_inv = self._inverse(g, x, cx, ex, px, None)
        q = self._name("pq", Ite(c_inv, p_inv, ZERO))
        snap = None
        if want_snap:
            snap = self._pvm_snapshot(s.heap, a.field, q)
        heap = self.remove_permissions(heap, a.field, q, a.pos, "field '%s'" % a.field)
        return heap, snap

    def _pvm_snapshot(self, heap: Heap, fieldname: str, q: Term) -> Term:
        sm, _ = self.summarise(heap, fieldname)
        pvs = self.pool.fresh("pvs", pvm_sort(fieldname))
        dom = App(self.sig.pvm_domain(fieldname), pvs)
        mem = self.sig.set_in(R, dom)
        self.assume(Forall([R], Iff(mem, Lt(ZERO, q)), [[mem]], "pvs_domain"), is_def=True)
        ap = App(self.sig.pvm_apply(fieldname), pvs, R)
        self.assume(Forall([R], Implies(mem, Eq(ap, App(sm, R))), [[mem], [ap]], "pvs_apply"),
                    is_def=True)
        return self.sig.to_snap(pvs)

    # ------------------------------------------------------------------ remove

    def remove_permissions(self, heap: Heap, fieldname: str, q: Term, pos: Pos, what: str) -> Heap:
        """Greedily take q(r) from the chunks of a field (heap order), then check that
        nothing is left to take."""
        needed = q
        mapping = {}
        before, after = [], []
        for idx, ch in enumerate(heap.chunks):
            if not (isinstance(ch, QuantifiedChunk) and ch.field == fieldname):
                continue
            before.append(ch.perm)
            if is_syntactically_empty(needed):
                after.append(ch.perm)
                continue
            cur = Min(ch.perm, needed)
            needed = self._name("nd", Sub(needed, cur))
            new_perm = self._name("pm", Sub(ch.perm, cur))
            after.append(new_perm)
            mapping[idx] = replace(ch, perm=new_perm)
        if self.opts.debug_invariants:
            # held before minus requested equals held after minus still needed
            lhs = Sub(_sum(before), q)
            rhs = Sub(_sum(after), needed)
            self.check(Forall([R], Eq(lhs, rhs)), "internal.invariant",
                       "permission accounting is not precise", pos)
            if self.checking:
                self.accounting_checks += 1
        self.check(Forall([R], Eq(needed, ZERO)), "insufficient.permission",
                   "insufficient permission to %s" % what, pos)
        heap = heap.replace_chunks(mapping)
        return self._drop_empty(heap, set(mapping.values()))

    def _drop_empty(self, heap: Heap, modified) -> Heap:
        drop = {}
        for i, c in enumerate(heap.chunks):
            if is_syntactically_empty(c.perm):
                drop[i] = None
            elif c in modified and self.opts.solver_drop_empty and self.checking:
                goal = Forall([R], Eq(c.perm, ZERO)) if isinstance(c, QuantifiedChunk) \
                    else Eq(c.perm, ZERO)
                if self.solver.check(goal, "empty chunk", probe=True) == "valid":
                    drop[i] = None
        return heap.replace_chunks(drop) if drop else heap

    def remove_predicate(self, heap: Heap, name: str, args: Tuple[Term, ...], q: Term, pos: Pos,
                         want_snap: bool) -> Tuple[Heap, Optional[Term]]:
        needed = q
        mapping = {}
        snap = self.sig.unit if want_snap else None
        hits = []
        for idx, ch in enumerate(heap.chunks):
            if not (isinstance(ch, BasicChunk) and ch.pred == name):
                continue
            same = And(*(Eq(u, v) for u, v in zip(ch.args, args)))
            hits.append((same, ch))
            if is_syntactically_empty(needed) or same == FALSE:
                continue
            cur = Ite(same, Min(ch.perm, needed), ZERO)
            needed = simplify(Sub(needed, cur))
            mapping[idx] = replace(ch, perm=simplify(Sub(ch.perm, cur)))
        if want_snap:
            for same, ch in reversed(hits):
                snap = Ite(And(same, Lt(ZERO, ch.perm)), ch.snap, snap)
        self.check(Eq(needed, ZERO), "insufficient.permission",
                   "insufficient permission to predicate '%s'" % name, pos)
        heap = heap.replace_chunks(mapping)
        return self._drop_empty(heap, set(mapping.values())), snap

    def _debug_heap(self, heap: Heap):
        if not (self.opts.debug_invariants and self.checking):
            return
        for c in heap.chunks:
            goal = Forall([R], Ge(c.perm, ZERO)) if isinstance(c, QuantifiedChunk) else Ge(c.perm, ZERO)
            self.check(goal, "internal.invariant", "chunk with negative permission: %s" % c, ast.NOPOS)

    # ------------------------------------------------------------------ statements

    def exec_block(self, stmts: List[ast.Stmt], i: int, s: SymbolicState,
                   k: Callable[[SymbolicState], None]):
        while i < len(stmts):
            st = stmts[i]
            if isinstance(st, ast.If):
                self._exec_if(st, s, lambda s2, i=i: self.exec_block(stmts, i + 1, s2, k))
                return
            if isinstance(st, ast.Block):
                self.exec_block(st.body, 0, s, lambda s2, i=i: self.exec_block(stmts, i + 1, s2, k))
                return
            if isinstance(st, ast.While):
                s = self._exec_while(st, s)
            else:
                s = self.exec_simple(st, s)
            i += 1
        k(s)

    def _exec_if(self, st: ast.If, s: SymbolicState, k):
        c = self.ev(s, st.cond)
        for body, cond in ((st.then, c), (st.els, Not(c))):
            self.push(cond)
            if self.solver.check(FALSE, "branch reachability", probe=True) == "valid":
                if self.opts.debug_invariants:
                    self.check(Not(self.pc.flatten()), "internal.invariant",
                               "pruned branch is reachable", st.pos)
                log.debug("%s: branch pruned", st.pos)
            else:
                self.exec_block(body, 0, s.copy(), k)
            self.pop(keep_memo=False)

    def exec_simple(self, st: ast.Stmt, s: SymbolicState) -> SymbolicState:
        s = s.copy()
        if isinstance(st, ast.LocalDecl):
            srt = self.sig.sort(st.decl.typ)
            s.store[st.decl.name] = self.ev(s, st.init) if st.init is not None \
                else self.pool.fresh(st.decl.name, srt)
        elif isinstance(st, ast.Assign):
            s.store[st.target] = self.ev(s, st.value)
        elif isinstance(st, ast.FieldWrite):
            self._field_write(st, s)
        elif isinstance(st, ast.MethodCall):
            self._call(st, s)
        elif isinstance(st, ast.Inhale):
            self.produce(s, st.norm, TRUE, None)
        elif isinstance(st, ast.Exhale):
            s.heap, _ = self.consume(s, s.heap, st.norm, TRUE)
        elif isinstance(st, ast.Assert):
            self.consume(s, s.heap, st.norm, TRUE)      # heap result discarded
        elif isinstance(st, ast.Assume):
            self.assume(self.scoped(TRUE, lambda: self.ev(s, st.assertion)))
        elif isinstance(st, ast.Fold):
            self._fold(st, s)
        elif isinstance(st, ast.Unfold):
            self._unfold(st, s)
        elif isinstance(st, ast.Label):
            s = s.capture_old(st.name)
        else:
            raise TypeError(st)
        return s

    def _field_write(self, st: ast.FieldWrite, s: SymbolicState):
        rcv = self.ev(s, st.target.receiver)
        val = self.ev(s, st.value)
        f = st.target.field
        single = Ite(Eq(R, rcv), ONE, ZERO)
        s.heap = self.remove_permissions(s.heap, f, single, st.pos,
                                         "write field '%s' (write permission required)" % f)
        fvf = self.pool.fresh_fun("fvf", [REF], self.sig.field_sort[f])
        s.heap = s.heap.add(QuantifiedChunk(f, fvf, single, st.pos))
        self.assume(Eq(App(fvf, rcv), val))
        self._debug_heap(s.heap)

    def _call(self, st: ast.MethodCall, s: SymbolicState):
        callee = self.prog.find_method(st.name)
        args = [self.ev(s, a) for a in st.args]
        store = {p.name: a for p, a in zip(callee.params, args)}
        cs = SymbolicState(s.heap, store, {})
        try:
            heap, _ = self.consume(cs, s.heap, callee.pre_norm, TRUE)
        except VerificationError as err:
            if err.kind == "solver.failure":
                raise
            raise VerificationError(err.kind, "precondition of call to '%s' might not hold: %s"
                                    % (st.name, err.message), st.pos, err.unknown)
        rets = [self.pool.fresh(r.name, self.sig.sort(r.typ)) for r in callee.returns]
        post_store = dict(store, **{r.name: v for r, v in zip(callee.returns, rets)})
        ps = SymbolicState(heap, post_store, {"old": s.heap})
        self.produce(ps, callee.post_norm, TRUE, None)
        s.heap = ps.heap
        for t, v in zip(st.targets, rets):
            s.store[t] = v

    def _pred_instance(self, st, s) -> Tuple[ast.Predicate, List[Term], Term]:
        pa: ast.PredA = st.norm
        pred = self.prog.find_predicate(pa.name)
        args = [self.ev(s, x) for x in pa.args]
        p = self.ev(s, pa.perm)
        return pred, args, p

    def _fold(self, st: ast.Fold, s: SymbolicState):
        pred, args, p = self._pred_instance(st, s)
        self._check_nonneg(TRUE, p, st.pos)
        ps = SymbolicState(s.heap, {v.name: a for v, a in zip(pred.params, args)}, s.olds)
        try:
            heap, snap = self.consume(ps, s.heap, pred.body_norm, TRUE, want_snap=True, scale=p)
        except VerificationError as err:
            if err.kind == "solver.failure":
                raise
            raise VerificationError(err.kind, "folding '%s' might fail: %s" % (pred.name, err.message),
                                    st.pos, err.unknown)
        s.heap = heap.add(BasicChunk(pred.name, tuple(args), snap, p))
        self._debug_heap(s.heap)

    def _unfold(self, st: ast.Unfold, s: SymbolicState):
        pred, args, p = self._pred_instance(st, s)
        self._check_nonneg(TRUE, p, st.pos)
        heap, snap = self.remove_predicate(s.heap, pred.name, tuple(args), p, st.pos, True)
        ps = SymbolicState(heap, {v.name: a for v, a in zip(pred.params, args)}, s.olds)
        self.produce(ps, pred.body_norm, TRUE, snap, scale=p)
        s.heap = ps.heap

    def _exec_while(self, st: ast.While, s: SymbolicState) -> SymbolicState:
        inv = st.norm
        s = s.copy()
        try:
            frame, _ = self.consume(s, s.heap, inv, TRUE)
        except VerificationError as err:
            if err.kind == "solver.failure":
                raise
            raise VerificationError(err.kind, "loop invariant might not hold on entry: %s"
                                    % err.message, err.pos, err.unknown)
        modified = _assigned(st.body)

        def havoc(state):
            for name in modified:
                if name in state.store:
                    state.store[name] = self.pool.fresh(name, state.store[name].sort)

        # loop body, verified in isolation
        self.push()
        b = SymbolicState(self._heap(), dict(s.store), dict(s.olds))
        havoc(b)
        self.produce(b, inv, TRUE, None)
        self.assume(self.scoped(TRUE, lambda: self.ev(b, st.cond)))

        def preserve(end: SymbolicState):
            try:
                self.consume(end, end.heap, inv, TRUE)
            except VerificationError as err:
                if err.kind == "solver.failure":
                    raise
                raise VerificationError(err.kind, "loop invariant might not be preserved: %s"
                                        % err.message, err.pos, err.unknown)

        self.exec_block(st.body, 0, b, preserve)
        self.pop(keep_memo=False)

        # after the loop
        out = SymbolicState(frame, dict(s.store), dict(s.olds))
        havoc(out)
        self.produce(out, inv, TRUE, None)
        self.assume(Not(self.scoped(TRUE, lambda: self.ev(out, st.cond))))
        return out


# ---------------------------------------------------------------------- helpers

def _flat_parts(a) -> list:
    if a is None:
        return []
    if isinstance(a, ast.SepA):
        out = []
        for p in a.parts:
            out.extend(_flat_parts(p))
        return out
    return [a]


def _combine(sig: Signature, snaps: List[Term]) -> Term:
    if not snaps:
        return sig.unit
    out = snaps[-1]
    for sn in reversed(snaps[:-1]):
        out = sig.combine(sn, out)
    return out


def _split(sig: Signature, snap: Optional[Term], i: int, n: int) -> Optional[Term]:
    """Component i of a right-nested combination of n snapshots."""
    if snap is None:
        return None
    for _ in range(i):
        snap = sig.second(snap)
    return snap if i == n - 1 else sig.first(snap)


def _sum(terms: List[Term]) -> Term:
    out = ZERO
    for t in terms:
        out = Add(out, t)
    return out


def _assigned(body: List[ast.Stmt]) -> List[str]:
    out = []
    for st in body:
        if isinstance(st, ast.Assign):
            out.append(st.target)
        elif isinstance(st, ast.MethodCall):
            out.extend(st.targets)
        elif isinstance(st, ast.If):
            out.extend(_assigned(st.then) + _assigned(st.els))
        elif isinstance(st, (ast.While, ast.Block)):
            out.extend(_assigned(st.body))
    return list(dict.fromkeys(out))


sys.setrecursionlimit(max(sys.getrecursionlimit(), 20000))
