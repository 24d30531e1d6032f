"""Name resolution, type checking and assertion normalisation.

After checking, every expression carries a ``typ`` attribute and every
assertion position (contracts, invariants, inhale/exhale/assert, predicate
bodies, function preconditions) has a normalised ``Assertion`` tree in which
each quantified permission is a canonical ``ISC``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Dict, List, Optional

from . import ast
from .ast import BOOL_T, INT_T, PERM_T, REF_T, Pos, Type


@dataclass
class CheckError:
    kind: str        # "resolve", "type", "duplicate", "position", "isc", "old", "arity"
    message: str
    pos: Pos

    def __str__(self):
        return "%s: %s" % (self.pos, self.message)


class WellFormednessError(Exception):
    def __init__(self, errors: List[CheckError]):
        self.errors = errors
        super().__init__("\n".join(str(e) for e in errors))


class _Abort(Exception):
    pass


BUILTIN_TYPES = {"Int", "Bool", "Ref", "Perm"}


def is_numeric(t: Type) -> bool:
    return t in (INT_T, PERM_T)


def compatible(expected: Type, actual: Type) -> bool:
    return expected == actual or (expected == PERM_T and actual == INT_T)


def join(a: Type, b: Type) -> Optional[Type]:
    if a == b:
        return a
    if is_numeric(a) and is_numeric(b):
        return PERM_T
    return None


@dataclass
class _Ctx:
    """What is allowed where an expression occurs."""
    assertion: bool = False      # acc / predicate instances permitted (via normalisation)
    old: bool = False
    result: Optional[Type] = None
    labels: frozenset = frozenset()


class Checker:
    def __init__(self, prog: ast.Program):
        self.prog = prog
        self.errors: List[CheckError] = []
        self.fields: Dict[str, ast.FieldDecl] = {}
        self.funcs: Dict[str, object] = {}        # domain functions and heap functions
        self.preds: Dict[str, ast.Predicate] = {}
        self.methods: Dict[str, ast.Method] = {}
        self.domains = set()

    def error(self, kind, msg, pos):
        self.errors.append(CheckError(kind, msg, pos))

    # -- declarations ------------------------------------------------------

    def collect(self):
        seen = {}

        def declare(name, pos, what):
            if name in seen:
                self.error("duplicate", "duplicate declaration of %s '%s'" % (what, name), pos)
            seen[name] = what

        for d in self.prog.domains:
            if d.name in self.domains or d.name in BUILTIN_TYPES:
                self.error("duplicate", "duplicate type '%s'" % d.name, d.pos)
            self.domains.add(d.name)
        for f in self.prog.fields:
            declare(f.name, f.pos, "field")
            self.fields[f.name] = f
        for d in self.prog.domains:
            for fn in d.functions:
                declare(fn.name, fn.pos, "function")
                self.funcs[fn.name] = fn
        for fn in self.prog.functions:
            declare(fn.name, fn.pos, "function")
            self.funcs[fn.name] = fn
        for pr in self.prog.predicates:
            declare(pr.name, pr.pos, "predicate")
            self.preds[pr.name] = pr
        for m in self.prog.methods:
            declare(m.name, m.pos, "method")
            self.methods[m.name] = m

    def check_type(self, t: Type, pos):
        if t.name == "Set" and len(t.args) == 1:
            self.check_type(t.args[0], pos)
        elif t.args or (t.name not in BUILTIN_TYPES and t.name not in self.domains):
            self.error("resolve", "unknown type '%s'" % t, pos)

    def decls(self, vs: List[ast.VarDecl], scope: dict):
        for v in vs:
            self.check_type(v.typ, v.pos)
            if v.name in scope:
                self.error("duplicate", "duplicate variable '%s'" % v.name, v.pos)
            scope[v.name] = v.typ

    # -- expressions ---------------------------------------------------------

    def expr(self, e: ast.Expr, env: dict, ctx: _Ctx) -> Type:
        t = self._expr(e, env, ctx)
        e.typ = t
        return t

    def want(self, e, env, ctx, expected: Type, what: str) -> Type:
        t = self.expr(e, env, ctx)
        if t is not None and not compatible(expected, t):
            self.error("type", "%s: expected %s, got %s" % (what, expected, t), e.pos)
        return t

    def _expr(self, e, env, ctx) -> Optional[Type]:
        if isinstance(e, ast.IntLit):
            return INT_T
        if isinstance(e, ast.BoolLit):
            return BOOL_T
        if isinstance(e, ast.NullLit):
            return REF_T
        if isinstance(e, ast.PermLit):
            return PERM_T
        if isinstance(e, ast.Ident):
            if e.name not in env:
                self.error("resolve", "unknown identifier '%s'" % e.name, e.pos)
                return None
            return env[e.name]
        if isinstance(e, ast.Result):
            if ctx.result is None:
                self.error("position", "'result' outside a function postcondition", e.pos)
                return None
            return ctx.result
        if isinstance(e, ast.Unary):
            if e.op == "!":
                self.want(e.operand, env, self._pure(ctx), BOOL_T, "operand of '!'")
                return BOOL_T
            t = self.expr(e.operand, env, self._pure(ctx))
            if t is not None and not is_numeric(t):
                self.error("type", "unary minus on %s" % t, e.pos)
            return t
        if isinstance(e, ast.Binary):
            return self._binary(e, env, ctx)
        if isinstance(e, ast.CondExp):
            self.want(e.cond, env, self._pure(ctx), BOOL_T, "condition")
            a = self.expr(e.then, env, ctx)
            b = self.expr(e.els, env, ctx)
            if a is None or b is None:
                return None
            j = join(a, b)
            if j is None:
                self.error("type", "branches of conditional have types %s and %s" % (a, b), e.pos)
            return j
        if isinstance(e, ast.Call):
            return self._call(e, env, ctx)
        if isinstance(e, ast.FieldAccess):
            self.want(e.receiver, env, self._pure(ctx), REF_T, "field receiver")
            f = self.fields.get(e.field)
            if f is None:
                self.error("resolve", "unknown field '%s'" % e.field, e.pos)
                return None
            return f.typ
        if isinstance(e, ast.Acc):
            if not ctx.assertion:
                self.error("position", "accessibility predicate outside an assertion position", e.pos)
            if isinstance(e.loc, ast.FieldAccess):
                self.expr(e.loc, env, self._pure(ctx))
            elif isinstance(e.loc, ast.Call) and e.loc.name in self.preds:
                self._pred_instance(e.loc, env, ctx)
            else:
                self.error("type", "acc expects a field location or predicate instance", e.pos)
            if e.perm is not None:
                self.want(e.perm, env, self._pure(ctx), PERM_T, "permission amount")
            return BOOL_T
        if isinstance(e, ast.Old):
            if not ctx.old:
                self.error("old", "old expression not allowed here", e.pos)
            elif e.label is not None and e.label not in ctx.labels:
                self.error("old", "unknown label '%s'" % e.label, e.pos)
            return self.expr(e.expr, env, ctx)
        if isinstance(e, ast.Quant):
            inner = dict(env)
            for v in e.vars:
                self.check_type(v.typ, v.pos)
                if v.name in env:
                    self.error("duplicate", "quantified variable '%s' shadows another variable"
                               % v.name, v.pos)
                inner[v.name] = v.typ
            for tr in e.triggers:
                for t in tr:
                    self.expr(t, inner, self._pure(ctx))
            self.want(e.body, inner, ctx, BOOL_T, "quantifier body")
            # no user triggers: the backend infers them
            e.infer_triggers = not e.triggers
            return BOOL_T
        if isinstance(e, ast.SetLit):
            et = e.elem_type
            if et is not None:
                self.check_type(et, e.pos)
            for x in e.elems:
                t = self.expr(x, env, self._pure(ctx))
                if t is None:
                    continue
                if et is None:
                    et = t
                elif not compatible(et, t):
                    self.error("type", "set element of type %s in Set[%s]" % (t, et), x.pos)
            if et is None:
                self.error("type", "cannot infer the element type of an empty set literal", e.pos)
                return None
            return ast.set_type(et)
        if isinstance(e, ast.SetCard):
            t = self.expr(e.operand, env, self._pure(ctx))
            if t is not None and t.name != "Set":
                self.error("type", "cardinality of non-set %s" % t, e.pos)
            return INT_T
        raise TypeError("unexpected expression %r" % (e,))

    @staticmethod
    def _pure(ctx):
        return dataclasses.replace(ctx, assertion=False)

    def _binary(self, e, env, ctx):
        op = e.op
        if op in ("&&", "==>"):
            # impure operands allowed on the right of ==> and on both sides of &&
            lctx = ctx if op == "&&" else self._pure(ctx)
            self.want(e.left, env, lctx, BOOL_T, "operand of '%s'" % op)
            self.want(e.right, env, ctx, BOOL_T, "operand of '%s'" % op)
            return BOOL_T
        if op in ("||", "<==>"):
            self.want(e.left, env, self._pure(ctx), BOOL_T, "operand of '%s'" % op)
            self.want(e.right, env, self._pure(ctx), BOOL_T, "operand of '%s'" % op)
            return BOOL_T
        pctx = self._pure(ctx)
        a = self.expr(e.left, env, pctx)
        b = self.expr(e.right, env, pctx)
        if a is None or b is None:
            return BOOL_T if op in ("==", "!=", "<", "<=", ">", ">=", "in", "subset") else None
        if op in ("==", "!="):
            if join(a, b) is None:
                self.error("type", "cannot compare %s with %s" % (a, b), e.pos)
            return BOOL_T
        if op in ("<", "<=", ">", ">="):
            if not (is_numeric(a) and is_numeric(b)):
                self.error("type", "'%s' on %s and %s" % (op, a, b), e.pos)
            return BOOL_T
        if op == "in":
            if b.name != "Set" or not compatible(b.args[0], a):
                self.error("type", "'in' on %s and %s" % (a, b), e.pos)
            return BOOL_T
        if op in ("subset", "union", "intersection", "setminus"):
            if a.name != "Set" or a != b:
                self.error("type", "'%s' on %s and %s" % (op, a, b), e.pos)
            return BOOL_T if op == "subset" else a
        if op in ("+", "-", "*"):
            if not (is_numeric(a) and is_numeric(b)):
                self.error("type", "'%s' on %s and %s" % (op, a, b), e.pos)
                return None
            return join(a, b)
        if op in ("\\", "%"):
            if a != INT_T or b != INT_T:
                self.error("type", "'%s' on %s and %s" % (op, a, b), e.pos)
            return INT_T
        if op == "/":
            if not (is_numeric(a) and b == INT_T or (a == PERM_T and b == PERM_T)):
                self.error("type", "'/' on %s and %s" % (a, b), e.pos)
            return PERM_T
        raise TypeError("unknown operator %s" % op)

    def _args(self, e, params, env, ctx, what):
        if len(e.args) != len(params):
            self.error("arity", "%s '%s' expects %d arguments, got %d"
                       % (what, e.name, len(params), len(e.args)), e.pos)
            for a in e.args:
                self.expr(a, env, self._pure(ctx))
            return
        for a, p in zip(e.args, params):
            self.want(a, env, self._pure(ctx), p.typ, "argument '%s' of '%s'" % (p.name, e.name))

    def _pred_instance(self, e, env, ctx):
        self._args(e, self.preds[e.name].params, env, ctx, "predicate")
        e.typ = BOOL_T

    def _call(self, e, env, ctx):
        if e.name in self.preds:
            if not ctx.assertion:
                self.error("position", "predicate instance outside an assertion position", e.pos)
            self._pred_instance(e, env, ctx)
            return BOOL_T
        fn = self.funcs.get(e.name)
        if fn is None:
            if e.name in self.methods:
                self.error("position", "method '%s' called in an expression" % e.name, e.pos)
            else:
                self.error("resolve", "unknown function '%s'" % e.name, e.pos)
            for a in e.args:
                self.expr(a, env, self._pure(ctx))
            return None
        self._args(e, fn.params, env, ctx, "function")
        return fn.result

    # -- assertion normalisation ---------------------------------------------

    def is_pure(self, e) -> bool:
        for x in ast.walk_expr(e):
            if isinstance(x, ast.Acc):
                return False
            if isinstance(x, ast.Call) and x.name in self.preds:
                return False
        return True

    def normalize(self, e: ast.Expr) -> ast.Assertion:
        if self.is_pure(e):
            return ast.PureA(e, e.pos)
        if isinstance(e, ast.Binary) and e.op == "&&":
            parts = []
            for side in (e.left, e.right):
                n = self.normalize(side)
                parts.extend(n.parts if isinstance(n, ast.SepA) else [n])
            return ast.SepA(parts, e.pos)
        if isinstance(e, ast.Binary) and e.op == "==>":
            return ast.ImpA(e.left, self.normalize(e.right), e.pos)
        if isinstance(e, ast.CondExp):
            return ast.CondA(e.cond, self.normalize(e.then), self.normalize(e.els), e.pos)
        if isinstance(e, ast.Acc):
            perm = e.perm if e.perm is not None else _write(e.pos)
            if isinstance(e.loc, ast.FieldAccess):
                return ast.AccA(e.loc.receiver, e.loc.field, perm, e.pos)
            return ast.PredA(e.loc.name, e.loc.args, perm, e.pos)
        if isinstance(e, ast.Call) and e.name in self.preds:
            return ast.PredA(e.name, e.args, _write(e.pos), e.pos)
        if isinstance(e, ast.Quant):
            return self._quantified(e)
        self.error("position", "accessibility predicate in an unsupported position", e.pos)
        raise _Abort()

    def _quantified(self, q: ast.Quant) -> ast.Assertion:
        if q.kind != "forall":
            self.error("position", "accessibility predicate under an existential quantifier", q.pos)
            raise _Abort()
        if len(q.vars) != 1:
            self.error("isc", "quantified permissions must bind exactly one variable", q.pos)
            raise _Abort()
        var = q.vars[0]
        items = []
        self._isc_body(q, var, q.body, [], items)
        out = []
        for guards, node in items:
            cond = _conj(guards, q.pos)
            if isinstance(node, ast.Acc):
                perm = node.perm if node.perm is not None else _write(node.pos)
                out.append(ast.ISC(var, cond, node.loc.receiver, node.loc.field, perm, q.pos))
            else:
                body = node if not guards else _typed(ast.Binary("==>", cond, node, node.pos), BOOL_T)
                pq = ast.Quant("forall", [var], q.triggers, body, q.pos)
                pq.typ = BOOL_T
                pq.infer_triggers = not q.triggers
                out.append(ast.PureA(pq, q.pos))
        return out[0] if len(out) == 1 else ast.SepA(out, q.pos)

    def _isc_body(self, q, var, e, guards, items):
        if self.is_pure(e):
            items.append((list(guards), e))
            return
        if isinstance(e, ast.Binary) and e.op == "&&":
            self._isc_body(q, var, e.left, guards, items)
            self._isc_body(q, var, e.right, guards, items)
            return
        if isinstance(e, ast.Binary) and e.op == "==>":
            self._isc_body(q, var, e.right, guards + [e.left], items)
            return
        if isinstance(e, ast.Acc):
            if not isinstance(e.loc, ast.FieldAccess):
                self.error("isc", "predicate instances inside quantified permissions are not supported",
                           e.pos)
                raise _Abort()
            items.append((list(guards), e))
            return
        if isinstance(e, ast.Quant):
            self.error("isc", "nested quantified permissions are not supported", e.pos)
            raise _Abort()
        if isinstance(e, ast.CondExp):
            self.error("isc", "accessibility predicate under a conditional inside a quantifier; "
                              "use a conditional permission amount instead", e.pos)
            raise _Abort()
        if isinstance(e, ast.Call):
            self.error("isc", "predicate instances inside quantified permissions are not supported",
                       e.pos)
            raise _Abort()
        self.error("position", "accessibility predicate in an unsupported position", e.pos)
        raise _Abort()

    def assertion(self, e, env, ctx) -> Optional[ast.Assertion]:
        n_before = len(self.errors)
        self.want(e, env, dataclasses.replace(ctx, assertion=True), BOOL_T, "assertion")
        if len(self.errors) > n_before:
            return None
        try:
            return self.normalize(e)
        except _Abort:
            return None

    def assertions(self, es, env, ctx, pos) -> Optional[ast.Assertion]:
        parts = []
        for e in es:
            n = self.assertion(e, env, ctx)
            if n is not None:
                parts.append(n)
        return ast.SepA(parts, pos)

    # -- statements --------------------------------------------------------

    def stmts(self, body, env, ctx, m) -> list:
        return [self.stmt(s, env, ctx, m) for s in body]

    def stmt(self, s, env, ctx, m):
        pctx = self._pure(ctx)
        if isinstance(s, ast.LocalDecl):
            if s.init is not None:
                self.want(s.init, env, pctx, s.decl.typ, "initialiser of '%s'" % s.decl.name)
            self.decls([s.decl], env)
            m.locals_.add(s.decl.name)
            return s
        if isinstance(s, ast.Assign):
            if isinstance(s.value, ast.Call) and s.value.name in self.methods:
                call = ast.MethodCall(s.value.name, s.value.args, [s.target], s.pos)
                return self.stmt(call, env, ctx, m)
            self._target(s.target, env, m, s.pos)
            if s.target in env:
                self.want(s.value, env, pctx, env[s.target], "assigned value")
            else:
                self.expr(s.value, env, pctx)
            return s
        if isinstance(s, ast.FieldWrite):
            t = self.expr(s.target, env, pctx)
            if t is not None:
                self.want(s.value, env, pctx, t, "assigned value")
            else:
                self.expr(s.value, env, pctx)
            return s
        if isinstance(s, ast.MethodCall):
            callee = self.methods.get(s.name)
            if callee is None:
                self.error("resolve", "unknown method '%s'" % s.name, s.pos)
                return s
            self._args(s, callee.params, env, ctx, "method")
            if len(s.targets) != len(callee.returns):
                self.error("arity", "method '%s' returns %d values, %d targets given"
                           % (s.name, len(callee.returns), len(s.targets)), s.pos)
            else:
                for tname, r in zip(s.targets, callee.returns):
                    self._target(tname, env, m, s.pos)
                    if tname in env and not compatible(env[tname], r.typ):
                        self.error("type", "target '%s' has type %s, method returns %s"
                                   % (tname, env[tname], r.typ), s.pos)
            if len(set(s.targets)) != len(s.targets):
                self.error("duplicate", "duplicate call targets", s.pos)
            return s
        if isinstance(s, (ast.Inhale, ast.Exhale, ast.Assert)):
            n = self.assertion(s.assertion, env, ctx)
            return dataclasses.replace(s, norm=n)
        if isinstance(s, ast.Assume):
            self.want(s.assertion, env, pctx, BOOL_T, "assumption")
            return s
        if isinstance(s, (ast.Fold, ast.Unfold)):
            n = self.assertion(s.pred, env, ctx)
            if n is not None and not isinstance(n, ast.PredA):
                self.error("type", "fold/unfold expects a predicate instance", s.pos)
                n = None
            if n is not None and self.preds[n.name].body is None:
                self.error("type", "cannot fold or unfold abstract predicate '%s'" % n.name, s.pos)
            return dataclasses.replace(s, norm=n)
        if isinstance(s, ast.If):
            self.want(s.cond, env, pctx, BOOL_T, "if condition")
            then = self.stmts(s.then, dict(env), ctx, m)
            els = self.stmts(s.els, dict(env), ctx, m)
            return dataclasses.replace(s, then=then, els=els)
        if isinstance(s, ast.While):
            self.want(s.cond, env, pctx, BOOL_T, "loop condition")
            inv = self.assertions(s.invariants, env, ctx, s.pos)
            body = self.stmts(s.body, dict(env), ctx, m)
            return dataclasses.replace(s, body=body, norm=inv)
        if isinstance(s, ast.Label):
            if s.name in m.labels:
                self.error("duplicate", "duplicate label '%s'" % s.name, s.pos)
            m.labels.add(s.name)
            ctx.labels = frozenset(m.labels)
            return s
        if isinstance(s, ast.Block):
            return dataclasses.replace(s, body=self.stmts(s.body, env, ctx, m))
        raise TypeError("unexpected statement %r" % (s,))

    def _target(self, name, env, m, pos):
        if name not in env:
            self.error("resolve", "unknown variable '%s'" % name, pos)
        elif name not in m.locals_:
            self.error("position", "cannot assign to parameter '%s'" % name, pos)

    # -- top level -----------------------------------------------------------

    def run(self) -> ast.Program:
        self.collect()
        for d in self.prog.domains:
            for fn in d.functions:
                self.decls(fn.params, {})
                self.check_type(fn.result, fn.pos)
            for ax in d.axioms:
                t = self.expr(ax.expr, {}, _Ctx())
                if t is not None and t != BOOL_T:
                    self.error("type", "axiom is not boolean", ax.pos)
        for f in self.prog.fields:
            self.check_type(f.typ, f.pos)

        functions = []
        for fn in self.prog.functions:
            env = {}
            self.decls(fn.params, env)
            self.check_type(fn.result, fn.pos)
            pre = self.assertions(fn.pres, env, _Ctx(), fn.pos)
            for e in fn.posts:
                self.want(e, env, _Ctx(result=fn.result), BOOL_T, "postcondition")
            if fn.body is not None:
                self.want(fn.body, env, _Ctx(), fn.result, "function body")
            functions.append(dataclasses.replace(fn, pre_norm=pre))

        predicates = []
        for pr in self.prog.predicates:
            env = {}
            self.decls(pr.params, env)
            body = None
            if pr.body is not None:
                body = self.assertion(pr.body, env, _Ctx())
            predicates.append(dataclasses.replace(pr, body_norm=body))

        methods = []
        for m in self.prog.methods:
            env = {}
            self.decls(m.params, env)
            m.locals_ = set()
            m.labels = set()
            pre = self.assertions(m.pres, env, _Ctx(), m.pos)
            renv = dict(env)
            self.decls(m.returns, renv)
            m.locals_ = {r.name for r in m.returns}
            post = self.assertions(m.posts, renv, _Ctx(old=True), m.pos)
            body = None
            if m.body is not None:
                body = self.stmts(m.body, dict(renv), _Ctx(old=True), m)
            new = dataclasses.replace(m, body=body, pre_norm=pre, post_norm=post)
            methods.append(new)
            del m.locals_, m.labels
        if self.errors:
            raise WellFormednessError(self.errors)
        return ast.Program(self.prog.fields, self.prog.domains, functions, predicates, methods, [])


def _write(pos):
    return _typed(ast.PermLit("write", pos), PERM_T)


def _typed(e, t):
    e.typ = t
    return e


def _conj(guards, pos):
    if not guards:
        return _typed(ast.BoolLit(True, pos), BOOL_T)
    out = guards[0]
    for g in guards[1:]:
        out = _typed(ast.Binary("&&", out, g, g.pos), BOOL_T)
    return out


def check_wellformed(prog: ast.Program) -> ast.Program:
    """Type-check and normalise a macro-free program (raises WellFormednessError)."""
    return Checker(prog).run()


def load(text: str) -> ast.Program:
    """Parse, expand macros and check in one go."""
    from .macros import expand_macros
    from .parser import parse
    return check_wellformed(expand_macros(parse(text)))


def count_assertions(a: Optional[ast.Assertion]):
    """(ISC count, pure-quantifier count) in a normalised assertion."""
    if a is None:
        return 0, 0
    if isinstance(a, ast.ISC):
        return 1, 0
    if isinstance(a, ast.PureA):
        return 0, sum(1 for x in ast.walk_expr(a.expr) if isinstance(x, ast.Quant))
    if isinstance(a, ast.SepA):
        counts = [count_assertions(p) for p in a.parts]
        return sum(c[0] for c in counts), sum(c[1] for c in counts)
    if isinstance(a, ast.ImpA):
        return count_assertions(a.body)
    if isinstance(a, ast.CondA):
        x, y = count_assertions(a.then), count_assertions(a.els)
        return x[0] + y[0], x[1] + y[1]
    return 0, 0

