"""Solver-level signature of a program: sorts, function symbols and background axioms.

Sets are an uninterpreted sort per element type with membership as the core
operation.  Snapshots use an opaque ``Snap`` sort; partial value maps for a
field are a sort of their own with ``domain``/``apply`` functions and an
extensionality axiom, embedded into ``Snap`` via ``toSnap``.
"""

from __future__ import annotations

from typing import Dict, List, Tuple

from . import ast
from .terms import (BOOL, INT, PERM, REF, SNAP, And, App, Eq, Forall, Fun, Ge, Iff, Implies,
                    IntLit, Not, Or, Sort, Term, Var, pvm_sort, set_sort)


def is_resource(a: ast.Assertion) -> bool:
    return not isinstance(a, ast.PureA)


def resource_parts(a) -> list:
    """Top-level resource conjuncts (one snapshot each)."""
    if a is None:
        return []
    parts = a.parts if isinstance(a, ast.SepA) else [a]
    out = []
    for p in parts:
        if isinstance(p, ast.SepA):
            out.extend(resource_parts(p))
        elif is_resource(p):
            out.append(p)
    return out


def _isc_fields(a) -> List[str]:
    out = []
    if isinstance(a, ast.ISC):
        out.append(a.field)
    elif isinstance(a, ast.SepA):
        for p in a.parts:
            out.extend(_isc_fields(p))
    elif isinstance(a, ast.ImpA):
        out.extend(_isc_fields(a.body))
    elif isinstance(a, ast.CondA):
        out.extend(_isc_fields(a.then) + _isc_fields(a.els))
    return out


class Signature:
    def __init__(self, prog: ast.Program):
        self.prog = prog
        self.user_sorts = [Sort(d.name) for d in prog.domains]
        self.field_sort: Dict[str, Sort] = {f.name: self.sort(f.typ) for f in prog.fields}
        self.domain_funs: Dict[str, Fun] = {}
        self.unique: List[Fun] = []
        for d in prog.domains:
            for fn in d.functions:
                f = Fun(fn.name, tuple(self.sort(p.typ) for p in fn.params), self.sort(fn.result))
                self.domain_funs[fn.name] = f
                if fn.unique and not fn.params:
                    self.unique.append(f)
        self.heap_funs: Dict[str, Tuple[Fun, int]] = {}
        for fn in prog.functions:
            k = len(resource_parts(fn.pre_norm))
            f = Fun(fn.name, tuple(self.sort(p.typ) for p in fn.params) + (SNAP,) * k,
                    self.sort(fn.result))
            self.heap_funs[fn.name] = (f, k)

        self.uses_snap = bool(prog.functions or prog.predicates)
        pvm = []
        for fn in prog.functions:
            pvm.extend(_isc_fields(fn.pre_norm))
        for pr in prog.predicates:
            pvm.extend(_isc_fields(pr.body_norm))
        self.pvm_fields = list(dict.fromkeys(pvm))

        elems = []
        for t in self._program_types():
            self._collect_set_elems(t, elems)
        if self.pvm_fields:
            elems.append(REF)
        self.set_elems = list(dict.fromkeys(elems))
        snap_sorts = []
        if self.uses_snap:
            snap_sorts = list(dict.fromkeys(self.field_sort.values()))
            snap_sorts += [pvm_sort(f) for f in self.pvm_fields]
        self.snap_sorts = snap_sorts
        self._funs: Dict[str, Fun] = {}

    # -- sorts ----------------------------------------------------------------

    def sort(self, t: ast.Type) -> Sort:
        if t.name == "Int":
            return INT
        if t.name == "Bool":
            return BOOL
        if t.name == "Ref":
            return REF
        if t.name == "Perm":
            return PERM
        if t.name == "Set":
            return set_sort(self.sort(t.args[0]))
        return Sort(t.name)

    def _program_types(self):
        p = self.prog
        for f in p.fields:
            yield f.typ
        for d in p.domains:
            for fn in d.functions:
                yield fn.result
                for v in fn.params:
                    yield v.typ
        for fn in p.functions:
            yield fn.result
            for v in fn.params:
                yield v.typ
        for pr in p.predicates:
            for v in pr.params:
                yield v.typ
        for m in p.methods:
            for v in m.params + m.returns:
                yield v.typ
        for e in _all_exprs(p):
            for x in ast.walk_expr(e):
                if x.typ is not None:
                    yield x.typ
                if isinstance(x, ast.Quant):
                    for v in x.vars:
                        yield v.typ

    def _collect_set_elems(self, t: ast.Type, out):
        if t.name == "Set":
            self._collect_set_elems(t.args[0], out)
            out.append(self.sort(t.args[0]))

    # -- function symbols -------------------------------------------------------

    def _fun(self, name, args, result) -> Fun:
        f = self._funs.get(name)
        if f is None:
            f = Fun(name, tuple(args), result)
            self._funs[name] = f
        return f

    def set_fun(self, kind: str, elem: Sort) -> Fun:
        s = set_sort(elem)
        e = _sname(elem)
        table = {
            "in": ((elem, s), BOOL),
            "empty": ((), s),
            "singleton": ((elem,), s),
            "union": ((s, s), s),
            "intersection": ((s, s), s),
            "difference": ((s, s), s),
            "subset": ((s, s), BOOL),
            "equal": ((s, s), BOOL),
            "card": ((s,), INT),
        }
        args, res = table[kind]
        return self._fun("Set_%s<%s>" % (kind, e), args, res)

    def set_in(self, x: Term, s: Term) -> Term:
        return App(self.set_fun("in", x.sort), x, s)

    @property
    def unit(self) -> Term:
        return App(self._fun("Snap_unit", (), SNAP))

    def combine(self, a: Term, b: Term) -> Term:
        return App(self._fun("Snap_combine", (SNAP, SNAP), SNAP), a, b)

    def first(self, s: Term) -> Term:
        return App(self._fun("Snap_first", (SNAP,), SNAP), s)

    def second(self, s: Term) -> Term:
        return App(self._fun("Snap_second", (SNAP,), SNAP), s)

    def to_snap(self, t: Term) -> Term:
        if t.sort == SNAP:
            return t
        return App(self._fun("toSnap<%s>" % _sname(t.sort), (t.sort,), SNAP), t)

    def from_snap(self, s: Term, sort: Sort) -> Term:
        if sort == SNAP:
            return s
        return App(self._fun("fromSnap<%s>" % _sname(sort), (SNAP,), sort), s)

    def pvm_domain(self, field: str) -> Fun:
        return self._fun("domain<%s>" % field, (pvm_sort(field),), set_sort(REF))

    def pvm_apply(self, field: str) -> Fun:
        return self._fun("apply<%s>" % field, (pvm_sort(field), REF), self.field_sort[field])

    # -- background -------------------------------------------------------------

    def sorts(self) -> List[Sort]:
        out = [REF]
        if self.uses_snap:
            out.append(SNAP)
        out += self.user_sorts
        out += [set_sort(e) for e in self.set_elems]
        out += [pvm_sort(f) for f in self.pvm_fields]
        return out

    def axioms(self) -> List[Tuple[str, Term]]:
        """(name, axiom) pairs of the static background theory."""
        out = []
        for e in self.set_elems:
            out += self._set_axioms(e)
        if self.uses_snap:
            a, b = Var("s1", SNAP), Var("s2", SNAP)
            c = self.combine(a, b)
            out.append(("snap_combine", Forall([a, b], And(Eq(self.first(c), a), Eq(self.second(c), b)),
                                               [[c]], "snap_combine")))
            for s in self.snap_sorts:
                x = Var("x", s)
                out.append(("snap_embed<%s>" % _sname(s),
                            Forall([x], Eq(self.from_snap(self.to_snap(x), s), x),
                                   [[self.to_snap(x)]], "snap_embed")))
        for f in self.pvm_fields:
            out.append(("pvm_ext<%s>" % f, self.extensionality(f)))
        if len(self.unique) > 1:
            by_sort = {}
            for u in self.unique:
                by_sort.setdefault(u.result, []).append(u)
            for group in by_sort.values():
                if len(group) > 1:
                    from .terms import Term as _T
                    out.append(("unique", _T("distinct", tuple(App(g) for g in group), BOOL)))
        return out

    def extensionality(self, f: str) -> Term:
        s = pvm_sort(f)
        p1, p2, r = Var("p1", s), Var("p2", s), Var("r", REF)
        dom, app = self.pvm_domain(f), self.pvm_apply(f)
        in1 = self.set_in(r, App(dom, p1))
        in2 = self.set_in(r, App(dom, p2))
        same_dom = Forall([r], Iff(in1, in2), [[in1], [in2]], "pvm_dom")
        a1, a2 = App(app, p1, r), App(app, p2, r)
        same_val = Forall([r], Implies(in1, Eq(a1, a2)), [[a1], [a2]], "pvm_val")
        return Forall([p1, p2], Implies(And(same_dom, same_val), Eq(p1, p2)),
                      [[self.to_snap(p1), self.to_snap(p2)]], "pvm_ext")

    def _set_axioms(self, e: Sort):
        s = set_sort(e)
        x, y = Var("x", e), Var("y", e)
        a, b = Var("a", s), Var("b", s)
        fin = lambda t, st: self.set_in(t, st)     # noqa: E731
        F = lambda k, *args: App(self.set_fun(k, e), *args)   # noqa: E731
        emp = F("empty")
        out = [("set_empty", Forall([x], Not(fin(x, emp)), [[fin(x, emp)]], "set_empty")),
               ("set_singleton", Forall([x, y], Iff(fin(y, F("singleton", x)), Eq(x, y)),
                                        [[fin(y, F("singleton", x))]], "set_singleton")),
               ("set_singleton_self", Forall([x], fin(x, F("singleton", x)),
                                             [[F("singleton", x)]], "set_singleton_self"))]
        for kind, rhs in (("union", lambda p, q: Or(p, q)),
                          ("intersection", lambda p, q: And(p, q)),
                          ("difference", lambda p, q: And(p, Not(q)))):
            ab = F(kind, a, b)
            body = Iff(fin(x, ab), rhs(fin(x, a), fin(x, b)))
            out.append(("set_" + kind, Forall([a, b, x], body,
                                              [[fin(x, ab)], [fin(x, a), ab], [fin(x, b), ab]],
                                              "set_" + kind)))
        sub = F("subset", a, b)
        inner = Forall([x], Implies(fin(x, a), fin(x, b)), [[fin(x, a)], [fin(x, b)]], "set_subset_in")
        out.append(("set_subset", Forall([a, b], Iff(sub, inner), [[sub]], "set_subset")))
        eq = F("equal", a, b)
        inner = Forall([x], Iff(fin(x, a), fin(x, b)), [[fin(x, a)], [fin(x, b)]], "set_equal_in")
        out.append(("set_equal", Forall([a, b], Iff(eq, inner), [[eq]], "set_equal")))
        out.append(("set_equal_ext", Forall([a, b], Implies(eq, Eq(a, b)), [[eq]], "set_equal_ext")))
        card = F("card", a)
        out.append(("set_card_nonneg", Forall([a], Ge(card, IntLit(0)), [[card]], "set_card")))
        out.append(("set_card_empty", Eq(F("card", emp), IntLit(0))))
        cs = F("card", F("singleton", x))
        out.append(("set_card_singleton", Forall([x], Eq(cs, IntLit(1)), [[cs]], "set_card_singleton")))
        return out

    def declared_funs(self) -> List[Fun]:
        """Function symbols introduced by the background (declared up front)."""
        # touch every background symbol so they exist in the registry
        for e in self.set_elems:
            for k in ("in", "empty", "singleton", "union", "intersection", "difference",
                      "subset", "equal", "card"):
                self.set_fun(k, e)
        if self.uses_snap:
            self.unit
            self.combine(Var("a", SNAP), Var("b", SNAP))
            self.first(Var("a", SNAP))
            self.second(Var("a", SNAP))
            for s in self.snap_sorts:
                self.to_snap(Var("x", s))
                self.from_snap(Var("x", SNAP), s)
        for f in self.pvm_fields:
            self.pvm_domain(f)
            self.pvm_apply(f)
        return (list(self._funs.values()) + list(self.domain_funs.values())
                + [f for f, _ in self.heap_funs.values()])


def _sname(s: Sort) -> str:
    if s.args:
        return "%s<%s>" % (s.name, ",".join(_sname(a) if isinstance(a, Sort) else str(a) for a in s.args))
    return s.name


def _all_exprs(p: ast.Program):
    for d in p.domains:
        for ax in d.axioms:
            yield ax.expr
    for fn in p.functions:
        yield from fn.pres
        yield from fn.posts
        if fn.body is not None:
            yield fn.body
    for pr in p.predicates:
        if pr.body is not None:
            yield pr.body
    for m in p.methods:
        yield from m.pres
        yield from m.posts
        if m.body is not None:
            yield from _stmt_exprs(m.body)


def _stmt_exprs(body):
    for s in body:
        for name in ("init", "value", "assertion", "pred", "cond"):
            e = getattr(s, name, None)
            if isinstance(e, ast.Expr):
                yield e
        if isinstance(s, ast.FieldWrite):
            yield s.target
        if isinstance(s, ast.MethodCall):
            yield from s.args
        if isinstance(s, ast.While):
            yield from s.invariants
        for name in ("then", "els", "body"):
            sub = getattr(s, name, None)
            if isinstance(sub, list):
                yield from _stmt_exprs(sub)
