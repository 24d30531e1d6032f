"""Sorted first-order terms shared by the symbolic engine and the SMT backend.

Terms are immutable and hash-consed by structure (cached hashes), so they can
be used as dictionary keys and shared freely between symbolic states.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence


class SortError(TypeError):
    pass


@dataclass(frozen=True)
class Sort:
    name: str
    args: tuple = ()

    def __str__(self):
        if self.args:
            return "%s[%s]" % (self.name, ", ".join(str(a) for a in self.args))
        return self.name

    @property
    def is_set(self):
        return self.name == "Set"

    @property
    def elem(self):
        assert self.is_set
        return self.args[0]


INT = Sort("Int")
BOOL = Sort("Bool")
REF = Sort("Ref")
PERM = Sort("Perm")
SNAP = Sort("Snap")


def set_sort(elem: Sort) -> Sort:
    return Sort("Set", (elem,))


def pvm_sort(field_name: str) -> Sort:
    """Sort of partial value maps for one field (defunctionalised)."""
    return Sort("PVM", (field_name,))


def domain_sort(name: str) -> Sort:
    return Sort(name)


NUMERIC = (INT, PERM)


@dataclass(frozen=True)
class Fun:
    """An uninterpreted (or macro-defined) function symbol."""

    name: str
    arg_sorts: tuple
    result: Sort
    # (params, body) for symbols rendered as define-fun macros
    definition: Optional[tuple] = field(default=None, compare=False, hash=False)

    def __str__(self):
        return self.name


# Operators with built-in (interpreted) meaning at the SMT level.
INTERPRETED = frozenset([
    "and", "or", "not", "=>", "iff", "=", "ite", "<", "<=", "+", "-", "*",
    "div", "mod", "/", "neg", "to_real", "distinct",
])

LITERALS = frozenset(["int", "real", "bool", "null"])


class Term:
    __slots__ = ("op", "args", "sort", "data", "_hash", "_free")

    def __init__(self, op: str, args: tuple, sort: Sort, data=None):
        self.op = op
        self.args = args
        self.sort = sort
        self.data = data
        self._hash = hash((op, args, sort, data))
        self._free = None

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Term) or self._hash != other._hash:
            return False
        return (self.op == other.op and self.sort == other.sort
                and self.data == other.data and self.args == other.args)

    def __ne__(self, other):
        return not self.__eq__(other)

    def __repr__(self):
        return "Term(%s)" % show(self)

    def __str__(self):
        return show(self)

    # -- classification ---------------------------------------------------

    @property
    def is_var(self):
        return self.op == "var"

    @property
    def is_app(self):
        return self.op == "app"

    @property
    def is_quant(self):
        return self.op in ("forall", "exists")

    @property
    def is_literal(self):
        return self.op in LITERALS

    @property
    def name(self):
        assert self.op == "var"
        return self.data

    @property
    def fun(self) -> Fun:
        assert self.op == "app"
        return self.data

    # quantifier accessors
    @property
    def qvars(self):
        return self.data[0]

    @property
    def triggers(self):
        return self.data[1]

    @property
    def qid(self):
        return self.data[2]

    @property
    def body(self):
        return self.args[0]

    def free_vars(self) -> frozenset:
        if self._free is None:
            if self.op == "var":
                self._free = frozenset((self,))
            elif self.is_quant:
                inner = set(self.args[0].free_vars())
                for trig in self.data[1]:
                    for t in trig:
                        inner |= t.free_vars()
                self._free = frozenset(inner - set(self.data[0]))
            elif not self.args:
                self._free = frozenset()
            elif len(self.args) == 1:
                self._free = self.args[0].free_vars()
            else:
                acc = set()
                for a in self.args:
                    acc |= a.free_vars()
                self._free = frozenset(acc)
        return self._free


# ---------------------------------------------------------------------------
# Leaf constructors

def Var(name: str, sort: Sort) -> Term:
    return Term("var", (), sort, name)


def IntLit(n: int) -> Term:
    return Term("int", (), INT, int(n))


def PermLit(q) -> Term:
    return Term("real", (), PERM, Fraction(q))


TRUE = Term("bool", (), BOOL, True)
FALSE = Term("bool", (), BOOL, False)
NULL = Term("null", (), REF, None)
ZERO = PermLit(0)
ONE = PermLit(1)


def BoolLit(b: bool) -> Term:
    return TRUE if b else FALSE


def _num_value(t: Term):
    if t.op in ("int", "real"):
        return t.data
    return None


def _lit_of(sort: Sort, value) -> Term:
    if sort == INT:
        return IntLit(value)
    return PermLit(value)


def _expect(t: Term, sort: Sort, what: str):
    if t.sort != sort:
        raise SortError("%s: expected %s, got %s (%s)" % (what, sort, t.sort, show(t)))


def _numeric_pair(a: Term, b: Term, what: str):
    if a.sort not in NUMERIC or b.sort not in NUMERIC:
        raise SortError("%s: non-numeric operands %s, %s" % (what, a.sort, b.sort))
    if a.sort != b.sort:
        a, b = ToPerm(a), ToPerm(b)
    return a, b


# ---------------------------------------------------------------------------
# Applications

def App(fun: Fun, *args: Term) -> Term:
    if len(args) != len(fun.arg_sorts):
        raise SortError("%s expects %d arguments, got %d"
                        % (fun.name, len(fun.arg_sorts), len(args)))
    for a, s in zip(args, fun.arg_sorts):
        if a.sort != s:
            if s == PERM and a.sort == INT:
                a = ToPerm(a)
            else:
                raise SortError("argument of %s: expected %s, got %s (%s)"
                                % (fun.name, s, a.sort, show(a)))
    args = tuple(ToPerm(a) if s == PERM and a.sort == INT else a
                 for a, s in zip(args, fun.arg_sorts))
    return Term("app", args, fun.result, fun)


# ---------------------------------------------------------------------------
# Boolean connectives (with local constant folding)

def Not(a: Term) -> Term:
    _expect(a, BOOL, "not")
    if a is TRUE or a == TRUE:
        return FALSE
    if a == FALSE:
        return TRUE
    if a.op == "not":
        return a.args[0]
    return Term("not", (a,), BOOL)


def And(*parts: Term) -> Term:
    flat = []
    seen = set()
    for p in _flatten(parts):
        _expect(p, BOOL, "and")
        if p == TRUE:
            continue
        if p == FALSE:
            return FALSE
        if p.op == "and":
            items = p.args
        else:
            items = (p,)
        for q in items:
            if q not in seen:
                seen.add(q)
                flat.append(q)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return Term("and", tuple(flat), BOOL)


def Or(*parts: Term) -> Term:
    flat = []
    seen = set()
    for p in _flatten(parts):
        _expect(p, BOOL, "or")
        if p == FALSE:
            continue
        if p == TRUE:
            return TRUE
        items = p.args if p.op == "or" else (p,)
        for q in items:
            if q not in seen:
                seen.add(q)
                flat.append(q)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Term("or", tuple(flat), BOOL)


def _flatten(parts):
    for p in parts:
        if isinstance(p, (list, tuple)):
            yield from _flatten(p)
        else:
            yield p


def Implies(a: Term, b: Term) -> Term:
    _expect(a, BOOL, "=>")
    _expect(b, BOOL, "=>")
    if a == TRUE:
        return b
    if a == FALSE or b == TRUE:
        return TRUE
    if b == FALSE:
        return Not(a)
    if a == b:
        return TRUE
    return Term("=>", (a, b), BOOL)


def Iff(a: Term, b: Term) -> Term:
    _expect(a, BOOL, "iff")
    _expect(b, BOOL, "iff")
    if a == b:
        return TRUE
    if a == TRUE:
        return b
    if b == TRUE:
        return a
    return Term("iff", (a, b), BOOL)


def Eq(a: Term, b: Term) -> Term:
    if a.sort != b.sort:
        if a.sort in NUMERIC and b.sort in NUMERIC:
            a, b = ToPerm(a), ToPerm(b)
        else:
            raise SortError("==: %s vs %s" % (a.sort, b.sort))
    if a == b:
        return TRUE
    if a.is_literal and b.is_literal:
        return BoolLit(a.data == b.data)
    if a.sort == BOOL:
        return Iff(a, b)
    return Term("=", (a, b), BOOL)


def Ne(a: Term, b: Term) -> Term:
    return Not(Eq(a, b))


def Ite(c: Term, a: Term, b: Term) -> Term:
    _expect(c, BOOL, "ite")
    if a.sort != b.sort:
        if a.sort in NUMERIC and b.sort in NUMERIC:
            a, b = ToPerm(a), ToPerm(b)
        else:
            raise SortError("ite arms: %s vs %s" % (a.sort, b.sort))
    if c == TRUE:
        return a
    if c == FALSE:
        return b
    if a == b:
        return a
    if a.sort == BOOL:
        if a == TRUE and b == FALSE:
            return c
        if a == FALSE and b == TRUE:
            return Not(c)
    return Term("ite", (c, a, b), a.sort)


# ---------------------------------------------------------------------------
# Arithmetic

def ToPerm(a: Term) -> Term:
    if a.sort == PERM:
        return a
    _expect(a, INT, "to_real")
    if a.op == "int":
        return PermLit(a.data)
    return Term("to_real", (a,), PERM)


def Add(a: Term, b: Term) -> Term:
    a, b = _numeric_pair(a, b, "+")
    va, vb = _num_value(a), _num_value(b)
    if va is not None and vb is not None:
        return _lit_of(a.sort, va + vb)
    if va == 0:
        return b
    if vb == 0:
        return a
    return Term("+", (a, b), a.sort)


def Sub(a: Term, b: Term) -> Term:
    a, b = _numeric_pair(a, b, "-")
    if a == b:
        return _lit_of(a.sort, 0)
    va, vb = _num_value(a), _num_value(b)
    if va is not None and vb is not None:
        return _lit_of(a.sort, va - vb)
    if vb == 0:
        return a
    return Term("-", (a, b), a.sort)


def Neg(a: Term) -> Term:
    if a.sort not in NUMERIC:
        raise SortError("unary minus on %s" % a.sort)
    va = _num_value(a)
    if va is not None:
        return _lit_of(a.sort, -va)
    return Term("neg", (a,), a.sort)


def Mul(a: Term, b: Term) -> Term:
    a, b = _numeric_pair(a, b, "*")
    va, vb = _num_value(a), _num_value(b)
    if va is not None and vb is not None:
        return _lit_of(a.sort, va * vb)
    if va == 0 or vb == 0:
        return _lit_of(a.sort, 0)
    if va == 1:
        return b
    if vb == 1:
        return a
    return Term("*", (a, b), a.sort)


def IntDiv(a: Term, b: Term) -> Term:
    _expect(a, INT, "div")
    _expect(b, INT, "div")
    va, vb = _num_value(a), _num_value(b)
    if va is not None and vb is not None and vb != 0:
        # SMT-LIB div: floor for positive divisor, ceiling for negative
        q = va // vb if vb > 0 else -((-va) // vb)
        return IntLit(q)
    if vb == 1:
        return a
    return Term("div", (a, b), INT)


def Mod(a: Term, b: Term) -> Term:
    _expect(a, INT, "mod")
    _expect(b, INT, "mod")
    va, vb = _num_value(a), _num_value(b)
    if va is not None and vb is not None and vb != 0:
        return IntLit(va % abs(vb))
    return Term("mod", (a, b), INT)


def PermDiv(a: Term, b: Term) -> Term:
    a, b = ToPerm(a), ToPerm(b)
    va, vb = _num_value(a), _num_value(b)
    if va is not None and vb is not None and vb != 0:
        return PermLit(Fraction(va) / Fraction(vb))
    if vb == 1:
        return a
    return Term("/", (a, b), PERM)


def _cmp(op, a, b, fold):
    a, b = _numeric_pair(a, b, op)
    va, vb = _num_value(a), _num_value(b)
    if va is not None and vb is not None:
        return BoolLit(fold(va, vb))
    if a == b:
        return BoolLit(fold(0, 0))
    return Term(op, (a, b), BOOL)


def Lt(a: Term, b: Term) -> Term:
    return _cmp("<", a, b, lambda x, y: x < y)


def Le(a: Term, b: Term) -> Term:
    return _cmp("<=", a, b, lambda x, y: x <= y)


def Gt(a: Term, b: Term) -> Term:
    return Lt(b, a)


def Ge(a: Term, b: Term) -> Term:
    return Le(b, a)


def Min(a: Term, b: Term) -> Term:
    """Permission minimum, encoded as an if-then-else."""
    a, b = _numeric_pair(a, b, "min")
    va, vb = _num_value(a), _num_value(b)
    if va is not None and vb is not None:
        return _lit_of(a.sort, min(va, vb))
    if a == b:
        return a
    return Ite(Lt(a, b), a, b)


# ---------------------------------------------------------------------------
# Quantifiers

def Forall(qvars: Sequence[Term], body: Term, triggers: Iterable = (), qid: Optional[str] = None) -> Term:
    return _quant("forall", qvars, body, triggers, qid)


def Exists(qvars: Sequence[Term], body: Term, triggers: Iterable = (), qid: Optional[str] = None) -> Term:
    return _quant("exists", qvars, body, triggers, qid)


def _quant(kind, qvars, body, triggers, qid):
    _expect(body, BOOL, kind)
    qvars = tuple(qvars)
    for v in qvars:
        if not v.is_var:
            raise SortError("quantifier binds non-variable %s" % show(v))
    body_free = body.free_vars()
    used = tuple(v for v in qvars if v in body_free)
    trigs = tuple(tuple(t) for t in triggers if t)
    if not used:
        return body
    if used != qvars:
        # drop vacuous binders; triggers mentioning them are unusable
        trigs = tuple(t for t in trigs
                      if not any(set(x.free_vars()) & (set(qvars) - set(used)) for x in t))
        qvars = used
    if body.is_literal:
        return body
    return Term(kind, (body,), BOOL, (qvars, trigs, qid))


def with_triggers(q: Term, triggers) -> Term:
    assert q.is_quant
    return Term(q.op, q.args, BOOL, (q.qvars, tuple(tuple(t) for t in triggers if t), q.qid))


# ---------------------------------------------------------------------------
# Traversal

def subterms(t: Term):
    """Yield all subterms (pre-order, shared nodes visited once)."""
    seen = set()
    stack = [t]
    while stack:
        x = stack.pop()
        if x in seen:
            continue
        seen.add(x)
        yield x
        stack.extend(reversed(x.args))
        if x.is_quant:
            for trig in x.triggers:
                stack.extend(trig)


def functions_of(t: Term) -> list:
    """Function symbols applied anywhere in t, in first-occurrence order."""
    out = {}
    for x in subterms(t):
        if x.op == "app":
            out.setdefault(x.data, None)
    return list(out)


def rebuild(t: Term, args: tuple) -> Term:
    """Reconstruct a node of the same shape over new arguments (with folding)."""
    op = t.op
    if args == t.args:
        return t
    if op == "app":
        return App(t.data, *args)
    if op == "not":
        return Not(args[0])
    if op == "and":
        return And(*args)
    if op == "or":
        return Or(*args)
    if op == "=>":
        return Implies(*args)
    if op == "iff":
        return Iff(*args)
    if op == "=":
        return Eq(*args)
    if op == "ite":
        return Ite(*args)
    if op == "+":
        return Add(*args)
    if op == "-":
        return Sub(*args)
    if op == "*":
        return Mul(*args)
    if op == "neg":
        return Neg(*args)
    if op == "div":
        return IntDiv(*args)
    if op == "mod":
        return Mod(*args)
    if op == "/":
        return PermDiv(*args)
    if op == "to_real":
        return ToPerm(args[0])
    if op == "<":
        return Lt(*args)
    if op == "<=":
        return Le(*args)
    if op == "distinct":
        return Term("distinct", args, BOOL)
    raise AssertionError("cannot rebuild %s" % op)


def _fresh_bound_name(base: str, avoid: set) -> str:
    stem = base.split("$")[0]
    k = 1
    while True:
        cand = "%s$%d" % (stem, k)
        if cand not in avoid:
            return cand
        k += 1


def substitute(t: Term, bindings: Mapping[Term, Term]) -> Term:
    """Capture-avoiding simultaneous substitution of variables.

    The result has exactly the shape of ``t``; call ``simplify`` to fold it."""
    if not bindings:
        return t
    for v, val in bindings.items():
        if not v.is_var:
            raise SortError("substitution key %s is not a variable" % show(v))
        if v.sort != val.sort:
            raise SortError("substituting %s: %s for %s" % (v.name, val.sort, v.sort))
    return _Subst(dict(bindings)).go(t)


class _Subst:
    def __init__(self, bindings):
        self.bindings = bindings
        self.keys = frozenset(bindings)
        self.memo = {}

    def go(self, t: Term) -> Term:
        if not (t.free_vars() & self.keys):
            return t
        r = self.memo.get(t)
        if r is not None:
            return r
        if t.op == "var":
            r = self.bindings[t]
        elif t.is_quant:
            r = self._quant(t)
        else:
            # structural: no folding here, that is simplify's job
            r = Term(t.op, tuple(self.go(a) for a in t.args), t.sort, t.data)
        self.memo[t] = r
        return r

    def _quant(self, t: Term) -> Term:
        bound = set(t.qvars)
        live = {k: v for k, v in self.bindings.items() if k not in bound and k in t.free_vars()}
        if not live:
            return t
        incoming = set()
        for v in live.values():
            incoming |= {x.name for x in v.free_vars()}
        renames = {}
        avoid = incoming | {x.name for x in t.free_vars()} | {v.name for v in t.qvars}
        new_vars = []
        for v in t.qvars:
            if v.name in incoming:
                nv = Var(_fresh_bound_name(v.name, avoid), v.sort)
                avoid.add(nv.name)
                renames[v] = nv
                new_vars.append(nv)
            else:
                new_vars.append(v)
        inner = dict(live)
        inner.update(renames)
        sub = _Subst(inner)
        body = sub.go(t.body)
        trigs = tuple(tuple(sub.go(x) for x in trig) for trig in t.triggers)
        return _quant(t.op, new_vars, body, trigs, t.qid)


def simplify(t: Term) -> Term:
    """Bottom-up local rewriting (constant folding, trivial identities)."""
    memo = {}

    def go(x):
        r = memo.get(x)
        if r is not None:
            return r
        if not x.args:
            r = x
        elif x.is_quant:
            body = go(x.body)
            trigs = tuple(tuple(go(a) for a in trig) for trig in x.triggers)
            r = _quant(x.op, x.qvars, body, trigs, x.qid)
        else:
            r = rebuild(x, tuple(go(a) for a in x.args))
            if r is x and x.op not in ("app", "distinct"):
                r = rebuild_forced(x)
        memo[x] = r
        return r

    return go(t)


def rebuild_forced(t: Term) -> Term:
    # rebuild with identical args still runs the folding in the constructor
    op = t.op
    table = {"not": Not, "and": And, "or": Or, "=>": Implies, "iff": Iff,
             "=": Eq, "ite": Ite, "+": Add, "-": Sub, "*": Mul, "neg": Neg,
             "div": IntDiv, "mod": Mod, "/": PermDiv, "<": Lt, "<=": Le}
    if op == "to_real":
        return ToPerm(t.args[0])
    f = table.get(op)
    return f(*t.args) if f else t


def check_sorts(t: Term) -> None:
    """Re-derive sorts bottom-up; raise SortError on any inconsistency."""
    for x in subterms(t):
        if x.op in LITERALS or x.op == "var":
            continue
        if x.is_quant:
            if x.body.sort != BOOL:
                raise SortError("quantifier body not boolean")
            continue
        rebuilt = rebuild_forced(x) if x.op != "app" else App(x.data, *x.args)
        if rebuilt.sort != x.sort:
            raise SortError("sort drift at %s" % show(x))


# ---------------------------------------------------------------------------
# Fresh symbols

class SymbolPool:
    """Monotone per-stem counters; names are ``stem@k``."""

    def __init__(self):
        self.counters = {}

    def _next(self, stem: str) -> str:
        k = self.counters.get(stem, 0)
        self.counters[stem] = k + 1
        return "%s@%d" % (stem, k)

    def fresh(self, stem: str, sort: Sort) -> Term:
        return Var(self._next(stem), sort)

    def fresh_fun(self, stem: str, arg_sorts: Sequence[Sort], result: Sort) -> Fun:
        return Fun(self._next(stem), tuple(arg_sorts), result)

    def define_fun(self, stem: str, params: Sequence[Term], body: Term) -> Fun:
        """A macro function symbol: rendered as ``define-fun``."""
        name = self._next(stem)
        return Fun(name, tuple(p.sort for p in params), body.sort,
                   definition=(tuple(params), body))


# ---------------------------------------------------------------------------
# Human-readable rendering (debug output, error messages)

_INFIX = {"and": "&&", "or": "||", "=>": "==>", "iff": "<==>", "=": "==",
          "<": "<", "<=": "<=", "+": "+", "-": "-", "*": "*", "div": "\\",
          "mod": "%", "/": "/"}


def show(t: Term) -> str:
    op = t.op
    if op == "var":
        return t.data
    if op == "int":
        return str(t.data)
    if op == "real":
        return str(t.data)
    if op == "bool":
        return "true" if t.data else "false"
    if op == "null":
        return "null"
    if op == "app":
        return "%s(%s)" % (t.data.name, ", ".join(show(a) for a in t.args))
    if op == "not":
        return "!%s" % _paren(t.args[0])
    if op == "neg":
        return "-%s" % _paren(t.args[0])
    if op == "to_real":
        return show(t.args[0])
    if op == "ite":
        return "(%s ? %s : %s)" % tuple(show(a) for a in t.args)
    if op in _INFIX:
        return "(" + (" %s " % _INFIX[op]).join(show(a) for a in t.args) + ")"
    if t.is_quant:
        vs = ", ".join("%s: %s" % (v.name, v.sort) for v in t.qvars)
        trig = "".join(" {%s}" % ", ".join(show(x) for x in tr) for tr in t.triggers)
        return "(%s %s ::%s %s)" % (op, vs, trig, show(t.body))
    return "%s(%s)" % (op, ", ".join(show(a) for a in t.args))


def _paren(t):
    s = show(t)
    return s if (t.args == () or s.startswith("(")) else "(%s)" % s
