"""Abstract syntax for the input language.

Every node carries a source position.  Positions are excluded from equality
so that structurally identical trees compare equal (round-trip tests).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple


@dataclass(frozen=True)
class Pos:
    line: int
    col: int

    def __str__(self):
        return "%d:%d" % (self.line, self.col)


NOPOS = Pos(0, 0)


def _pos():
    return field(default=NOPOS, compare=False, repr=False)


# ---------------------------------------------------------------------------
# Types

@dataclass(frozen=True)
class Type:
    name: str
    args: Tuple["Type", ...] = ()

    def __str__(self):
        if self.args:
            return "%s[%s]" % (self.name, ", ".join(str(a) for a in self.args))
        return self.name


INT_T = Type("Int")
BOOL_T = Type("Bool")
REF_T = Type("Ref")
PERM_T = Type("Perm")


def set_type(elem: Type) -> Type:
    return Type("Set", (elem,))


# ---------------------------------------------------------------------------
# Expressions

@dataclass
class Expr:
    # assigned by the well-formedness checker (instance attribute)
    typ = None


@dataclass
class IntLit(Expr):
    value: int
    pos: Pos = _pos()


@dataclass
class BoolLit(Expr):
    value: bool
    pos: Pos = _pos()


@dataclass
class NullLit(Expr):
    pos: Pos = _pos()


@dataclass
class PermLit(Expr):
    """``write`` (1) or ``none`` (0)."""
    keyword: str
    pos: Pos = _pos()


@dataclass
class Ident(Expr):
    name: str
    pos: Pos = _pos()


@dataclass
class Result(Expr):
    pos: Pos = _pos()


@dataclass
class Unary(Expr):
    op: str          # "!" or "-"
    operand: Expr
    pos: Pos = _pos()


@dataclass
class Binary(Expr):
    op: str          # "==>", "||", "&&", "==", "!=", "<", "<=", ">", ">=",
                     # "in", "+", "-", "*", "/", "\\", "%", "union",
                     # "intersection", "setminus", "subset"
    left: Expr
    right: Expr
    pos: Pos = _pos()


@dataclass
class CondExp(Expr):
    cond: Expr
    then: Expr
    els: Expr
    pos: Pos = _pos()


@dataclass
class Call(Expr):
    """Function, domain function, predicate instance or macro use."""
    name: str
    args: List[Expr]
    pos: Pos = _pos()


@dataclass
class FieldAccess(Expr):
    receiver: Expr
    field: str
    pos: Pos = _pos()


@dataclass
class Acc(Expr):
    """``acc(e.f, p)`` or ``acc(P(args), p)``; perm None means ``write``."""
    loc: Expr        # FieldAccess or Call (predicate instance)
    perm: Optional[Expr]
    pos: Pos = _pos()


@dataclass
class Old(Expr):
    expr: Expr
    label: Optional[str] = None
    pos: Pos = _pos()


@dataclass
class VarDecl:
    name: str
    typ: Type
    pos: Pos = _pos()


@dataclass
class Quant(Expr):
    kind: str                       # "forall" | "exists"
    vars: List[VarDecl]
    triggers: List[List[Expr]]
    body: Expr
    pos: Pos = _pos()


@dataclass
class SetLit(Expr):
    elem_type: Optional[Type]
    elems: List[Expr]
    pos: Pos = _pos()


@dataclass
class SetCard(Expr):
    operand: Expr
    pos: Pos = _pos()


# ---------------------------------------------------------------------------
# Statements

@dataclass
class Stmt:
    pass


@dataclass
class LocalDecl(Stmt):
    decl: VarDecl
    init: Optional[Expr]
    pos: Pos = _pos()


@dataclass
class Assign(Stmt):
    target: str
    value: Expr
    pos: Pos = _pos()


@dataclass
class FieldWrite(Stmt):
    target: FieldAccess
    value: Expr
    pos: Pos = _pos()


@dataclass
class MethodCall(Stmt):
    """Method call (or a statement-macro use before expansion)."""
    name: str
    args: List[Expr]
    targets: List[str]
    pos: Pos = _pos()


@dataclass
class Inhale(Stmt):
    assertion: Expr
    pos: Pos = _pos()
    norm: Optional["Assertion"] = field(default=None, compare=False, repr=False)


@dataclass
class Exhale(Stmt):
    assertion: Expr
    pos: Pos = _pos()
    norm: Optional["Assertion"] = field(default=None, compare=False, repr=False)


@dataclass
class Assert(Stmt):
    assertion: Expr
    pos: Pos = _pos()
    norm: Optional["Assertion"] = field(default=None, compare=False, repr=False)


@dataclass
class Assume(Stmt):
    assertion: Expr
    pos: Pos = _pos()


@dataclass
class Fold(Stmt):
    pred: Expr       # Acc over a predicate Call, or a bare predicate Call
    pos: Pos = _pos()
    norm: Optional["Assertion"] = field(default=None, compare=False, repr=False)


@dataclass
class Unfold(Stmt):
    pred: Expr
    pos: Pos = _pos()
    norm: Optional["Assertion"] = field(default=None, compare=False, repr=False)


@dataclass
class If(Stmt):
    cond: Expr
    then: List[Stmt]
    els: List[Stmt]
    pos: Pos = _pos()


@dataclass
class While(Stmt):
    cond: Expr
    invariants: List[Expr]
    body: List[Stmt]
    pos: Pos = _pos()
    norm: Optional["Assertion"] = field(default=None, compare=False, repr=False)


@dataclass
class Label(Stmt):
    name: str
    pos: Pos = _pos()


@dataclass
class Block(Stmt):
    """Inline block produced by statement-macro expansion."""
    body: List[Stmt]
    pos: Pos = _pos()


# ---------------------------------------------------------------------------
# Declarations

@dataclass
class FieldDecl:
    name: str
    typ: Type
    pos: Pos = _pos()


@dataclass
class DomainFunc:
    name: str
    params: List[VarDecl]
    result: Type
    unique: bool = False
    pos: Pos = _pos()


@dataclass
class Axiom:
    name: Optional[str]
    expr: Expr
    pos: Pos = _pos()


@dataclass
class Domain:
    name: str
    functions: List[DomainFunc]
    axioms: List[Axiom]
    pos: Pos = _pos()


@dataclass
class Function:
    name: str
    params: List[VarDecl]
    result: Type
    pres: List[Expr]
    posts: List[Expr]
    body: Optional[Expr]
    pos: Pos = _pos()
    pre_norm: Optional["Assertion"] = field(default=None, compare=False, repr=False)


@dataclass
class Predicate:
    name: str
    params: List[VarDecl]
    body: Optional[Expr]
    pos: Pos = _pos()
    body_norm: Optional["Assertion"] = field(default=None, compare=False, repr=False)


@dataclass
class Method:
    name: str
    params: List[VarDecl]
    returns: List[VarDecl]
    pres: List[Expr]
    posts: List[Expr]
    body: Optional[List[Stmt]]
    pos: Pos = _pos()
    pre_norm: Optional["Assertion"] = field(default=None, compare=False, repr=False)
    post_norm: Optional["Assertion"] = field(default=None, compare=False, repr=False)


@dataclass
class Macro:
    name: str
    params: Optional[List[str]]     # None: no parameter list at all
    body: object                    # Expr or List[Stmt]
    pos: Pos = _pos()

    @property
    def is_statement(self):
        return isinstance(self.body, list)


@dataclass
class Program:
    fields: List[FieldDecl] = field(default_factory=list)
    domains: List[Domain] = field(default_factory=list)
    functions: List[Function] = field(default_factory=list)
    predicates: List[Predicate] = field(default_factory=list)
    methods: List[Method] = field(default_factory=list)
    macros: List[Macro] = field(default_factory=list)

    def find_field(self, name) -> Optional[FieldDecl]:
        for f in self.fields:
            if f.name == name:
                return f
        return None

    def find_method(self, name) -> Optional[Method]:
        for m in self.methods:
            if m.name == name:
                return m
        return None

    def find_function(self, name) -> Optional[Function]:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    def find_predicate(self, name) -> Optional[Predicate]:
        for p in self.predicates:
            if p.name == name:
                return p
        return None


# ---------------------------------------------------------------------------
# Normalised assertions (output of the well-formedness checker)

@dataclass
class Assertion:
    pass


@dataclass
class PureA(Assertion):
    expr: Expr
    pos: Pos = _pos()


@dataclass
class AccA(Assertion):
    """Single field permission ``acc(rcv.f, perm)``."""
    receiver: Expr
    field: str
    perm: Expr
    pos: Pos = _pos()


@dataclass
class PredA(Assertion):
    name: str
    args: List[Expr]
    perm: Expr
    pos: Pos = _pos()


@dataclass
class ISC(Assertion):
    """Canonical ``forall x: T :: cond(x) ==> acc(rcv(x).field, perm(x))``."""
    var: VarDecl
    cond: Expr
    receiver: Expr
    field: str
    perm: Expr
    pos: Pos = _pos()


@dataclass
class SepA(Assertion):
    parts: List[Assertion]
    pos: Pos = _pos()


@dataclass
class ImpA(Assertion):
    cond: Expr
    body: Assertion
    pos: Pos = _pos()


@dataclass
class CondA(Assertion):
    cond: Expr
    then: Assertion
    els: Assertion
    pos: Pos = _pos()


def walk_expr(e):
    """Pre-order iteration over an expression tree."""
    stack = [e]
    while stack:
        x = stack.pop()
        if x is None:
            continue
        yield x
        if isinstance(x, Unary):
            stack.append(x.operand)
        elif isinstance(x, Binary):
            stack.extend([x.right, x.left])
        elif isinstance(x, CondExp):
            stack.extend([x.els, x.then, x.cond])
        elif isinstance(x, Call):
            stack.extend(reversed(x.args))
        elif isinstance(x, FieldAccess):
            stack.append(x.receiver)
        elif isinstance(x, Acc):
            stack.extend([x.perm, x.loc])
        elif isinstance(x, Old):
            stack.append(x.expr)
        elif isinstance(x, Quant):
            stack.append(x.body)
            for t in x.triggers:
                stack.extend(t)
        elif isinstance(x, SetLit):
            stack.extend(reversed(x.elems))
        elif isinstance(x, SetCard):
            stack.append(x.operand)
