"""Lexer and recursive-descent parser for the Viper-like input language."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List, Optional

from . import ast
from .ast import Pos


class ParseError(Exception):
    def __init__(self, message, pos: Pos, expected=()):
        self.message = message
        self.pos = pos
        self.expected = tuple(sorted(set(expected)))
        text = "%s: %s" % (pos, message)
        if self.expected:
            text += " (expected one of: %s)" % ", ".join(self.expected)
        super().__init__(text)


KEYWORDS = frozenset("""
    field domain function predicate method define axiom unique returns
    requires ensures invariant var if else elseif while inhale exhale assert
    assume fold unfold label forall exists acc old true false null result
    write none in union intersection setminus subset and or Set
""".split())

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<lcomment>//[^\n]*)
  | (?P<bcomment>/\*.*?\*/)
  | (?P<int>[0-9]+)
  | (?P<ident>[A-Za-z_$][A-Za-z0-9_$']*)
  | (?P<op><==>|==>|==|!=|<=|>=|&&|\|\||:=|::|[!<>+\-*/\\%?:(){}\[\],.;|])
""", re.VERBOSE | re.DOTALL)


@dataclass
class Token:
    kind: str        # "int", "ident", "kw", "op", "eof"
    value: str
    pos: Pos

    def __repr__(self):
        return "%s %r @%s" % (self.kind, self.value, self.pos)


def tokenize(text: str) -> List[Token]:
    tokens = []
    i = 0
    line, col = 1, 1
    n = len(text)
    while i < n:
        m = _TOKEN_RE.match(text, i)
        if not m:
            raise ParseError("unexpected character %r" % text[i], Pos(line, col))
        kind = m.lastgroup
        val = m.group(kind)
        pos = Pos(line, col)
        if kind == "ident" and val in KEYWORDS:
            kind = "kw"
        if kind not in ("ws", "lcomment", "bcomment"):
            tokens.append(Token(kind, val, pos))
        nl = val.count("\n")
        if nl:
            line += nl
            col = len(val) - val.rfind("\n")
        else:
            col += len(val)
        i = m.end()
    tokens.append(Token("eof", "<end of file>", Pos(line, col)))
    return tokens


# binary operator precedence, loosest first
_LEVELS = [
    ("<==>",),
    ("==>",),
    ("||", "or"),
    ("&&", "and"),
    ("==", "!="),
    ("<", "<=", ">", ">=", "in", "subset"),
    ("+", "-", "union", "intersection", "setminus"),
    ("*", "/", "\\", "%"),
]
_RIGHT_ASSOC = {"==>"}
_CANON = {"and": "&&", "or": "||"}


class Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        # tokens tried (and rejected) at the current position
        self.tried = set()
        self.tried_at = -1

    # -- token helpers -----------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, *values) -> bool:
        t = self.tok
        return t.kind in ("op", "kw") and t.value in values

    def accept(self, *values) -> Optional[Token]:
        if self.at(*values):
            t = self.tok
            self.i += 1
            return t
        if self.tried_at != self.i:
            self.tried_at = self.i
            self.tried = set()
        self.tried.update("'%s'" % v for v in values)
        return None

    def expect(self, *values) -> Token:
        t = self.accept(*values)
        if t is None:
            raise ParseError("unexpected %s" % self._describe(self.tok), self.tok.pos,
                             self.tried)
        return t

    def ident(self) -> Token:
        t = self.tok
        if t.kind != "ident":
            raise ParseError("unexpected %s" % self._describe(t), t.pos, ["identifier"])
        self.i += 1
        return t

    @staticmethod
    def _describe(t: Token) -> str:
        if t.kind == "eof":
            return "end of file"
        return "'%s'" % t.value

    def skip_semis(self):
        while self.accept(";"):
            pass

    # -- program -----------------------------------------------------------

    def program(self) -> ast.Program:
        prog = ast.Program()
        while True:
            self.skip_semis()
            t = self.tok
            if t.kind == "eof":
                break
            if self.at("field"):
                prog.fields.append(self.field_decl())
            elif self.at("domain"):
                prog.domains.append(self.domain())
            elif self.at("function"):
                prog.functions.append(self.function())
            elif self.at("predicate"):
                prog.predicates.append(self.predicate())
            elif self.at("method"):
                prog.methods.append(self.method())
            elif self.at("define"):
                prog.macros.append(self.macro())
            else:
                raise ParseError("unexpected %s" % self._describe(t), t.pos,
                                 ["'field'", "'domain'", "'function'", "'predicate'",
                                  "'method'", "'define'"])
        return prog

    def field_decl(self):
        start = self.expect("field").pos
        name = self.ident().value
        self.expect(":")
        typ = self.type_()
        self.accept(";")
        return ast.FieldDecl(name, typ, start)

    def type_(self) -> ast.Type:
        if self.accept("Set"):
            self.expect("[")
            elem = self.type_()
            self.expect("]")
            return ast.set_type(elem)
        name = self.ident().value
        if self.accept("["):
            args = [self.type_()]
            while self.accept(","):
                args.append(self.type_())
            self.expect("]")
            return ast.Type(name, tuple(args))
        return ast.Type(name)

    def params(self) -> List[ast.VarDecl]:
        self.expect("(")
        out = []
        if not self.at(")"):
            out.append(self.var_decl())
            while self.accept(","):
                out.append(self.var_decl())
        self.expect(")")
        return out

    def var_decl(self) -> ast.VarDecl:
        t = self.ident()
        self.expect(":")
        return ast.VarDecl(t.value, self.type_(), t.pos)

    def domain(self):
        start = self.expect("domain").pos
        name = self.ident().value
        self.expect("{")
        funcs, axioms = [], []
        while not self.accept("}"):
            self.skip_semis()
            if self.at("}"):
                continue
            if self.at("unique", "function"):
                unique = bool(self.accept("unique"))
                fpos = self.expect("function").pos
                fname = self.ident().value
                ps = self.params()
                self.expect(":")
                res = self.type_()
                self.accept(";")
                funcs.append(ast.DomainFunc(fname, ps, res, unique, fpos))
            elif self.at("axiom"):
                apos = self.expect("axiom").pos
                aname = self.ident().value if self.tok.kind == "ident" else None
                self.expect("{")
                e = self.expr()
                self.expect("}")
                axioms.append(ast.Axiom(aname, e, apos))
            else:
                raise ParseError("unexpected %s" % self._describe(self.tok), self.tok.pos,
                                 ["'function'", "'axiom'", "'}'"])
        return ast.Domain(name, funcs, axioms, start)

    def specs(self, kinds):
        out = {k: [] for k in kinds}
        while self.at(*kinds):
            k = self.tok.value
            self.i += 1
            out[k].append(self.expr())
            self.accept(";")
        return out

    def function(self):
        start = self.expect("function").pos
        name = self.ident().value
        ps = self.params()
        self.expect(":")
        res = self.type_()
        sp = self.specs(("requires", "ensures"))
        body = None
        if self.accept("{"):
            body = self.expr()
            self.expect("}")
        return ast.Function(name, ps, res, sp["requires"], sp["ensures"], body, start)

    def predicate(self):
        start = self.expect("predicate").pos
        name = self.ident().value
        ps = self.params()
        body = None
        if self.accept("{"):
            body = self.expr()
            self.expect("}")
        return ast.Predicate(name, ps, body, start)

    def method(self):
        start = self.expect("method").pos
        name = self.ident().value
        ps = self.params()
        rets = []
        if self.accept("returns"):
            rets = self.params()
        sp = self.specs(("requires", "ensures"))
        body = None
        if self.at("{"):
            body = self.block()
        return ast.Method(name, ps, rets, sp["requires"], sp["ensures"], body, start)

    def macro(self):
        start = self.expect("define").pos
        name = self.ident().value
        params = None
        # a '(' directly after the name (same line) opens the parameter list
        if self.at("(") and self.tok.pos.line == self.toks[self.i - 1].pos.line \
                and self._looks_like_param_list():
            self.expect("(")
            params = []
            if not self.at(")"):
                params.append(self.ident().value)
                while self.accept(","):
                    params.append(self.ident().value)
            self.expect(")")
        if self.at("{"):
            body = self.block()
        else:
            body = self.expr()
        return ast.Macro(name, params, body, start)

    def _looks_like_param_list(self):
        j = self.i + 1
        if self.toks[j].kind == "op" and self.toks[j].value == ")":
            return True
        while True:
            if self.toks[j].kind != "ident":
                return False
            j += 1
            t = self.toks[j]
            if t.kind == "op" and t.value == ")":
                return True
            if not (t.kind == "op" and t.value == ","):
                return False
            j += 1

    # -- statements --------------------------------------------------------

    def block(self) -> List[ast.Stmt]:
        self.expect("{")
        out = []
        while True:
            self.skip_semis()
            if self.accept("}"):
                return out
            out.append(self.stmt())

    def stmt(self) -> ast.Stmt:
        t = self.tok
        pos = t.pos
        if self.accept("var"):
            d = self.var_decl()
            init = self.expr() if self.accept(":=") else None
            return ast.LocalDecl(d, init, pos)
        if self.accept("inhale"):
            return ast.Inhale(self.expr(), pos)
        if self.accept("exhale"):
            return ast.Exhale(self.expr(), pos)
        if self.accept("assert"):
            return ast.Assert(self.expr(), pos)
        if self.accept("assume"):
            return ast.Assume(self.expr(), pos)
        if self.accept("fold"):
            return ast.Fold(self.expr(), pos)
        if self.accept("unfold"):
            return ast.Unfold(self.expr(), pos)
        if self.accept("label"):
            return ast.Label(self.ident().value, pos)
        if self.accept("if"):
            return self.if_rest(pos)
        if self.accept("while"):
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            invs = []
            while self.accept("invariant"):
                invs.append(self.expr())
                self.accept(";")
            return ast.While(cond, invs, self.block(), pos)
        if t.kind == "ident":
            # multi-target call: a, b := m(...)
            if self.peek().kind == "op" and self.peek().value == ",":
                targets = [self.ident().value]
                while self.accept(","):
                    targets.append(self.ident().value)
                self.expect(":=")
                call = self.postfix()
                if not isinstance(call, ast.Call):
                    raise ParseError("expected a method call", call.pos if hasattr(call, "pos") else pos,
                                     ["method call"])
                return ast.MethodCall(call.name, call.args, targets, pos)
            if self.peek().kind == "op" and self.peek().value == ":=":
                name = self.ident().value
                self.expect(":=")
                return ast.Assign(name, self.expr(), pos)
        lhs = self.postfix()
        if self.accept(":="):
            if not isinstance(lhs, ast.FieldAccess):
                raise ParseError("invalid assignment target", pos, ["field location"])
            return ast.FieldWrite(lhs, self.expr(), pos)
        if isinstance(lhs, ast.Call):
            return ast.MethodCall(lhs.name, lhs.args, [], pos)
        raise ParseError("expression is not a statement", pos, ["':='"])

    def if_rest(self, pos) -> ast.If:
        self.expect("(")
        cond = self.expr()
        self.expect(")")
        then = self.block()
        els = []
        epos = self.tok.pos
        if self.accept("elseif"):
            els = [self.if_rest(epos)]
        elif self.accept("else"):
            if self.at("if"):
                ipos = self.expect("if").pos
                els = [self.if_rest(ipos)]
            else:
                els = self.block()
        return ast.If(cond, then, els, pos)

    # -- expressions -------------------------------------------------------

    def expr(self) -> ast.Expr:
        cond = self.binary(0)
        if self.at("?"):
            pos = self.expect("?").pos
            then = self.expr()
            self.expect(":")
            els = self.expr()
            return ast.CondExp(cond, then, els, _pos_of(cond, pos))
        return cond

    def binary(self, level: int) -> ast.Expr:
        if level == len(_LEVELS):
            return self.unary()
        ops = _LEVELS[level]
        left = self.binary(level + 1)
        while self.at(*ops):
            op_tok = self.tok
            self.i += 1
            op = _CANON.get(op_tok.value, op_tok.value)
            if op in _RIGHT_ASSOC:
                right = self.binary(level)
                return ast.Binary(op, left, right, _pos_of(left, op_tok.pos))
            right = self.binary(level + 1)
            left = ast.Binary(op, left, right, _pos_of(left, op_tok.pos))
        return left

    def unary(self) -> ast.Expr:
        t = self.tok
        if self.accept("!"):
            return ast.Unary("!", self.unary(), t.pos)
        if self.accept("-"):
            return ast.Unary("-", self.unary(), t.pos)
        return self.postfix()

    def postfix(self) -> ast.Expr:
        e = self.primary()
        while self.at("."):
            self.expect(".")
            f = self.ident()
            e = ast.FieldAccess(e, f.value, _pos_of(e, f.pos))
        return e

    def args(self) -> List[ast.Expr]:
        self.expect("(")
        out = []
        if not self.at(")"):
            out.append(self.expr())
            while self.accept(","):
                out.append(self.expr())
        self.expect(")")
        return out

    def primary(self) -> ast.Expr:
        t = self.tok
        pos = t.pos
        if t.kind == "int":
            self.i += 1
            return ast.IntLit(int(t.value), pos)
        if self.accept("true"):
            return ast.BoolLit(True, pos)
        if self.accept("false"):
            return ast.BoolLit(False, pos)
        if self.accept("null"):
            return ast.NullLit(pos)
        if self.accept("result"):
            return ast.Result(pos)
        if self.accept("write"):
            return ast.PermLit("write", pos)
        if self.accept("none"):
            return ast.PermLit("none", pos)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if self.accept("|"):
            e = self.expr()
            self.expect("|")
            return ast.SetCard(e, pos)
        if self.accept("acc"):
            self.expect("(")
            loc = self.postfix()
            if not isinstance(loc, (ast.FieldAccess, ast.Call)):
                raise ParseError("acc expects a field location or predicate instance", pos,
                                 ["field location"])
            perm = None
            if self.accept(","):
                perm = self.expr()
            self.expect(")")
            return ast.Acc(loc, perm, pos)
        if self.accept("old"):
            label = None
            if self.accept("["):
                label = self.ident().value
                self.expect("]")
            self.expect("(")
            e = self.expr()
            self.expect(")")
            return ast.Old(e, label, pos)
        if self.at("forall", "exists"):
            kind = self.tok.value
            self.i += 1
            vs = [self.var_decl()]
            while self.accept(","):
                vs.append(self.var_decl())
            self.expect("::")
            trigs = []
            while self.accept("{"):
                trig = [self.expr()]
                while self.accept(","):
                    trig.append(self.expr())
                self.expect("}")
                trigs.append(trig)
            body = self.expr()
            return ast.Quant(kind, vs, trigs, body, pos)
        if self.accept("Set"):
            etype = None
            if self.accept("["):
                etype = self.type_()
                self.expect("]")
            return ast.SetLit(etype, self.args(), pos)
        if t.kind == "ident":
            self.i += 1
            if self.at("("):
                return ast.Call(t.value, self.args(), pos)
            return ast.Ident(t.value, pos)
        raise ParseError("unexpected %s" % self._describe(t), pos, ["expression"])


def _pos_of(e, fallback):
    return getattr(e, "pos", fallback)


def parse(text: str) -> ast.Program:
    """Parse source text into a Program (raises ParseError)."""
    return Parser(text).program()


def parse_expr(text: str) -> ast.Expr:
    p = Parser(text)
    e = p.expr()
    if p.tok.kind != "eof":
        raise ParseError("trailing input", p.tok.pos, ["end of input"])
    return e
