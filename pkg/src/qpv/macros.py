"""Macro expansion and capture-avoiding substitution over the surface AST."""

from __future__ import annotations

import dataclasses
from typing import Callable, Dict, List

from . import ast
from .ast import Pos


class MacroError(Exception):
    def __init__(self, message, pos: Pos):
        self.message = message
        self.pos = pos
        super().__init__("%s: %s" % (pos, message))


_NODE_TYPES = (ast.Expr, ast.Stmt, ast.VarDecl)


def map_children(node, f: Callable):
    """Rebuild a node with f applied to every direct child node."""
    changes = {}
    for fd in dataclasses.fields(node):
        if fd.name == "pos":
            continue
        v = getattr(node, fd.name)
        nv = _map_value(v, f)
        if nv is not v:
            changes[fd.name] = nv
    return dataclasses.replace(node, **changes) if changes else node


def _map_value(v, f):
    if isinstance(v, _NODE_TYPES):
        return f(v)
    if isinstance(v, list):
        out = [_map_value(x, f) for x in v]
        if all(a is b for a, b in zip(out, v)):
            return v
        return out
    return v


def with_pos(node, pos: Pos):
    """Copy of a tree with every position replaced by pos."""
    def go(n):
        n = map_children(n, go)
        if hasattr(n, "pos"):
            n = dataclasses.replace(n, pos=pos)
        return n
    return go(node)


def free_idents(e) -> set:
    """Names of identifiers occurring free in an expression."""
    out = set()

    def go(x, bound):
        if isinstance(x, ast.Ident):
            if x.name not in bound:
                out.add(x.name)
            return x
        if isinstance(x, ast.Quant):
            inner = bound | {v.name for v in x.vars}
            for tr in x.triggers:
                for t in tr:
                    go(t, inner)
            go(x.body, inner)
            return x
        map_children(x, lambda c: go(c, bound))
        return x

    go(e, frozenset())
    return out


def bound_names(e) -> set:
    return {v.name for x in ast.walk_expr(e) if isinstance(x, ast.Quant) for v in x.vars}


def subst(e, mapping: Dict[str, ast.Expr]):
    """Capture-avoiding simultaneous substitution of identifiers."""
    if not mapping:
        return e
    incoming = set()
    for v in mapping.values():
        incoming |= free_idents(v)
    return _subst(e, mapping, incoming)


def _subst(x, mapping, incoming):
    if isinstance(x, ast.Ident):
        return mapping.get(x.name, x)
    if isinstance(x, ast.Quant):
        names = {v.name for v in x.vars}
        inner = {k: v for k, v in mapping.items() if k not in names}
        if not inner:
            return x
        renames = {}
        avoid = incoming | free_idents(x) | names | bound_names(x.body)
        new_vars = []
        for v in x.vars:
            if v.name in incoming:
                k = 1
                while "%s_%d" % (v.name, k) in avoid:
                    k += 1
                nn = "%s_%d" % (v.name, k)
                avoid.add(nn)
                renames[v.name] = ast.Ident(nn, v.pos)
                new_vars.append(dataclasses.replace(v, name=nn))
            else:
                new_vars.append(v)
        inner.update(renames)
        body = _subst(x.body, inner, incoming | {r.name for r in renames.values()})
        trigs = [[_subst(t, inner, incoming) for t in tr] for tr in x.triggers]
        return dataclasses.replace(x, vars=new_vars, triggers=trigs, body=body)
    return map_children(x, lambda c: _subst(c, mapping, incoming))


class _Expander:
    def __init__(self, macros: List[ast.Macro]):
        self.macros = {}
        for m in macros:
            if m.name in self.macros:
                raise MacroError("duplicate macro '%s'" % m.name, m.pos)
            self.macros[m.name] = m
        self.stack = []

    def _enter(self, m: ast.Macro, pos):
        if m.name in self.stack:
            cycle = " -> ".join(self.stack[self.stack.index(m.name):] + [m.name])
            raise MacroError("recursive macro cycle: %s" % cycle, pos)
        self.stack.append(m.name)

    def _instantiate(self, m: ast.Macro, args, pos):
        params = m.params or []
        if len(args) != len(params):
            raise MacroError("macro '%s' expects %d arguments, got %d"
                             % (m.name, len(params), len(args)), pos)
        body = with_pos(m.body, pos) if not m.is_statement else \
            [with_pos(s, pos) for s in m.body]
        mapping = dict(zip(params, args))
        if m.is_statement:
            return [self._subst_stmt(s, mapping) for s in body]
        return subst(body, mapping)

    def _subst_stmt(self, s, mapping):
        def go(n):
            if isinstance(n, ast.Expr):
                return subst(n, mapping)
            if isinstance(n, ast.Assign) and n.target in mapping:
                tgt = mapping[n.target]
                if not isinstance(tgt, ast.Ident):
                    raise MacroError("macro argument for assigned parameter '%s' is not a variable"
                                     % n.target, n.pos)
                n = dataclasses.replace(n, target=tgt.name)
            return map_children(n, go)
        return go(s)

    def expr(self, e):
        if isinstance(e, ast.Call) and e.name in self.macros:
            m = self.macros[e.name]
            if m.is_statement:
                raise MacroError("statement macro '%s' used as an expression" % m.name, e.pos)
            args = [self.expr(a) for a in e.args]
            self._enter(m, e.pos)
            try:
                return self.expr(self._instantiate(m, args, e.pos))
            finally:
                self.stack.pop()
        if isinstance(e, ast.Ident) and e.name in self.macros and self.macros[e.name].params is None:
            m = self.macros[e.name]
            self._enter(m, e.pos)
            try:
                return self.expr(self._instantiate(m, [], e.pos))
            finally:
                self.stack.pop()
        return map_children(e, self.node)

    def node(self, n):
        if isinstance(n, ast.Expr):
            return self.expr(n)
        if isinstance(n, ast.Stmt):
            return self.stmt(n)
        return n

    def stmt(self, s):
        if isinstance(s, ast.MethodCall) and s.name in self.macros:
            m = self.macros[s.name]
            if not m.is_statement:
                raise MacroError("expression macro '%s' used as a statement" % m.name, s.pos)
            if s.targets:
                raise MacroError("statement macro '%s' cannot have targets" % m.name, s.pos)
            args = [self.expr(a) for a in s.args]
            self._enter(m, s.pos)
            try:
                body = self._instantiate(m, args, s.pos)
                return ast.Block([self.stmt(x) for x in body], s.pos)
            finally:
                self.stack.pop()
        return map_children(s, self.node)


def expand_macros(p: ast.Program) -> ast.Program:
    """Inline every macro use; the result has no macros left."""
    ex = _Expander(p.macros)
    # expanding each body on its own detects cycles even in unused macros
    for m in p.macros:
        ex._enter(m, m.pos)
        try:
            if m.is_statement:
                [ex.stmt(s) for s in m.body]
            else:
                ex.expr(m.body)
        finally:
            ex.stack.pop()

    def exprs(es):
        return [ex.expr(e) for e in es]

    domains = [dataclasses.replace(d, axioms=[dataclasses.replace(a, expr=ex.expr(a.expr))
                                              for a in d.axioms]) for d in p.domains]
    functions = [dataclasses.replace(f, pres=exprs(f.pres), posts=exprs(f.posts),
                                     body=ex.expr(f.body) if f.body is not None else None)
                 for f in p.functions]
    predicates = [dataclasses.replace(pr, body=ex.expr(pr.body) if pr.body is not None else None)
                  for pr in p.predicates]
    methods = [dataclasses.replace(m, pres=exprs(m.pres), posts=exprs(m.posts),
                                   body=[ex.stmt(s) for s in m.body] if m.body is not None else None)
               for m in p.methods]
    return ast.Program(list(p.fields), domains, functions, predicates, methods, [])
