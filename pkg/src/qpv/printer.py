"""Source printer.  Output re-parses to an equal tree (binary operators are
fully parenthesised, so precedence never has to be reconstructed)."""

from __future__ import annotations

from . import ast


def expr(e: ast.Expr) -> str:
    if isinstance(e, ast.IntLit):
        return str(e.value)
    if isinstance(e, ast.BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, ast.NullLit):
        return "null"
    if isinstance(e, ast.PermLit):
        return e.keyword
    if isinstance(e, ast.Ident):
        return e.name
    if isinstance(e, ast.Result):
        return "result"
    if isinstance(e, ast.Unary):
        return "%s(%s)" % (e.op, expr(e.operand))
    if isinstance(e, ast.Binary):
        return "(%s %s %s)" % (expr(e.left), e.op, expr(e.right))
    if isinstance(e, ast.CondExp):
        return "(%s ? %s : %s)" % (expr(e.cond), expr(e.then), expr(e.els))
    if isinstance(e, ast.Call):
        return "%s(%s)" % (e.name, ", ".join(expr(a) for a in e.args))
    if isinstance(e, ast.FieldAccess):
        return "%s.%s" % (_atom(e.receiver), e.field)
    if isinstance(e, ast.Acc):
        if e.perm is None:
            return "acc(%s)" % expr(e.loc)
        return "acc(%s, %s)" % (expr(e.loc), expr(e.perm))
    if isinstance(e, ast.Old):
        lab = "[%s]" % e.label if e.label else ""
        return "old%s(%s)" % (lab, expr(e.expr))
    if isinstance(e, ast.Quant):
        vs = ", ".join(decl(v) for v in e.vars)
        trig = "".join(" {%s}" % ", ".join(expr(t) for t in tr) for tr in e.triggers)
        return "(%s %s ::%s %s)" % (e.kind, vs, trig, expr(e.body))
    if isinstance(e, ast.SetLit):
        ty = "[%s]" % e.elem_type if e.elem_type else ""
        return "Set%s(%s)" % (ty, ", ".join(expr(x) for x in e.elems))
    if isinstance(e, ast.SetCard):
        return "|%s|" % expr(e.operand)
    raise TypeError("cannot print %r" % (e,))


def _atom(e):
    s = expr(e)
    if isinstance(e, (ast.Ident, ast.Call, ast.FieldAccess, ast.Result, ast.NullLit, ast.Old)):
        return s
    return "(%s)" % s


def decl(v: ast.VarDecl) -> str:
    return "%s: %s" % (v.name, v.typ)


def stmts(body, indent=1) -> list:
    out = []
    for s in body:
        out.extend(stmt(s, indent))
    return out


def stmt(s: ast.Stmt, indent=1) -> list:
    pad = "  " * indent
    if isinstance(s, ast.LocalDecl):
        init = " := %s" % expr(s.init) if s.init is not None else ""
        return [pad + "var %s%s" % (decl(s.decl), init)]
    if isinstance(s, ast.Assign):
        return [pad + "%s := %s" % (s.target, expr(s.value))]
    if isinstance(s, ast.FieldWrite):
        return [pad + "%s := %s" % (expr(s.target), expr(s.value))]
    if isinstance(s, ast.MethodCall):
        call = "%s(%s)" % (s.name, ", ".join(expr(a) for a in s.args))
        if s.targets:
            return [pad + "%s := %s" % (", ".join(s.targets), call)]
        return [pad + call]
    for cls, kw in ((ast.Inhale, "inhale"), (ast.Exhale, "exhale"),
                    (ast.Assert, "assert"), (ast.Assume, "assume")):
        if isinstance(s, cls):
            return [pad + "%s %s" % (kw, expr(s.assertion))]
    if isinstance(s, ast.Fold):
        return [pad + "fold %s" % expr(s.pred)]
    if isinstance(s, ast.Unfold):
        return [pad + "unfold %s" % expr(s.pred)]
    if isinstance(s, ast.Label):
        return [pad + "label %s" % s.name]
    if isinstance(s, ast.If):
        out = [pad + "if (%s) {" % expr(s.cond)] + stmts(s.then, indent + 1)
        if s.els:
            out.append(pad + "} else {")
            out.extend(stmts(s.els, indent + 1))
        out.append(pad + "}")
        return out
    if isinstance(s, ast.While):
        out = [pad + "while (%s)" % expr(s.cond)]
        out += [pad + "  invariant %s" % expr(i) for i in s.invariants]
        out.append(pad + "{")
        out += stmts(s.body, indent + 1)
        out.append(pad + "}")
        return out
    if isinstance(s, ast.Block):
        return stmts(s.body, indent)
    raise TypeError("cannot print %r" % (s,))


def program(p: ast.Program) -> str:
    out = []
    for f in p.fields:
        out.append("field %s: %s" % (f.name, f.typ))
    for d in p.domains:
        out.append("domain %s {" % d.name)
        for fn in d.functions:
            uq = "unique " if fn.unique else ""
            out.append("  %sfunction %s(%s): %s" % (uq, fn.name, ", ".join(decl(v) for v in fn.params),
                                                   fn.result))
        for ax in d.axioms:
            out.append("  axiom %s{ %s }" % (ax.name + " " if ax.name else "", expr(ax.expr)))
        out.append("}")
    for m in p.macros:
        ps = "(%s)" % ", ".join(m.params) if m.params is not None else ""
        if m.is_statement:
            out.append("define %s%s {" % (m.name, ps))
            out += stmts(m.body)
            out.append("}")
        else:
            # body on its own line so that a leading '(' is not read as parameters
            out.append("define %s%s" % (m.name, ps))
            out.append("  " + expr(m.body))
    for fn in p.functions:
        out.append("function %s(%s): %s" % (fn.name, ", ".join(decl(v) for v in fn.params), fn.result))
        out += ["  requires %s" % expr(e) for e in fn.pres]
        out += ["  ensures %s" % expr(e) for e in fn.posts]
        if fn.body is not None:
            out.append("{ %s }" % expr(fn.body))
    for pr in p.predicates:
        head = "predicate %s(%s)" % (pr.name, ", ".join(decl(v) for v in pr.params))
        out.append(head + (" { %s }" % expr(pr.body) if pr.body is not None else ""))
    for m in p.methods:
        rets = " returns (%s)" % ", ".join(decl(v) for v in m.returns) if m.returns else ""
        out.append("method %s(%s)%s" % (m.name, ", ".join(decl(v) for v in m.params), rets))
        out += ["  requires %s" % expr(e) for e in m.pres]
        out += ["  ensures %s" % expr(e) for e in m.posts]
        if m.body is not None:
            out.append("{")
            out += stmts(m.body)
            out.append("}")
    return "\n".join(out) + "\n"
