"""Trigger (pattern) legality, inference and the per-axiom trigger choices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .terms import INTERPRETED, Fun, Term, subterms


@dataclass(frozen=True)
class TriggerChoice:
    qid: str
    triggers: Tuple[Tuple[Term, ...], ...]
    provenance: str     # "user", "schema", "inferred", "fallback", "solver-auto"


def _clean(t: Term) -> bool:
    """No interpreted symbol anywhere inside t."""
    for x in subterms(t):
        if x.op in INTERPRETED or x.is_quant:
            return False
    return True


def legal_term(t: Term) -> bool:
    return t.op == "app" and _clean(t)


def legal_trigger(trig: Sequence[Term], qvars: Sequence[Term]) -> bool:
    """Every term an uninterpreted application; together they mention every bound variable."""
    if not trig:
        return False
    covered = set()
    for t in trig:
        if not legal_term(t):
            return False
        covered |= t.free_vars()
    return all(v in covered for v in qvars)


def candidates(body: Term, qvars: Sequence[Term]) -> List[Term]:
    """Legal application subterms of body that mention a bound variable (first-occurrence order)."""
    qs = set(qvars)
    out = []
    seen = set()
    stack = [body]
    while stack:
        x = stack.pop()
        if x in seen:
            continue
        seen.add(x)
        if x.is_quant:
            # terms under an inner binder that mention its variables cannot be used
            inner = set(x.qvars)
            for s in subterms(x.body):
                if s.op == "app" and not (s.free_vars() & inner) and s.free_vars() & qs \
                        and legal_term(s) and s not in seen:
                    seen.add(s)
                    out.append(s)
            continue
        if x.op == "app" and (x.free_vars() & qs) and legal_term(x):
            out.append(x)
        stack.extend(reversed(x.args))
    return out


def infer(body: Term, qvars: Sequence[Term]) -> Tuple[Tuple[Term, ...], ...]:
    """Minimal legal triggers covering the bound variables; () if none exist."""
    cands = candidates(body, qvars)
    if not cands:
        return ()
    # drop candidates that properly contain another candidate with the same variables
    minimal = []
    for c in cands:
        fv = c.free_vars() & set(qvars)
        if any(d is not c and d in set(subterms(c)) and d != c and (d.free_vars() & set(qvars)) == fv
               for d in cands):
            continue
        minimal.append(c)
    full = [c for c in minimal if all(v in c.free_vars() for v in qvars)]
    if full:
        return tuple((c,) for c in full)
    # greedy multi-pattern over the remaining variables
    chosen, covered = [], set()
    for c in sorted(minimal, key=lambda t: -len(t.free_vars() & set(qvars))):
        new = (c.free_vars() & set(qvars)) - covered
        if new:
            chosen.append(c)
            covered |= new
    if all(v in covered for v in qvars):
        return (tuple(chosen),)
    return ()


def vmdefeq(fvf: Fun, fvf_i: Fun, r: Term) -> TriggerChoice:
    from .terms import App
    return TriggerChoice("vmdefeq", ((App(fvf, r),), (App(fvf_i, r),)), "schema")


def inv1(inv: Fun, r: Term) -> TriggerChoice:
    from .terms import App
    return TriggerChoice("inv1", ((App(inv, r),),), "schema")


def inv2(rcv: Term, cond: Term, x: Term, fvf: Optional[Fun]) -> TriggerChoice:
    """Trigger for ``forall x. c(x) ==> inv(e(x)) == x``.

    The receiver itself when it is a legal pattern.  For a bare variable
    receiver the chunk's value map is used (lookups are exactly when the
    inverse is needed), plus legal subterms of the condition such as a set
    membership.  Otherwise the solver picks patterns.
    """
    from .terms import App
    if legal_trigger([rcv], [x]):
        return TriggerChoice("inv2", ((rcv,),), "schema")
    if rcv == x:
        trigs = []
        if fvf is not None:
            trigs.append((App(fvf, x),))
        trigs.extend(t for t in infer(cond, [x]) if t not in trigs)
        if trigs:
            return TriggerChoice("inv2", tuple(trigs), "fallback")
    return TriggerChoice("inv2", (), "solver-auto")
