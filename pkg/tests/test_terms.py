from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpv.terms import (BOOL, FALSE, INT, ONE, PERM, REF, TRUE, ZERO, Add, And, App, Eq, Forall,
                       Fun, Implies, IntLit, Ite, Le, Lt, Min, Mul, Neg, Not, Or, PermLit, SortError,
                       Sub, SymbolPool, Term, ToPerm, Var, check_sorts, pvm_sort, show, simplify,
                       substitute)

ZERO_INT = IntLit(0)


def test_fresh_counts_per_stem():
    pool = SymbolPool()
    assert [pool.fresh("y", INT).name, pool.fresh("y", INT).name] == ["y@0", "y@1"]
    fvf = pool.fresh_fun("fvf", [REF], INT)
    assert fvf.name == "fvf@0" and fvf.arg_sorts == (REF,) and fvf.result == INT
    assert pool.fresh_fun("inv", [REF], INT).name == "inv@0"


def test_fresh_is_deterministic():
    def names():
        pool = SymbolPool()
        return [pool.fresh(s, INT).name for s in "abacab"]
    assert names() == names() == ["a@0", "b@0", "a@1", "c@0", "a@2", "b@1"]


def test_substitute_is_structural():
    y = Var("y@0", INT)
    t = substitute(Add(y, IntLit(1)), {y: IntLit(3)})
    assert show(t) == "(3 + 1)"
    assert simplify(t) == IntLit(4)


def test_substitute_avoids_capture():
    x, y = Var("x", INT), Var("y@0", INT)
    q = Forall([x], Lt(x, Add(x, y)))
    out = substitute(q, {y: x})
    (bound,) = out.qvars
    assert bound != x
    assert out.body == Lt(bound, Add(bound, x))


def test_substitute_leaves_bound_occurrences():
    x = Var("x", INT)
    q = Forall([x], Lt(x, IntLit(3)))
    assert substitute(q, {x: IntLit(7)}) == q


def test_substitute_generalises_over_fresh_symbol():
    # path condition mentioning a fresh y, re-bound over x
    y, x = Var("y@3", INT), Var("x", INT)
    f = Fun("g", (INT,), INT)
    pc = Implies(Le(ZERO_INT, y), Lt(IntLit(0), App(f, y)))
    out = Forall([x], substitute(pc, {y: x}))
    assert y not in out.free_vars() and out.free_vars() == frozenset()


def test_substitute_rejects_sort_mismatch():
    with pytest.raises(SortError):
        substitute(Var("y", INT), {Var("y", INT): TRUE})


def test_simplify_examples():
    c = Var("c", BOOL)
    assert simplify(Term("ite", (c, ONE, ONE), PERM)) == ONE
    q = Var("q", PERM)
    m = Min(q, ZERO)
    assert m.op == "ite" and simplify(m) == m
    assert simplify(Term("<", (ZERO, ONE), BOOL)) == TRUE
    assert simplify(Term("+", (q, ZERO), PERM)) == q


def test_drained_permission_simplifies_to_zero():
    c = Var("c", BOOL)
    p = Ite(c, ONE, ZERO)
    assert simplify(Term("-", (p, p), PERM)) == ZERO


def test_sort_errors():
    with pytest.raises(SortError):
        Add(IntLit(1), TRUE)
    with pytest.raises(SortError):
        Ite(TRUE, ONE, TRUE)
    with pytest.raises(SortError):
        App(Fun("f", (REF,), INT), IntLit(1))


def test_pvm_sorts_are_distinct_per_field():
    assert pvm_sort("val") != pvm_sort("left")


def test_terms_are_hashable_values():
    a = Add(Var("a", INT), IntLit(1))
    b = Add(Var("a", INT), IntLit(1))
    assert a == b and hash(a) == hash(b) and len({a, b}) == 1


# ---------------------------------------------------------------------------
# random terms, checked against a concrete evaluator

INT_VARS = [Var("i", INT), Var("j", INT)]
PERM_VARS = [Var("p", PERM), Var("q", PERM)]
BOOL_VARS = [Var("b", BOOL)]


def evaluate(t: Term, env):
    op, a = t.op, t.args
    if op == "var":
        return env[t.name]
    if op in ("int", "real", "bool"):
        return t.data
    ev = [evaluate(x, env) for x in a]
    if op == "+":
        return ev[0] + ev[1]
    if op == "-":
        return ev[0] - ev[1]
    if op == "*":
        return ev[0] * ev[1]
    if op == "neg":
        return -ev[0]
    if op == "to_real":
        return Fraction(ev[0])
    if op == "<":
        return ev[0] < ev[1]
    if op == "<=":
        return ev[0] <= ev[1]
    if op == "=":
        return ev[0] == ev[1]
    if op == "not":
        return not ev[0]
    if op == "and":
        return all(ev)
    if op == "or":
        return any(ev)
    if op == "=>":
        return (not ev[0]) or ev[1]
    if op == "iff":
        return ev[0] == ev[1]
    if op == "ite":
        return ev[1] if ev[0] else ev[2]
    raise AssertionError(op)


def terms_of(sort):
    if sort == INT:
        leaves = st.sampled_from(INT_VARS) | st.integers(-3, 3).map(IntLit)
    elif sort == PERM:
        leaves = st.sampled_from(PERM_VARS) | st.sampled_from(
            [Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(1)]).map(PermLit)
    else:
        leaves = st.sampled_from(BOOL_VARS) | st.booleans().map(lambda b: TRUE if b else FALSE)
    return leaves


@st.composite
def term(draw, sort, depth=3):
    if depth == 0 or draw(st.integers(0, 3)) == 0:
        return draw(terms_of(sort))
    sub = lambda s: term(s, depth - 1)  # noqa: E731
    if sort in (INT, PERM):
        kind = draw(st.sampled_from(["+", "-", "*", "neg", "ite", "min"] +
                                    (["to_real"] if sort == PERM else [])))
        if kind == "to_real":
            return ToPerm(draw(sub(INT)))
        if kind == "neg":
            return Neg(draw(sub(sort)))
        if kind == "ite":
            return Ite(draw(sub(BOOL)), draw(sub(sort)), draw(sub(sort)))
        if kind == "min":
            return Min(draw(sub(sort)), draw(sub(sort)))
        if kind == "*" and sort == PERM:
            return Mul(draw(terms_of(PERM)), draw(sub(PERM)))
        fn = {"+": Add, "-": Sub, "*": Mul}[kind]
        return fn(draw(sub(sort)), draw(sub(sort)))
    kind = draw(st.sampled_from(["<", "<=", "=", "not", "and", "or", "=>"]))
    if kind in ("<", "<=", "="):
        s = draw(st.sampled_from([INT, PERM]))
        fn = {"<": Lt, "<=": Le, "=": Eq}[kind]
        return fn(draw(sub(s)), draw(sub(s)))
    if kind == "not":
        return Not(draw(sub(BOOL)))
    fn = {"and": And, "or": Or, "=>": Implies}[kind]
    return fn(draw(sub(BOOL)), draw(sub(BOOL)))


envs = st.fixed_dictionaries({
    "i": st.integers(-4, 4), "j": st.integers(-4, 4),
    "p": st.sampled_from([Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(1)]),
    "q": st.sampled_from([Fraction(0), Fraction(1, 3), Fraction(3, 2)]),
    "b": st.booleans()})

any_term = st.sampled_from([INT, PERM, BOOL]).flatmap(term)


@settings(max_examples=300, deadline=None)
@given(any_term)
def test_constructed_terms_recheck(t):
    check_sorts(t)
    check_sorts(simplify(t))


@settings(max_examples=300, deadline=None)
@given(any_term, envs)
def test_simplify_preserves_value_and_sort(t, env):
    s = simplify(t)
    assert s.sort == t.sort
    assert evaluate(s, env) == evaluate(t, env)


@settings(max_examples=300, deadline=None)
@given(any_term, envs, st.integers(-3, 3))
def test_substitution_matches_environment_update(t, env, k):
    i = INT_VARS[0]
    out = substitute(t, {i: IntLit(k)})
    assert i not in out.free_vars()
    assert evaluate(out, env) == evaluate(t, dict(env, i=k))


@settings(max_examples=200, deadline=None)
@given(any_term)
def test_substitution_identity(t):
    assert substitute(t, {v: v for v in INT_VARS}) == t
