import os
import re
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CORPUS
from qpv import ast
from qpv.checker import load
from qpv.engine import Options, Verifier
from qpv.smt import SolverConfig, SolverSession
from qpv.state import R, Heap, QuantifiedChunk, SymbolicState
from qpv.terms import (INT, ONE, REF, TRUE, ZERO, Add, And, App, Eq, Fun, IntLit, Ite, Le, Lt,
                       PermLit, Var, simplify, substitute)

ARRAY = """
field val: Int

domain Array {
  function loc(a: Array, i: Int): Ref
  function len(a: Array): Int
  function first(r: Ref): Array
  function second(r: Ref): Int

  axiom all_diff {
    forall a: Array, i: Int :: {loc(a, i)} first(loc(a, i)) == a && second(loc(a, i)) == i
  }
}
"""


def verify(src, method, **opts):
    return Verifier(load(src), options=Options(**opts)).verify_method(method)


def fails_with(src, method, kind, line=None):
    out = verify(src, method)
    assert out.error is not None, "expected %s" % kind
    assert out.error.kind == kind, out.error
    if line is not None:
        assert out.error.pos.line == line, out.error
    return out.error


def line_of(src, text):
    (n,) = [k + 1 for k, l in enumerate(src.splitlines()) if text in l]
    return n


def explore(src, name):
    """Run a method body with a live session and return (verifier, final states)."""
    v = Verifier(load(src))
    v.background(SolverSession(SolverConfig()))
    m = v.prog.find_method(name)
    store = {p.name: v.pool.fresh(p.name, v.sig.sort(p.typ)) for p in m.params + m.returns}
    s = SymbolicState(v._heap(), store, {})
    v.produce(s, m.pre_norm, TRUE, None)
    s.olds["old"] = s.heap
    finals = []
    v.exec_block(m.body, 0, s, finals.append)
    return v, finals


@pytest.fixture
def closing():
    opened = []
    yield opened.append
    for v in opened:
        v.solver.close()


# ---------------------------------------------------------------------------
# inhale and exhale of quantified permissions

def test_inhale_range_gives_one_chunk_with_inverse_axioms(closing):
    src = ARRAY + """
method m(a: Array, l: Int, r: Int)
{
  inhale forall i: Int :: l <= i && i < r ==> acc(loc(a, i).val)
}
"""
    v, (s,) = explore(src, "m")
    closing(v)
    (ch,) = s.heap.chunks
    assert isinstance(ch, QuantifiedChunk) and ch.field == "val"
    assert "inv@0(r)" in str(ch.perm)
    (inv1,) = [c for c in v.solver.transcript if ":qid |inv1|" in c]
    (inv2,) = [c for c in v.solver.transcript if ":qid |inv2|" in c]
    assert ":pattern ((inv@0 r))" in inv1
    assert re.search(r":pattern \(\(loc a@\d+ i\)\)", inv2)


def test_false_condition_chunk_is_empty(closing):
    src = ARRAY + """
method m(a: Array)
{
  inhale forall i: Int :: false ==> acc(loc(a, i).val)
}
"""
    v, (s,) = explore(src, "m")
    closing(v)
    assert all(str(c.perm) == "0" for c in s.heap.chunks)


def test_identity_receiver_uses_value_map_trigger(closing):
    src = """
field left: Ref
method m(nodes: Set[Ref])
{
  inhale forall n: Ref :: n in nodes ==> acc(n.left)
}
"""
    v, (s,) = explore(src, "m")
    closing(v)
    (ch,) = s.heap.chunks
    inv2 = [c for c in v.solver.transcript if ":qid |inv2|" in c]
    assert len(inv2) == 1 and ":pattern ((%s n))" % ch.fvf.name in inv2[0]


def test_exhale_part_of_a_range_keeps_the_rest():
    src = ARRAY + """
method m(a: Array, l: Int, mid: Int, r: Int)
  requires l <= mid && mid < r
  requires forall i: Int :: l <= i && i < r ==> acc(loc(a, i).val)
{
  exhale forall i: Int :: l <= i && i < mid ==> acc(loc(a, i).val)
  var x: Int := loc(a, mid).val
  x := loc(a, r - 1).val
}
"""
    assert verify(src, "m").verified
    bad = src.replace("x := loc(a, r - 1).val", "x := loc(a, l).val")
    fails_with(bad, "m", "insufficient.permission", line_of(bad, "x := loc(a, l).val"))


def test_exhale_more_than_held_fails():
    src = ARRAY + """
method m(a: Array, l: Int, r: Int)
  requires forall i: Int :: l <= i && i < r ==> acc(loc(a, i).val, 1/2)
{
  exhale forall i: Int :: l <= i && i < r ==> acc(loc(a, i).val)
}
"""
    fails_with(src, "m", "insufficient.permission", line_of(src, "exhale"))


def test_non_injective_receiver_rejected():
    # i \ 2 maps 0 and 1 to the same slot
    assert 0 // 2 == 1 // 2
    src = ARRAY + """
method m(a: Array)
  requires forall i: Int :: 0 <= i && i < 4 ==> acc(loc(a, i).val)
{
  exhale forall i: Int :: 0 <= i && i < 4 ==> acc(loc(a, i \\ 2).val, 1/4)
}
"""
    fails_with(src, "m", "receiver.not.injective", line_of(src, "exhale"))


def test_strict_mode_checks_injectivity_on_inhale():
    src = ARRAY + """
method m(a: Array)
{
  inhale forall i: Int :: 0 <= i && i < 4 ==> acc(loc(a, i \\ 2).val, 1/4)
}
"""
    assert verify(src, "m").verified
    out = verify(src, "m", strict_inhale_injectivity=True)
    assert out.error.kind == "receiver.not.injective"


def test_negative_amount_rejected_on_exhale():
    src = ARRAY + """
method m(a: Array, p: Perm)
  requires p < none
{
  exhale forall i: Int :: 0 <= i && i < 4 ==> acc(loc(a, i).val, p)
}

method n(a: Array, p: Perm)
  requires p < none
{
  inhale forall i: Int :: 0 <= i && i < 4 ==> acc(loc(a, i).val, p)
}
"""
    fails_with(src, "m", "negative.permission", line_of(src, "exhale"))
    # inhale assumes the amount is non-negative instead of checking it
    assert verify(src, "n").verified


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 3), st.integers(0, 4), st.sampled_from(["write", "1/2", "1/3"]))
def test_inhale_exhale_roundtrip(lo, width, perm):
    hi = lo + width
    isc = "forall i: Int :: %d <= i && i < %d ==> acc(loc(a, i).val, %s)" % (lo, hi, perm)
    src = ARRAY + """
method once(a: Array)
{
  inhale %s
  exhale %s
}

method twice(a: Array)
{
  inhale %s
  exhale %s
  exhale %s
}
""" % (isc, isc, isc, isc, isc)
    assert verify(src, "once").verified
    twice = verify(src, "twice")
    if width == 0:
        assert twice.verified           # the empty range needs nothing
    else:
        assert twice.error.kind == "insufficient.permission"


# ---------------------------------------------------------------------------
# remove_permissions and summarise against a concrete ledger

IDX = Fun("idx", (REF,), INT)


def band(lo, hi, p):
    """Permission p on every receiver whose index is in [lo, hi)."""
    i = App(IDX, R)
    return Ite(And(Le(IntLit(lo), i), Lt(i, IntLit(hi))), PermLit(p), ZERO)


def fresh_verifier(**opts):
    v = Verifier(load("field val: Int\n"), options=Options(**opts))
    v.background(SolverSession(SolverConfig()))
    return v


def slots(v, n):
    """Distinct receivers with indices 0..n-1."""
    out = []
    for k in range(n):
        x = Var("x%d" % k, REF)
        v.assume(Eq(App(IDX, x), IntLit(k)))
        out.append(x)
    return out


LEDGER_VALUES = sorted({Fraction(a, b) for b in (1, 2, 3, 4) for a in range(0, 3 * b + 1)})


def perm_at(v, heap, x):
    """The exact permission the heap holds at x, as decided by the solver."""
    total = ZERO
    for c in heap.field_chunks("val"):
        total = Add(total, substitute(c.perm, {R: x}))
    for cand in LEDGER_VALUES:
        if v.solver.check(Eq(total, PermLit(cand))) == "valid":
            return cand
    return None


def test_remove_zero_leaves_heap_unchanged():
    v = fresh_verifier()
    try:
        f = v.pool.fresh_fun("fvf", [REF], INT)
        h = Heap((QuantifiedChunk("val", f, band(0, 10, 1)),))
        assert v.remove_permissions(h, "val", ZERO, ast.NOPOS, "t") == h
    finally:
        v.solver.close()


def test_remove_half_of_a_ten_slot_range():
    v = fresh_verifier()
    try:
        xs = slots(v, 10)
        f = v.pool.fresh_fun("fvf", [REF], INT)
        h = Heap((QuantifiedChunk("val", f, band(0, 10, 1)),))
        h2 = v.remove_permissions(h, "val", band(0, 5, 1), ast.NOPOS, "t")
        assert perm_at(v, h2, xs[7]) == 1
        assert perm_at(v, h2, xs[3]) == 0
    finally:
        v.solver.close()


def test_two_halves_make_one():
    v = fresh_verifier()
    try:
        (x,) = slots(v, 1)
        f1, f2 = v.pool.fresh_fun("fvf", [REF], INT), v.pool.fresh_fun("fvf", [REF], INT)
        h = Heap((QuantifiedChunk("val", f1, band(0, 1, Fraction(1, 2))),
                  QuantifiedChunk("val", f2, band(0, 1, Fraction(1, 2)))))
        h2 = v.remove_permissions(h, "val", band(0, 1, 1), ast.NOPOS, "t")
        assert perm_at(v, h2, x) == 0
        with pytest.raises(Exception) as ei:
            v.remove_permissions(h2, "val", band(0, 1, 1), ast.NOPOS, "t")
        assert ei.value.kind == "insufficient.permission"
    finally:
        v.solver.close()


AMOUNTS = st.sampled_from([Fraction(1, 4), Fraction(1, 2), Fraction(1)])
BANDS = st.tuples(st.integers(0, 4), st.integers(0, 4), AMOUNTS).map(
    lambda t: (min(t[0], t[1]), max(t[0], t[1]), t[2]))


@settings(max_examples=30, deadline=None)
@given(st.lists(BANDS, min_size=1, max_size=3), BANDS)
def test_remove_matches_rational_ledger(held, want):
    n = 5
    ledger = [sum((p for lo, hi, p in held if lo <= k < hi), Fraction(0)) for k in range(n)]
    request = [want[2] if want[0] <= k < want[1] else Fraction(0) for k in range(n)]
    enough = all(r <= h for r, h in zip(request, ledger))
    v = fresh_verifier(debug_invariants=True)
    try:
        xs = slots(v, n)
        chunks = tuple(QuantifiedChunk("val", v.pool.fresh_fun("fvf", [REF], INT), band(*b))
                       for b in held)
        try:
            h2 = v.remove_permissions(Heap(chunks), "val", band(*want), ast.NOPOS, "t")
        except Exception as e:
            assert e.kind == "insufficient.permission" and not enough
            return
        assert enough
        for k in range(n):
            assert perm_at(v, h2, xs[k]) == ledger[k] - request[k]
    finally:
        v.solver.close()


def test_summarise_shapes():
    v = fresh_verifier()
    try:
        fvf, perm = v.summarise(Heap(), "val")
        assert perm == ZERO and v.pc.flatten() == TRUE
        f1 = v.pool.fresh_fun("fvf", [REF], INT)
        one = Heap((QuantifiedChunk("val", f1, band(0, 3, 1)),))
        _, perm1 = v.summarise(one, "val")
        assert simplify(perm1) == band(0, 3, 1)
        assert v.summarise_queries == 0
    finally:
        v.solver.close()


def test_summary_over_two_halves_agrees_with_both():
    v = fresh_verifier()
    try:
        (x,) = slots(v, 1)
        f1, f2 = v.pool.fresh_fun("fvf", [REF], INT), v.pool.fresh_fun("fvf", [REF], INT)
        h = Heap((QuantifiedChunk("val", f1, band(0, 1, Fraction(1, 2))),
                  QuantifiedChunk("val", f2, band(0, 1, Fraction(1, 2)))))
        sm, perm = v.summarise(h, "val")
        assert v.solver.check(Eq(substitute(perm, {R: x}), ONE)) == "valid"
        assert v.solver.check(Eq(App(f1, x), App(f2, x))) == "valid"
        assert v.solver.check(Eq(App(sm, x), App(f1, x))) == "valid"
        assert v.summarise_queries == 0
    finally:
        v.solver.close()


def test_summaries_are_memoised():
    v = fresh_verifier()
    try:
        f1 = v.pool.fresh_fun("fvf", [REF], INT)
        h = Heap((QuantifiedChunk("val", f1, band(0, 3, 1)),))
        assert v.summarise(h, "val") == v.summarise(h, "val")
    finally:
        v.solver.close()


# ---------------------------------------------------------------------------
# evaluation

READS = ARRAY + """
method m(a: Array)
  requires forall i: Int :: 0 <= i && i < 10 ==> acc(loc(a, i).val)
{
  var x: Int := loc(a, 3).val
  assert forall i: Int :: 0 <= i && i < 10 ==> loc(a, i).val == loc(a, i).val
}

method zero(a: Array)
  requires forall i: Int :: 0 <= i && i < 10 ==> acc(loc(a, i).val)
{
  var x: Int := loc(a, 10).val
}
"""


def test_read_inside_range():
    assert verify(READS, "m").verified


def test_read_without_permission():
    fails_with(READS, "zero", "insufficient.permission", line_of(READS, "loc(a, 10).val"))


def test_pure_quantifier_over_heap():
    src = ARRAY + """
method m(a: Array, n: Int)
  requires forall i: Int :: 0 <= i && i < n ==> acc(loc(a, i).val)
  requires forall i: Int :: 0 <= i && i < n ==> loc(a, i).val >= 0
  ensures forall i: Int :: 0 <= i && i < n ==> acc(loc(a, i).val)
  ensures forall i: Int :: 0 <= i && i < n ==> loc(a, i).val >= 0
{
  if (0 < n) {
    loc(a, 0).val := loc(a, 0).val + 1
  }
}
"""
    assert verify(src, "m").verified
    bad = src.replace("+ 1", "- 1")
    fails_with(bad, "m", "assertion.false")


def test_implication_guards_reads():
    src = ARRAY + """
method m(a: Array, b: Bool)
  requires b ==> acc(loc(a, 0).val)
{
  assert b ==> loc(a, 0).val == loc(a, 0).val
}
"""
    assert verify(src, "m").verified
    bad = src.replace("assert b ==>", "assert true ==>")
    fails_with(bad, "m", "insufficient.permission")


def test_pure_inhale_and_exhale():
    src = """
method m(x: Int)
{
  inhale x > 0
  exhale x > 0
}
method n(x: Int)
{
  exhale false
}
"""
    assert verify(src, "m").verified
    fails_with(src, "n", "assertion.false", line_of(src, "exhale false"))


def test_old_refers_to_the_prestate():
    src = ARRAY + """
method m(a: Array)
  requires acc(loc(a, 0).val)
  ensures acc(loc(a, 0).val) && loc(a, 0).val == old(loc(a, 0).val) + 1
{
  loc(a, 0).val := loc(a, 0).val + 1
}
"""
    assert verify(src, "m").verified
    fails_with(src.replace("+ 1\n}", "+ 2\n}"), "m", "assertion.false")


# ---------------------------------------------------------------------------
# field writes

WRITES = ARRAY + """
method split(a: Array, l: Int, r: Int, v: Int)
  requires l < r
  requires forall i: Int :: l <= i && i < r ==> acc(loc(a, i).val)
{
  loc(a, l).val := v
  assert loc(a, l).val == v
}

method half(a: Array)
  requires acc(loc(a, 0).val, 1/2)
{
  loc(a, 0).val := 1
}
"""


def test_write_splits_chunk_and_reads_back(closing):
    assert verify(WRITES, "split").verified
    v, (s,) = explore(WRITES, "split")
    closing(v)
    assert len(s.heap.field_chunks("val")) == 2


def test_write_needs_full_permission():
    fails_with(WRITES, "half", "insufficient.permission", line_of(WRITES, "loc(a, 0).val := 1"))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 5), st.integers(0, 5))
def test_framing_of_untouched_locations(k, j):
    src = ARRAY + """
method m(a: Array)
  requires forall i: Int :: 0 <= i && i < 6 ==> acc(loc(a, i).val)
{
  loc(a, %d).val := 7
  assert loc(a, %d).val == old(loc(a, %d).val)
}
""" % (k, j, j)
    out = verify(src, "m")
    # only the written slot may change
    assert out.verified == (k != j)


# ---------------------------------------------------------------------------
# control flow

def test_unreachable_branch_is_pruned():
    src = """
field f: Int
method m(x: Ref, n: Int)
  requires n > 0
{
  if (n < 0) {
    x.f := 1
    assert false
  }
}
"""
    out = verify(src, "m")
    assert out.verified


def test_both_branches_checked():
    src = """
method m(n: Int)
{
  if (n < 0) {
    assert n < 0
  } else {
    assert n < 0
  }
}
"""
    fails_with(src, "m", "assertion.false", 7)


def test_while_loop_is_modular():
    src = ARRAY + """
method m(a: Array, n: Int)
  requires 0 <= n
  requires forall i: Int :: 0 <= i && i < n ==> acc(loc(a, i).val)
  ensures forall i: Int :: 0 <= i && i < n ==> acc(loc(a, i).val)
{
  var k: Int := 0
  while (k < n)
    invariant 0 <= k && k <= n
    invariant forall i: Int :: 0 <= i && i < n ==> acc(loc(a, i).val)
  {
    loc(a, k).val := 0
    k := k + 1
  }
  assert k == n
}
"""
    assert verify(src, "m").verified
    fails_with(src.replace("k <= n\n", "k <= n + 1\n"), "m", "assertion.false")


def test_empty_method():
    assert verify("method m() requires true ensures true {}", "m").verified


# ---------------------------------------------------------------------------
# heap-dependent functions

FUNCS = ARRAY + """
function sum2(a: Array): Int
  requires forall i: Int :: 0 <= i && i < 2 ==> acc(loc(a, i).val)
{ loc(a, 0).val + loc(a, 1).val }

function twice(n: Int): Int { n + n }

method framed(a: Array)
  requires forall i: Int :: 0 <= i && i < 3 ==> acc(loc(a, i).val)
{
  var s: Int := sum2(a)
  loc(a, 2).val := 5
  assert s == sum2(a)
  assert twice(3) == 6
}

method changed(a: Array)
  requires forall i: Int :: 0 <= i && i < 3 ==> acc(loc(a, i).val)
{
  var s: Int := sum2(a)
  loc(a, 1).val := loc(a, 1).val + 1
  assert s == sum2(a)
}

method missing(a: Array)
  requires acc(loc(a, 0).val)
{
  var s: Int := sum2(a)
}
"""


def test_function_framed_across_unrelated_write():
    assert verify(FUNCS, "framed").verified


def test_function_value_changes_with_its_footprint():
    fails_with(FUNCS, "changed", "assertion.false")


def test_function_precondition_needs_permissions():
    err = fails_with(FUNCS, "missing", "application.precondition")
    assert FUNCS.splitlines()[err.pos.line - 1].strip() == "var s: Int := sum2(a)"


def test_contains_framed_across_replace():
    assert verify(open(os.path.join(CORPUS, "client.vpr")).read(), "Client").verified


# ---------------------------------------------------------------------------
# predicates

GRAPH = open(os.path.join(CORPUS, "graph_predicate.vpr")).read()


def test_fold_unfold_roundtrip():
    assert verify(GRAPH, "roundtrip").verified


def test_unfold_without_instance():
    src = GRAPH + """
method u(nodes: Set[Ref])
{
  unfold Graph(nodes)
}
"""
    fails_with(src, "u", "insufficient.permission", len(src.splitlines()) - 1)


def test_fold_with_a_missing_node_permission():
    src = GRAPH + """
method f(nodes: Set[Ref], x: Ref)
  requires x in nodes
  requires forall n: Ref :: n in nodes && n != x ==> acc(n.left)
  requires forall n: Ref :: n in nodes ==> acc(n.right)
  requires forall n: Ref :: n in nodes && n != x && n.left != null ==> n.left in nodes
  requires forall n: Ref :: n in nodes && n.right != null ==> n.right in nodes
{
  fold Graph(nodes)
}
"""
    fails_with(src, "f", "insufficient.permission")


# ---------------------------------------------------------------------------
# corpus in debug mode

@pytest.mark.parametrize("name", ["replace.vpr", "client.vpr", "graph_marking.vpr",
                                  "graph_predicate.vpr"])
def test_corpus_holds_internal_invariants(name):
    v = Verifier(load(open(os.path.join(CORPUS, name)).read()),
                 options=Options(debug_invariants=True))
    for out in v.verify_all():
        assert out.verified, out.error


def test_verdicts_do_not_depend_on_chunk_order():
    import glob
    files = sorted(glob.glob(os.path.join(CORPUS, "*.vpr")) +
                   glob.glob(os.path.join(CORPUS, "seeded", "*.vpr")))

    def verdicts(reverse):
        out = []
        for f in files:
            v = Verifier(load(open(f).read()), options=Options(reverse_heap=reverse))
            out += [(f, o.method, o.error and (o.error.kind, str(o.error.pos)))
                    for o in v.verify_all()]
        return out
    assert verdicts(False) == verdicts(True)
