import os
import stat
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CORPUS
from qpv.checker import load
from qpv.engine import Verifier
from qpv.smt import (ScriptSession, SolverConfig, SolverError, SolverSession, emit_preamble,
                     render, symbol)
from qpv.terms import (BOOL, FALSE, INT, ONE, REF, TRUE, ZERO, Add, App, Eq, Forall, Fun,
                       Implies, IntLit, Ite, Lt, Not, PermLit, Sub, Term, Var, domain_sort)


def program(name):
    return load(open(os.path.join(CORPUS, name)).read())


@pytest.fixture
def session():
    with SolverSession(SolverConfig(timeout_ms=5000)) as s:
        s.define_background([], [], [])
        yield s


# ---------------------------------------------------------------------------
# rendering

def test_render_literals_and_operators():
    x = Var("x", INT)
    assert render(IntLit(-3)) == "(- 3)"
    assert render(PermLit(Fraction(1, 2))) == "(/ 1.0 2.0)"
    assert render(PermLit(Fraction(-1, 4))) == "(- (/ 1.0 4.0))"
    assert render(Add(x, IntLit(1))) == "(+ x 1)"
    assert render(Ite(Var("c", BOOL), ONE, ZERO)) == "(ite c 1.0 0.0)"


def test_render_quantifier_with_and_without_patterns():
    i = Var("i", INT)
    g = Fun("g", (INT,), INT)
    q = Forall([i], Lt(IntLit(0), App(g, i)), [[App(g, i)]], "pos")
    assert render(q) == "(forall ((i Int)) (! (< 0 (g i)) :pattern ((g i)) :qid |pos|))"
    assert render(q, triggers=False) == "(forall ((i Int)) (! (< 0 (g i)) :qid |pos|))"


def test_symbols_avoid_reserved_words():
    assert symbol("min") == "u_min"
    assert symbol("fvf@0") == "fvf@0"
    assert symbol("D<Array>") == "D<Array>"
    assert symbol("a b") == "|a b|"


# ---------------------------------------------------------------------------
# session

def test_check_true_is_valid(session):
    assert session.check(TRUE) == "valid"


def test_check_false_is_invalid(session):
    assert session.check(FALSE) == "invalid"


def test_assume_then_check(session):
    x = Var("x", INT)
    session.assume(Lt(IntLit(3), x))
    assert session.check(Lt(IntLit(0), x)) == "valid"
    assert session.check(Lt(IntLit(5), x)) == "invalid"


def test_pop_forgets_assumption(session):
    p = Var("p", BOOL)
    session.push()
    session.assume(p)
    assert session.check(p) == "valid"
    session.pop()
    assert session.check(p) == "invalid"


def test_push_pop_depth(session):
    for _ in range(3):
        session.push()
    assert session.depth == 3
    for _ in range(3):
        session.pop()
    assert session.depth == 0


def test_pop_at_depth_zero(session):
    with pytest.raises(SolverError):
        session.pop()


def test_is_sat_detects_inconsistency(session):
    x = Var("x", INT)
    session.push()
    session.assume(Lt(x, IntLit(0)))
    assert session.is_sat()
    session.assume(Lt(IntLit(0), x))
    assert not session.is_sat()
    session.pop()


def test_illegal_pattern_refused(session):
    i = Var("i", INT)
    q = Forall([i], Lt(IntLit(0), Add(i, IntLit(1))), [[Add(i, IntLit(1))]])
    with pytest.raises(SolverError):
        session.assume(q)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(-3, 3)), max_size=6))
def test_balanced_scopes_restore_entailment(ops):
    x = Var("x", INT)
    with SolverSession(SolverConfig()) as s:
        s.define_background([], [], [])
        s.assume(Lt(IntLit(10), x))
        goal = Lt(IntLit(0), x)
        weaker = Lt(IntLit(20), x)
        for push, k in ops:
            s.push()
            s.assume(Lt(IntLit(k), x) if push else Not(Lt(IntLit(k), x)))
            s.pop()
        assert s.depth == 0
        assert s.check(goal) == "valid"
        assert s.check(weaker) == "invalid"


def test_missing_solver_binary():
    with pytest.raises(SolverError):
        SolverSession(SolverConfig(path="/nonexistent/solver"))


def test_crash_is_a_solver_error_and_dumps_the_query(tmp_path):
    fake = tmp_path / "crashing-solver"
    fake.write_text("#!/bin/sh\nwhile read l; do case \"$l\" in *check-sat*) exit 3;; esac; done\n")
    fake.chmod(fake.stat().st_mode | stat.S_IEXEC)
    dumps = tmp_path / "dumps"
    s = SolverSession(SolverConfig(path=str(fake), dump_dir=str(dumps)))
    s.define_background([], [], [])
    with pytest.raises(SolverError):
        s.check(Lt(IntLit(0), Var("x", INT)), "probe")
    s.close()
    (only,) = os.listdir(dumps)
    assert "(assert (not (< 0 x)))" in (dumps / only).read_text()


def test_dump_is_replayable(tmp_path):
    import subprocess
    cfg = SolverConfig(dump_dir=str(tmp_path))
    with SolverSession(cfg) as s:
        s.define_background([], [], [])
        x = Var("x", INT)
        s.push()
        s.assume(Lt(IntLit(0), x))
        assert s.check(Lt(IntLit(5), x), "probe") == "invalid"
        s.pop()
        (path,) = s.stats.dumps
    out = subprocess.run(["z3", path], capture_output=True, text=True).stdout.split()
    assert out == ["sat"]


# ---------------------------------------------------------------------------
# background theory

def test_preamble_for_client_has_partial_value_maps():
    text = emit_preamble(program("client.vpr"))
    assert "(declare-sort Snap 0)" in text
    assert "(declare-fun domain<val> (PVM<val>) Set<Ref>)" in text
    assert "(declare-fun apply<val> (PVM<val> Ref) Int)" in text
    ext = [l for l in text.splitlines() if l.endswith("; pvm_ext<val>")]
    assert len(ext) == 1
    assert ":pattern ((toSnap<PVM<val>> p1) (toSnap<PVM<val>> p2))" in ext[0]


def test_preamble_without_heap_functions_has_no_value_map_machinery():
    text = emit_preamble(program("replace.vpr"))
    assert "PVM" not in text and "domain<" not in text and "apply<" not in text


def test_preamble_declares_domain_and_axiom():
    text = emit_preamble(program("replace.vpr"))
    for decl in ("(declare-fun loc (D<Array> Int) Ref)", "(declare-fun len (D<Array>) Int)",
                 "(declare-fun first (Ref) D<Array>)", "(declare-fun second (Ref) Int)"):
        assert decl in text
    assert ":qid |all_diff|" in text


def test_preamble_is_replayable():
    import subprocess
    opts = "(set-option :auto-config false)\n(set-option :smt.mbqi false)\n"
    for name in ("replace.vpr", "client.vpr", "graph_marking.vpr", "graph_predicate.vpr"):
        text = opts + emit_preamble(program(name)) + "(check-sat)\n"
        out = subprocess.run(["z3", "-in", "-smt2", "-T:20"], input=text, capture_output=True,
                             text=True).stdout.split()
        # parses cleanly and is not refuted; without model search the answer is unknown
        assert out in (["sat"], ["unknown"]), (name, out)


def test_background_is_deterministic():
    prog = program("client.vpr")
    a = Verifier(prog).background(ScriptSession(SolverConfig())).transcript
    b = Verifier(prog).background(ScriptSession(SolverConfig())).transcript
    assert a == b


def test_receiver_injectivity_from_all_diff():
    prog = program("replace.vpr")
    s = Verifier(prog).background(SolverSession(SolverConfig()))
    try:
        arr = domain_sort("Array")
        loc = Fun("loc", (arr, INT), REF)
        a, x1, x2 = Var("a@9", arr), Var("x1", INT), Var("x2", INT)
        inj = Forall([x1, x2], Implies(Eq(App(loc, a, x1), App(loc, a, x2)), Eq(x1, x2)))
        assert s.check(inj) == "valid"
        # without the domain axiom loc is an arbitrary function
        bare = SolverSession(SolverConfig())
        bare.define_background([arr], [loc], [])
        assert bare.check(inj) == "invalid"
        bare.close()
    finally:
        s.close()


def test_drained_permission_check():
    # ten slots, all permission removed: needed(r) is 0 everywhere
    r = Var("r", REF)
    arr = domain_sort("Array")
    loc, inv = Fun("loc", (arr, INT), REF), Fun("inv@0", (REF,), INT)
    a = Var("a@0", arr)
    in_range = Term("and", (Term("<=", (IntLit(0), App(inv, r)), BOOL),
                            Lt(App(inv, r), IntLit(10))), BOOL)
    q = Ite(in_range, ONE, ZERO)
    held = Ite(in_range, ONE, ZERO)
    needed = Sub(q, held)
    with SolverSession(SolverConfig()) as s:
        s.define_background([arr], [loc], [])
        assert s.check(Forall([r], Eq(needed, ZERO), [[App(inv, r)]])) == "valid"
        assert s.check(Forall([r], Eq(Sub(q, ZERO), ZERO), [[App(inv, r)]])) == "invalid"
