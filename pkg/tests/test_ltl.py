from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import holds
from ramkit.dsl import parse_model
from ramkit.ltl import (
    TRUE,
    AtomPhase,
    Always,
    And,
    Const,
    Eventually,
    FormulaSyntaxError,
    Implies,
    Not,
    Once,
    Or,
    TraceVerdict,
    Until,
    WeakUntil,
    active,
    check_structure,
    check_trace,
    constraint_to_formula,
    format_formula,
    globally_precedes,
    inactive,
    model_to_formula,
    parse_formula,
    random_walks,
    requires_weak_until,
)
from ramkit.model import CausalFactor, Constraint, ConstraintKind, EndangermentClass, Phase
from ramkit.riskspace import RiskState, compose_factors

I, A, M, X = Phase.INACTIVE, Phase.ACTIVE, Phase.MITIGATED, Phase.MISHAP
IDS = ("a", "b")


def trace(*phases):
    return [RiskState(IDS, p) for p in phases]


def cf(fid):
    return CausalFactor(fid, EndangermentClass.DISTURBANCE)


def test_always_true_holds():
    assert check_trace(Always(TRUE), trace((I, I), (A, I))) == TraceVerdict(True)


def test_requires_violation_witness():
    run = trace((I, I), (I, I), (A, I), (M, I))
    req = Constraint(ConstraintKind.REQUIRES, "a", "b")
    assert check_trace(constraint_to_formula(req), run) == TraceVerdict(False, 2)
    # The weak-until body already fails at 0: a activates later without b.
    assert check_trace(requires_weak_until(req), run) == TraceVerdict(False, 0)


def test_simultaneous_activation_separates_precedence_from_requires():
    run = trace((I, I), (A, A))
    req = constraint_to_formula(Constraint(ConstraintKind.REQUIRES, "a", "b"))
    assert check_trace(req, run).holds
    assert not check_trace(globally_precedes("b", "a"), run).holds


def test_weak_until_shape_of_requires():
    f = requires_weak_until(Constraint(ConstraintKind.REQUIRES, "nC", "O"))
    assert f == Always(WeakUntil(Not(active("nC")), active("O")))
    with pytest.raises(ValueError):
        requires_weak_until(Constraint(ConstraintKind.CAUSES, "nC", "O"))


def test_weak_until_shape_is_stronger_than_once_shape():
    # b is mitigated while a stays active: the weak-until form fails, the once form holds.
    run = trace((I, I), (I, A), (A, A), (A, M))
    req = Constraint(ConstraintKind.REQUIRES, "a", "b")
    assert check_trace(constraint_to_formula(req), run).holds
    assert check_trace(requires_weak_until(req), run) == TraceVerdict(False, 3)


def test_translations():
    a, b = active("C"), active("nC")
    assert constraint_to_formula(Constraint(ConstraintKind.EXCLUDES, "C", "nC")) == Always(
        Implies(a, Eventually(Until(inactive("nC"), Not(a))))
    )
    assert constraint_to_formula(Constraint(ConstraintKind.CAUSES, "C", "nC")) == Always(
        Implies(a, Eventually(Until(b, Not(a))))
    )
    assert constraint_to_formula(Constraint(ConstraintKind.DENIES, "C", "nC")) == Always(
        Implies(a, Eventually(Until(Not(b), Not(a))))
    )
    assert constraint_to_formula(Constraint(ConstraintKind.REQUIRES, "C", "nC")) == Always(Implies(a, Once(b)))


def test_model_formula_is_conjunction():
    model = parse_model(
        "factor a class d; factor b class d; constraint a requires b; constraint b denies a;"
    )
    c1 = Constraint(ConstraintKind.REQUIRES, "a", "b")
    c2 = Constraint(ConstraintKind.DENIES, "b", "a")
    assert model_to_formula(model) == And(constraint_to_formula(c1), constraint_to_formula(c2))
    assert model_to_formula(parse_model("")) == TRUE


def test_errors():
    with pytest.raises(ValueError):
        check_trace(TRUE, [])
    with pytest.raises(KeyError):
        check_trace(active("zz"), trace((I, I)))
    with pytest.raises(ValueError):
        TraceVerdict(False)


def test_walks_of_length_one():
    rs = compose_factors([cf("a")])
    (verdict,) = check_structure(rs, Always(TRUE), walks=1, max_len=1, seed=5)
    assert verdict.holds
    assert random_walks(rs, 1, 1, 5) == [(rs.zero,)]


def test_walks_are_seeded():
    rs = compose_factors([cf("a"), cf("b")])
    assert random_walks(rs, 20, 10, 3) == random_walks(rs, 20, 10, 3)
    assert random_walks(rs, 20, 10, 3) != random_walks(rs, 20, 10, 4)
    for run in random_walks(rs, 20, 10, 3):
        assert run[0] == rs.zero and len(run) <= 10
        for s, t in zip(run, run[1:]):
            assert any(tr.target == t for tr in rs.outgoing[s])


def test_requires_holds_on_its_structure():
    c = Constraint(ConstraintKind.REQUIRES, "a", "b")
    rs = compose_factors([cf("a"), cf("b")], [c])
    assert all(v.holds for v in check_structure(rs, constraint_to_formula(c), 300, 20, 1))


def test_strong_until_translations_reduce_to_eventual_release():
    # With a strong until inside F, phi U !a is satisfiable exactly when !a eventually holds.
    for kind in (ConstraintKind.CAUSES, ConstraintKind.DENIES, ConstraintKind.EXCLUDES):
        f = constraint_to_formula(Constraint(kind, "a", "b"))
        ending_active = trace((I, I), (A, I))
        assert not check_trace(f, ending_active).holds


# Random formulas and traces ------------------------------------------------------------

atom_st = st.builds(AtomPhase, st.sampled_from(IDS), st.sampled_from(list(Phase)))


def formulas(depth=4):
    return st.recursive(
        st.one_of(atom_st, st.builds(Const, st.booleans())),
        lambda inner: st.one_of(
            st.builds(Not, inner),
            st.builds(And, inner, inner),
            st.builds(Or, inner, inner),
            st.builds(Implies, inner, inner),
            st.builds(Always, inner),
            st.builds(Eventually, inner),
            st.builds(Once, inner),
            st.builds(Until, inner, inner),
            st.builds(WeakUntil, inner, inner),
        ),
        max_leaves=depth * 2,
    )


def depth(f):
    kids = [getattr(f, k) for k in ("body", "left", "right") if hasattr(f, k)]
    return 1 + max((depth(k) for k in kids), default=0)


traces_st = st.lists(st.tuples(st.sampled_from(list(Phase)), st.sampled_from(list(Phase))), min_size=1, max_size=8).map(
    lambda ps: [RiskState(IDS, p) for p in ps]
)


@settings(max_examples=400, deadline=None)
@given(formulas(), traces_st)
def test_agrees_with_brute_force(f, run):
    if depth(f) > 5:
        return
    verdict = check_trace(f, run)
    assert verdict.holds == holds(f, run, 0)
    if isinstance(f, Always) and not verdict.holds:
        assert verdict.witness_index == min(i for i in range(len(run)) if not holds(f.body, run, i))


@settings(max_examples=300, deadline=None)
@given(formulas())
def test_text_round_trip(f):
    assert parse_formula(format_formula(f)) == f


def test_text_syntax():
    f = parse_formula("G (active(nC) -> O active(O)) & F mitigated(F)")
    assert f == And(Always(Implies(active("nC"), Once(active("O")))), Eventually(AtomPhase("F", Phase.MITIGATED)))
    assert parse_formula("!inactive(a) U mishap(b) W true") == Until(
        Not(inactive("a")), WeakUntil(AtomPhase("b", Phase.MISHAP), TRUE)
    )
    for bad in ("G", "active(", "active(a) &", "foo(a)", "(true", "true true"):
        with pytest.raises(FormulaSyntaxError):
            parse_formula(bad)
