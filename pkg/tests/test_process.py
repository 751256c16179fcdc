from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bounded_traces, traces_to_graph
from ramkit.dsl import DSLError, parse_model
from ramkit.model import CausalFactorModel, Phase, Situation, SituationKind
from ramkit.process import (
    Atom,
    Choice,
    Par,
    ProcessError,
    Ref,
    Seq,
    Star,
    jump_targets,
    sample_initial_state,
    sample_scenario,
    successor_graph,
    translate_state,
)
from ramkit.riskspace import RiskState, compose_situation, stats

LEAVES = ["a", "b", "c", "d"]


def plain_model(expr, extra=()) -> CausalFactorModel:
    situations = {s: Situation(s) for s in LEAVES}
    for sid, kind in extra:
        situations[sid] = Situation(sid, kind)
    return CausalFactorModel(situations=situations, processes={"P": expr}, root="P")


def graph_of(text: str):
    decls = " ".join(f"situation {s};" for s in LEAVES)
    g = successor_graph(parse_model(f"{decls} process P = {text}; root P;"))
    return g.nodes, g.edges


def test_sequence():
    assert graph_of("a;b") == ({"a", "b"}, {("a", "b")})


def test_repetition_self_loop():
    assert graph_of("a*") == ({"a"}, {("a", "a")})


def test_fig4a_edges(fig4a):
    g = successor_graph(fig4a)
    assert ("halt", "parkWithRemote") in g.edges
    assert {("driveAtL4Generic", "autoOvertake"), ("autoOvertake", "driveAtL4Generic")} <= g.edges
    assert g.initial == {"start"}
    assert not any(fig4a.situations[s].is_aspect for s in g.nodes)


def test_rewrite_invariance():
    assert graph_of("a;(b|c)") == graph_of("(a;b)|(a;c)")


def test_star_is_optional():
    # a ; b* ; c also runs a directly into c.
    nodes, edges = graph_of("a ; b* ; c")
    assert edges == {("a", "b"), ("b", "b"), ("b", "c"), ("a", "c")}


@pytest.mark.parametrize("name", ["fig4a", "recursion", "aspects", "single", "constraints"])
def test_fixture_graph_matches_trace_enumeration(fixtures_dir, name):
    from ramkit.dsl import load_model

    model = load_model(fixtures_dir / f"{name}.ram")
    nodes, edges, initial = traces_to_graph(bounded_traces(model, Ref(model.root), 7))
    g = successor_graph(model)
    assert (g.nodes, g.edges, g.initial) == (nodes, edges, initial)


def exprs():
    return st.recursive(
        st.sampled_from(LEAVES[:3]).map(Atom),
        lambda inner: st.one_of(
            st.tuples(inner, inner).map(lambda p: Seq(*p)),
            st.tuples(inner, inner).map(lambda p: Choice(*p)),
            inner.map(Star),
            inner.map(lambda e: Par(Atom("asp"), e)),
        ),
        max_leaves=4,
    )


@settings(max_examples=200, deadline=None)
@given(exprs())
def test_graph_matches_trace_enumeration(expr):
    model = plain_model(expr, [("asp", SituationKind.ASPECT)])
    nodes, edges, initial = traces_to_graph(bounded_traces(model, Ref("P"), 7))
    g = successor_graph(model)
    assert (g.nodes, g.edges, g.initial) == (nodes, edges, initial)


def test_unguarded_recursion_rejected():
    with pytest.raises(DSLError) as info:
        parse_model("situation a; process P = P ; a | a; root P;")
    assert "unguarded recursion" in str(info.value)
    model = CausalFactorModel(situations={"a": Situation("a")}, processes={"P": Seq(Ref("P"), Atom("a"))}, root="P")
    with pytest.raises(ProcessError):
        successor_graph(model)


def test_guarded_recursion_accepted():
    g = successor_graph(parse_model("situation a; situation b; process P = a ; P | b; root P;"))
    assert g.edges == {("a", "a"), ("a", "b")}


# Jumps ------------------------------------------------------------------------------


def two_situations():
    return parse_model(
        "factor X class d; factor Y class d; factor Z class f;"
        " situation s factors {X, Y}; situation t factors {Y, Z};"
        " process P = s ; t; root P;"
    )


def test_jump_from_zero_with_disjoint_factors():
    model = parse_model("factor X class d; factor Z class f; situation s factors {X}; situation t factors {Z}; process P = s ; t; root P;")
    ((target, state),) = jump_targets(model, "s", RiskState.zero(("X",)))
    assert target == "t" and state == RiskState.zero(("Z",))


def test_jump_carries_shared_and_drops_missing():
    model = two_situations()
    s = RiskState(("X", "Y"), (Phase.ACTIVE, Phase.MITIGATED))
    ((target, state),) = jump_targets(model, "s", s)
    assert target == "t"
    assert state == RiskState(("Y", "Z"), (Phase.MITIGATED, Phase.INACTIVE))


def test_jump_keeps_fuel_hazard_into_halt(fig4a):
    rs = compose_situation(fig4a, "autoOvertake")
    state = rs.state("F,E")
    assert state in rs
    jumps = dict(jump_targets(fig4a, "autoOvertake", state))
    assert set(jumps) == set(successor_graph(fig4a).successors("autoOvertake"))
    halt = translate_state(fig4a, state, "halt")
    assert halt["F"] is Phase.ACTIVE and halt["E"] is Phase.ACTIVE


def test_jump_rejects_foreign_state():
    with pytest.raises(ValueError):
        jump_targets(two_situations(), "s", RiskState.zero(("Z",)))


def test_translate_adds_no_active_phases(fig4a):
    rng = random.Random(3)
    for _ in range(50):
        sid = rng.choice(sorted(successor_graph(fig4a).nodes))
        state = sample_initial_state(fig4a, sid, rng)
        for target, moved in jump_targets(fig4a, sid, state):
            shared = set(state.factors) & set(moved.factors)
            assert all(moved[f] is state[f] for f in shared)
            assert set(moved.in_phase(Phase.ACTIVE)) <= set(state.in_phase(Phase.ACTIVE))


# Scenarios ---------------------------------------------------------------------------


def test_single_step_without_factors():
    model = parse_model("situation a; process P = a; root P;")
    (row,) = sample_scenario(model, "a", 1, seed=0).rows
    assert (row.cf_count, row.state_count, row.transition_count) == (0, 1, 0)


def test_scenario_is_deterministic(fig4a):
    assert sample_scenario(fig4a, "start", 5, seed=7) == sample_scenario(fig4a, "start", 5, seed=7)


def test_scenario_rows_follow_graph_and_stats(fig4a):
    g = successor_graph(fig4a)
    for seed in range(6):
        sc = sample_scenario(fig4a, "start", 5, seed)
        assert [r.step for r in sc.rows] == list(range(1, len(sc.rows) + 1)) and len(sc.rows) == 5
        assert sc.rows[0].situation == "start"
        for prev, nxt in zip(sc.rows, sc.rows[1:]):
            assert (prev.situation, nxt.situation) in g.edges
        for r in sc.rows[:3]:
            assert r.cf_count == len(r.initial_state.factors)
            st_ = stats(compose_situation(fig4a, r.situation, initial=r.initial_state))
            assert (r.state_count, r.transition_count) == (st_.state_count, st_.transition_count)


def test_scenario_stops_without_successors():
    model = parse_model("situation a; situation b; process P = a ; b; root P;")
    assert [r.situation for r in sample_scenario(model, "a", 5, seed=1).rows] == ["a", "b"]


def test_scenario_errors(fig4a):
    with pytest.raises(ValueError):
        sample_scenario(fig4a, "start", 0, seed=1)
    with pytest.raises(KeyError):
        sample_scenario(fig4a, "drive", 1, seed=1)


def test_sampled_states_exist_in_structure(fixtures_dir):
    from ramkit.dsl import load_model

    model = load_model(fixtures_dir / "constraints.ram")
    rng = random.Random(11)
    for sid in ("lab", "field"):
        rs = compose_situation(model, sid)
        for _ in range(40):
            assert sample_initial_state(model, sid, rng) in rs
