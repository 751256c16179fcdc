from __future__ import annotations

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from ramkit.dsl import DSLError, parse_model, parse_process_expr, serialize_model, tokenize
from ramkit.model import (
    CausalFactor,
    CausalFactorModel,
    Constraint,
    ConstraintKind,
    EndangermentClass,
    MitigationClass,
    Situation,
    validate,
)
from ramkit.process import Atom, Choice, Par, Ref, Seq, Star

FIXTURE_NAMES = ["fig4a", "single", "constraints", "aspects", "empty", "recursion"]


def errors_of(text: str) -> list[str]:
    with pytest.raises(DSLError) as info:
        parse_model(text)
    return [d.message for d in info.value.diagnostics]


def test_single_factor_declaration():
    model = parse_model('factor W "badWeather" class d;')
    assert list(model.factors) == ["W"]
    w = model.factors["W"]
    assert w.endangerment is EndangermentClass.DISTURBANCE and w.name == "badWeather"


def test_empty_input():
    model = parse_model("")
    assert model == CausalFactorModel()


def test_duplicate_identifier_points_at_second_declaration():
    with pytest.raises(DSLError) as info:
        parse_model("factor W class d; factor W class f;")
    (d,) = info.value.diagnostics
    assert d.message.startswith("duplicate identifier")
    assert (d.span.line, d.span.column) == (1, 26)


@pytest.mark.parametrize(
    "text, prefix",
    [
        ("factor W class d; $", "lexical error"),
        ("factor W class zz;", "syntax error"),
        ("factor A class d; constraint A requires X;", "unknown reference"),
        ("situation a; process P = (a ; a; root P;", "unbalanced parentheses"),
        ("situation a; process P = P ; a | a; root P;", "invalid model"),
    ],
)
def test_error_prefixes(text, prefix):
    assert errors_of(text)[0].startswith(prefix)


def test_unguarded_recursion_message():
    assert any("unguarded recursion" in m for m in errors_of("situation a; process P = P ; a | a; root P;"))


def test_diagnostic_spans_are_one_based():
    with pytest.raises(DSLError) as info:
        parse_model("\n\n  factor W class d; %")
    span = info.value.diagnostics[0].span
    assert (span.line, span.column) == (3, 21) and span.length >= 1


def test_precedence_sequence_lowest():
    assert parse_process_expr("a ; b | c") == Seq(Atom("a"), Choice(Atom("b"), Atom("c")))


def test_precedence_parallel_highest():
    expected = Seq(Par(Atom("a"), Atom("b")), Atom("c"))
    assert parse_process_expr("a ∥ b ; c") == expected
    assert parse_process_expr("a || b ; c") == expected


def test_star_binds_tightest_and_parens_override():
    assert parse_process_expr("a ; b*") == Seq(Atom("a"), Star(Atom("b")))
    assert parse_process_expr("(a ; b)*") == Star(Seq(Atom("a"), Atom("b")))


def test_p0_expression(fig4a):
    expr = parse_process_expr("start;(basic ∥ supplyPower ∥ D1)", fig4a.situations, fig4a.processes)
    assert expr == Seq(Atom("start"), Par(Par(Atom("basic"), Atom("supplyPower")), Ref("D1")))
    assert fig4a.processes["P0"] == expr


def test_unknown_name_with_known_situations():
    with pytest.raises(DSLError) as info:
        parse_process_expr("a ; zz", situations={"a"})
    assert info.value.diagnostics[0].message.startswith("unknown reference")


def test_crlf_and_comments():
    lf = "# header\nfactor W class d; # trailing\nsituation s factors {W};\n"
    assert parse_model(lf.replace("\n", "\r\n")) == parse_model(lf)


def test_version_header_accepted():
    assert parse_model("version 1;\nfactor W class d;").factors.keys() == {"W"}


def test_vocabulary_is_verbatim():
    for kind in ConstraintKind:
        m = parse_model(f"factor a class d; factor b class d; constraint a {kind.value} b;")
        assert m.global_constraints == {Constraint(kind, "a", "b")}
    m = parse_model("factor a class f direct; factor b class f offRepair;")
    assert m.factors["a"].direct and m.factors["b"].off_repair


def test_phi_is_reserved():
    assert errors_of("situation phi;")[0].startswith("syntax error")


def test_deterministic_diagnostics():
    text = "factor W class d; factor W class q; constraint W causes Z;"
    with pytest.raises(DSLError) as one:
        parse_model(text)
    with pytest.raises(DSLError) as two:
        parse_model(text)
    assert one.value.diagnostics == two.value.diagnostics


def test_tokenize_reports_unterminated_string():
    _, diags = tokenize('factor W "open')
    assert diags and diags[0].message.startswith("lexical error")


def test_serialize_empty_model():
    text = serialize_model(CausalFactorModel())
    assert text.count("\n") == 1 and text.startswith("#")
    assert parse_model(text) == CausalFactorModel()


def test_serialize_single_factor():
    text = serialize_model(parse_model('factor W "badWeather" class d;'))
    assert text.splitlines()[1:] == ['factor W "badWeather" class d;']


def test_serialize_rejects_invalid_model():
    bad = CausalFactorModel(global_constraints=frozenset({Constraint(ConstraintKind.CAUSES, "A", "B")}))
    with pytest.raises(ValueError):
        serialize_model(bad)


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_fixture_round_trip(fixtures_dir, name):
    model = parse_model((fixtures_dir / f"{name}.ram").read_text())
    text = serialize_model(model)
    again = parse_model(text)
    assert again == model
    assert serialize_model(again) == text


# Random valid models -----------------------------------------------------------

IDS = ["A", "B", "C", "nC", "x1"]
SITUATIONS = ["s1", "s2", "s3"]
names = st.one_of(st.none(), st.text(st.characters(blacklist_categories=("Cs", "Cc")), max_size=8))


@st.composite
def factors(draw, fid):
    direct = draw(st.booleans())
    mech = draw(st.sampled_from([None, "Ab", "esc"]))
    return CausalFactor(
        fid,
        draw(st.sampled_from(list(EndangermentClass))),
        name=draw(names),
        mishap=draw(st.booleans()),
        direct=direct,
        off_repair=not direct and draw(st.booleans()),
        re_endanger=draw(st.booleans()),
        mitigation=draw(st.sampled_from([None] + list(MitigationClass))) if mech is None else MitigationClass.PROTECTION,
        mechanism=mech,
    )


def exprs(leaves):
    return st.recursive(
        st.sampled_from(leaves).map(Atom),
        lambda inner: st.one_of(
            st.tuples(inner, inner).map(lambda p: Seq(*p)),
            st.tuples(inner, inner).map(lambda p: Choice(*p)),
            inner.map(Star),
        ),
        max_leaves=5,
    )


@st.composite
def models(draw):
    ids = draw(st.lists(st.sampled_from(IDS), unique=True, max_size=4))
    fs = {fid: draw(factors(fid)) for fid in ids}
    sids = draw(st.lists(st.sampled_from(SITUATIONS), unique=True, min_size=1))
    situations = {}
    for sid in sids:
        own = frozenset(draw(st.lists(st.sampled_from(ids), unique=True))) if ids else frozenset()
        cs = set()
        if len(own) >= 2:
            for _ in range(draw(st.integers(0, 2))):
                l, r = draw(st.permutations(sorted(own)))[:2]
                cs.add(Constraint(draw(st.sampled_from(list(ConstraintKind))), l, r))
        situations[sid] = Situation(sid, factors=own, constraints=frozenset(cs))
    glob = set()
    if len(ids) >= 2:
        for _ in range(draw(st.integers(0, 3))):
            l, r = draw(st.permutations(ids))[:2]
            glob.add(Constraint(draw(st.sampled_from(list(ConstraintKind))), l, r))
    processes, root = {}, None
    if draw(st.booleans()):
        processes["Main"] = draw(exprs(sids))
        root = "Main"
    return CausalFactorModel(fs, situations, processes, root, frozenset(glob))


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(models())
def test_round_trip_random_models(model):
    if validate(model):
        return
    text = serialize_model(model)
    assert parse_model(text) == model
    assert serialize_model(parse_model(text)) == text
