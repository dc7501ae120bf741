import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from builders import make_spec, specs
from imds.errors import ParseError, RenderError, SpecError
from imds.models import read
from imds.notation import load, parse, render, tokenize

SEM = read("semaphores.imds")

TINY = """
server: s (agents A),
services {go},
states {a, b},
actions {A.s.go, s.a} -> {s.b},
end;
agents: A;
servers: s;
init -> {A.s.go, s(A).a}.
"""


def test_tokenize_positions():
    toks = tokenize("server: s // note\n  -> ..")
    kinds = [(t.kind, t.text, t.line, t.column) for t in toks]
    assert kinds[0] == ("ident", "server", 1, 1)
    assert ("->", "->", 2, 3) in kinds
    assert kinds[-1][0] == "eof"


def test_tokenize_rejects_stray_character():
    with pytest.raises(ParseError) as e:
        tokenize("server: s $")
    assert (e.value.line, e.value.column) == (1, 11)


def test_tiny_model():
    spec = load(TINY)
    assert [str(s.name) for s in spec.servers] == ["s"]
    assert [str(a.initial) for a in spec.agents] == ["A.s.go"]
    assert spec.actions[0].terminating


def test_semaphore_instantiation_count(sem_spec):
    assert len(sem_spec.actions) == 24
    assert [str(s.name) for s in sem_spec.servers] == ["sem[1]", "sem[2]", "proc[1]", "proc[2]", "r"]
    assert [str(a.name) for a in sem_spec.agents] == ["A[1]", "A[2]", "A3"]


def test_replicator_expands_in_index_order(sem_spec):
    firsts = [str(a) for a in sem_spec.actions[:2]]
    assert firsts == ["{A[1].sem[1].wait, sem[1].up} -> {A[1].proc[1].ok_wait, sem[1].down}",
                      "{A[2].sem[1].wait, sem[1].up} -> {A[2].proc[2].ok_wait, sem[1].down}"]


def test_binding_substitutes_formals(sem_spec):
    proc2 = [str(a) for a in sem_spec.actions if a.server == "proc[2]"]
    assert "{A[2].proc[2].start, proc[2].ini} -> {A[2].sem[2].wait, proc[2].first}" in proc2
    assert "{A[2].proc[2].ok_wait, proc[2].first} -> {A[2].sem[1].wait, proc[2].sec}" in proc2


@pytest.mark.parametrize("text, fragment", [
    ("servr: x", "unknown keyword 'servr'"),
    ("server: s, services {x", "expected }"),
    (SEM + "\nserver: r,\nservices {left},\nstates {res},\nactions {A3.r.left, r.res} -> {r.res},\n"
     "end;\n", "duplicate template name 'r'"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(ParseError) as e:
        parse(text)
    assert fragment in str(e.value)
    assert e.value.line is not None


@pytest.mark.parametrize("old, new, fragment", [
    ("r(A3).res", "r(A3,A3).res", "arity mismatch"),
    ("sem[j](A[1],A[2],proc[1],proc[2]).up", "sem[j](A[1],A[3],proc[1],proc[2]).up",
     "out of declared array range"),
    ("{A3.r.left, r.res}                 -> {A3.r.right, r.res}",
     "{A3.r.left, r.res} -> {A3.r.right, A3.r.left, r.res}", "dynamic creation unsupported"),
])
def test_instantiation_errors(old, new, fragment):
    assert old in SEM
    with pytest.raises(SpecError) as e:
        load(SEM.replace(old, new))
    assert fragment in str(e.value)


def test_template_without_actions_warns():
    doc = parse("server: s, services {x}, states {a}, actions end;"
                "agents: A; servers: s; init -> {A.s.x, s.a}.")
    assert any("defines no actions" in w for w in doc.warnings)


def test_redundant_separators_tolerated():
    assert load(TINY.replace("init -> {A.s.go, s(A).a}.", "init -> {A.s.go,, s(A).a,;}.")) \
        == load(TINY)


def test_agent_view_matches_server_view(sem_spec):
    assert load(read("semaphores_agent.imds")) == sem_spec


def test_render_agent_view_mentions_each_agent(sem_spec):
    text = render(sem_spec, "agent")
    for a in ("A[1]", "A[2]", "A3"):
        assert f"agent: {a}" in text


def test_render_rejects_unwritable_names():
    spec = make_spec({"s-1": (["a"], ["x"], "a")}, {"A": ("s-1", "x")},
                     [("A", "s-1", "x", "a", "a")])
    with pytest.raises(RenderError):
        render(spec)


def test_render_unknown_view(sem_spec):
    with pytest.raises(ValueError):
        render(sem_spec, "sideways")


@settings(max_examples=80, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(specs())
def test_render_round_trip_random(spec):
    for view in ("server", "agent"):
        text = render(spec, view)
        assert load(text) == spec
        assert render(load(text), view) == text


_fragments = st.sampled_from([
    "server:", "agent:", "agents:", "servers:", "init", "->", "{", "}", "(", ")", "[", "]",
    ",", ";", ".", "end", "services", "states", "actions", "<j=1..2>", "A", "s", "x", "A[j]",
    "s[2]", "3", "//c\n", " ", "\n",
])


@settings(max_examples=300, deadline=None)
@given(st.lists(_fragments, max_size=40).map(" ".join))
def test_fuzz_only_domain_errors(text):
    try:
        load(text)
    except (ParseError, SpecError):
        pass


@settings(max_examples=150, deadline=None)
@given(st.text(max_size=60))
def test_fuzz_arbitrary_text(text):
    try:
        load(text)
    except (ParseError, SpecError):
        pass


@settings(max_examples=100, deadline=None)
@given(st.integers(0, len(SEM) - 1), st.integers(1, 8))
def test_fuzz_truncated_listing(start, width):
    try:
        load(SEM[:start] + SEM[start + width:])
    except (ParseError, SpecError):
        pass
