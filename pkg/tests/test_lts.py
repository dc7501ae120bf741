import pytest
from hypothesis import given, settings

from builders import make_spec, no_agents, philosophers, single_terminating, specs
from imds.errors import LimitExceeded, SpecError
from imds.lts import Limits, build_lts, terminal_states
from imds.model import enabled_actions, fire
from oracles import brute_bfs, lts_config


def test_semaphore_counts(sem_lts):
    assert sem_lts.stats.as_dict() == {"state_count": 136, "transition_count": 344}
    assert not sem_lts.terminal.any()


def test_initial_state_is_zero(sem_spec, sem_lts):
    assert sem_lts.states[0] == sem_spec.initial_configuration()


def test_no_a3_counts(no_a3_lts):
    assert (no_a3_lts.n_states, len(no_a3_lts.src)) == (68, 104)
    term = terminal_states(no_a3_lts)
    assert len(term.clean) == 1 and len(term.stuck) == 1


def test_builds_are_identical(sem_spec):
    a, b = build_lts(sem_spec), build_lts(sem_spec)
    assert a.states == b.states
    assert a.transitions == b.transitions


def test_successors_in_action_order(sem_spec, sem_lts):
    for i in range(sem_lts.n_states):
        succ = sem_lts.successors(i)
        assert [a for a, _ in succ] == enabled_actions(sem_spec, sem_lts.states[i])
        for a, j in succ:
            assert sem_lts.states[j] == fire(sem_spec, sem_lts.states[i], a)


def test_out_degree_matches_enabled_matrix(sem_lts):
    assert (sem_lts.enabled.sum(axis=1) == sem_lts.out_degree).all()


def test_pending_caches(sem_spec, sem_lts):
    for i, c in enumerate(sem_lts.states):
        for j, a in enumerate(sem_spec.agents):
            assert sem_lts.pending_agent[i, j] == (sem_spec.pending_of(c, a.name) is not None)
        servers_busy = {str(m.server) for m in sem_spec.pending_messages(c)}
        for k, s in enumerate(sem_spec.servers):
            assert sem_lts.pending_at_server[i, k] == (str(s.name) in servers_busy)


def test_single_terminating_action():
    lts = build_lts(single_terminating())
    assert lts.transitions == [(0, 0, 1)]
    term = terminal_states(lts)
    assert term.clean == {1} and not term.stuck


def test_no_agents():
    lts = build_lts(no_agents())
    assert lts.n_states == 1 and len(lts.src) == 0
    assert lts.pending_message.shape == (1, 0)
    assert terminal_states(lts).clean == {0}


def test_state_limit():
    with pytest.raises(LimitExceeded) as e:
        build_lts(philosophers(3), Limits(max_states=10))
    assert "state limit" in str(e.value)
    assert e.value.states == 10


def test_transition_limit():
    with pytest.raises(LimitExceeded, match="transition limit"):
        build_lts(philosophers(3), Limits(max_transitions=5))


def test_invalid_spec_rejected():
    spec = make_spec({"s": (["a"], ["x"], "a")}, {"A": ("s", "x")}, [("A", "s", "x", "a", "zz")])
    with pytest.raises(SpecError):
        build_lts(spec)


def test_philosophers_match_oracle():
    spec = philosophers(3)
    lts = build_lts(spec)
    order, trans = brute_bfs(spec)
    assert lts.n_states == len(order) and len(lts.src) == len(trans)


@settings(max_examples=50, deadline=None)
@given(specs())
def test_random_specs_match_oracle(spec):
    try:
        lts = build_lts(spec, Limits(max_states=3000))
    except LimitExceeded:
        return
    order, trans = brute_bfs(spec)
    configs = [lts_config(spec, c) for c in lts.states]
    assert configs[0] == order[0]
    assert set(configs) == set(order)
    assert len(set(configs)) == lts.n_states
    assert {(configs[u], a, configs[v]) for u, a, v in lts.transitions} == trans
