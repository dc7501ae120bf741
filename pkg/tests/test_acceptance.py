"""Acceptance criteria; conftest prints one PASS/FAIL line per criterion."""

import os
import random
import subprocess
import sys
import time

import numpy as np
import pytest

from builders import philosophers, random_kripke_edges, random_spec
from imds import ctl
from imds.ctl import AF, AG, AU, AX, EF, EG, EU, EX, And, Implies, Kripke, Not, Or
from imds.detectors import (
    COMMUNICATION,
    RESOURCE,
    TERMINATION,
    TOTAL,
    check_all,
    check_comm_deadlock,
    check_resource_deadlock,
    check_termination,
)
from imds.errors import LimitExceeded
from imds.exporters import to_promela
from imds.lts import Limits, build_lts, terminal_states
from imds.model import enabled_actions, fire, is_well_formed
from imds.models import path as model_path
from imds.models import read
from imds.notation import load, render
from oracles import PathOracle, brute_bfs, brute_terminal_counts, lts_config

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")

EXPECTED_VERDICTS = {
    (RESOURCE, "A[1]"): True,
    (RESOURCE, "A[2]"): True,
    (RESOURCE, "A3"): False,
    (COMMUNICATION, "sem[1]"): True,
    (COMMUNICATION, "sem[2]"): True,
    (COMMUNICATION, "r"): False,
    (COMMUNICATION, "proc[1]"): False,
    (COMMUNICATION, "proc[2]"): False,
    (TERMINATION, "A[1]"): False,
    (TERMINATION, "A[2]"): False,
    (TERMINATION, "A3"): False,
}


@pytest.mark.criterion(1, "semaphore system verdicts match exactly, under 1 s")
def test_semaphore_verdicts():
    started = time.perf_counter()
    spec = load(read("semaphores.imds"))
    report = check_all(build_lts(spec), spec)
    elapsed = time.perf_counter() - started
    got = {(v.kind, v.subject): v.holds for v in report.verdicts if v.kind != TOTAL}
    assert got == EXPECTED_VERDICTS
    assert report.find(TOTAL).holds is False
    assert elapsed < 1.0, f"took {elapsed:.3f}s"


@pytest.mark.criterion(2, "removing A3 and r flips total deadlock only")
def test_a3_ablation(sem_lts, no_a3_lts):
    full = check_all(sem_lts)
    reduced = check_all(no_a3_lts)
    assert full.find(TOTAL).holds is False
    assert reduced.find(TOTAL).holds is True
    kept = [(RESOURCE, "A[1]"), (RESOURCE, "A[2]"), (TERMINATION, "A[1]"), (TERMINATION, "A[2]")]
    kept += [(COMMUNICATION, s) for s in ("sem[1]", "sem[2]", "proc[1]", "proc[2]")]
    for kind, subject in kept:
        assert full.find(kind, subject).holds == reduced.find(kind, subject).holds, (kind, subject)
    assert {(v.kind, v.subject) for v in reduced.verdicts if v.kind != TOTAL} == set(kept)


@pytest.mark.criterion(3, "terminal-state classification pinned by brute-force BFS")
def test_terminal_classification(sem_spec, no_a3_spec):
    # Pin the counts with the oracle before consulting the builder.
    assert brute_terminal_counts(sem_spec) == (0, 0)
    clean, stuck = brute_terminal_counts(no_a3_spec)
    assert clean >= 1 and stuck >= 1
    assert (clean, stuck) == (1, 1)

    with_a3 = terminal_states(build_lts(sem_spec))
    assert not with_a3.clean and not with_a3.stuck
    lts = build_lts(no_a3_spec)
    term = terminal_states(lts)
    assert (len(term.clean), len(term.stuck)) == (clean, stuck)
    for i in term.stuck:
        assert no_a3_spec.pending_messages(lts.states[i])
    for i in term.clean:
        assert not no_a3_spec.pending_messages(lts.states[i])


def _kripke_formulas():
    p, q = ctl.Prop("p"), ctl.Prop("q")
    return [
        EF(And(p, AG(Not(q)))),
        AG(Implies(p, AF(AG(Not(p))))),
        EX(p), AX(p), EU(p, q), AU(p, q), EG(p), AG(p), AF(p), EF(p),
        EG(Or(p, EX(q))), AU(Not(q), And(p, EG(p))),
    ]


def _spec_formulas(spec):
    a = str(spec.agents[0].name)
    s = str(spec.servers[0].name)
    pa, ea = ctl.PendingAgent(a), ctl.EnabledAgentAction(a)
    ps, es = ctl.PendingAtServer(s), ctl.EnabledServerAction(s)
    return [
        EF(And(pa, AG(Not(ea)))),
        EF(And(ps, AG(Not(es)))),
        AG(Implies(pa, AF(AG(Not(pa))))),
        AG(Implies(pa, AF(Not(pa)))),
        EX(ea), AX(pa), EU(pa, ctl.Terminal()), EG(pa), AU(Not(es), ps), EF(ctl.Terminal()),
    ]


def _random_models(rng, count):
    models = []
    while len(models) < count // 2:
        n = rng.randint(1, 8) if len(models) < 20 else rng.randint(9, 200)
        edges = random_kripke_edges(rng, n, rng.uniform(0.3, 2.0))
        labels = {k: [rng.random() < 0.5 for _ in range(n)] for k in "pq"}
        models.append((Kripke(n, edges, labels), None))
    while len(models) < count:
        spec = random_spec(rng, max_servers=3, max_agents=3, max_actions=12)
        try:
            lts = build_lts(spec, Limits(max_states=200))
        except LimitExceeded:
            continue
        models.append((lts, spec))
    return models


@pytest.mark.criterion(4, "CTL engine matches the path-search oracle on 100 random models")
def test_ctl_oracle_equivalence():
    rng = random.Random(20240404)
    models = _random_models(rng, 100)
    disagreements = []
    checked = 0
    for k, (model, spec) in enumerate(models):
        assert model.n_states <= 200
        formulas = _kripke_formulas() if spec is None else _spec_formulas(spec)
        oracles = [PathOracle(model, spec)]
        if model.n_states <= 8:
            oracles.append(PathOracle(model, spec, enumerate_lassos=True))
        for f in formulas:
            got = ctl.evaluate(model, f).tolist()
            for o in oracles:
                checked += 1
                if got != o.eval(f):
                    disagreements.append((k, str(f), o.enum))
    assert checked > 1000
    assert disagreements == []


def _frame_ok(spec, before, after, action):
    act = spec.actions[action]
    for s in spec.servers:
        if s.name != act.server and spec.state_of(before, s.name) != spec.state_of(after, s.name):
            return False
    for a in spec.agents:
        if a.name != act.agent and spec.pending_of(before, a.name) != spec.pending_of(after, a.name):
            return False
    return (spec.state_of(after, act.server) == act.out_state
            and spec.pending_of(after, act.agent) == act.out_message)


@pytest.mark.criterion(5, "firing keeps well-formedness, frame rule and locality")
def test_semantics_properties():
    rng = random.Random(7)
    steps = 0
    pairs = 0
    while steps < 1000 or pairs < 1000:
        spec = random_spec(rng, max_servers=4, max_agents=4, max_actions=16, terminate_p=0.1)
        c = spec.initial_configuration()
        for _ in range(30):
            enabled = enabled_actions(spec, c)
            if not enabled:
                break
            for i in enabled:
                for j in enabled:
                    x, y = spec.actions[i], spec.actions[j]
                    if i < j and x.server != y.server and x.agent != y.agent:
                        after_x, after_y = fire(spec, c, i), fire(spec, c, j)
                        assert j in enabled_actions(spec, after_x)
                        assert i in enabled_actions(spec, after_y)
                        assert fire(spec, after_x, j) == fire(spec, after_y, i)
                        pairs += 1
            a = rng.choice(enabled)
            nxt = fire(spec, c, a)
            assert is_well_formed(spec, nxt)
            assert _frame_ok(spec, c, nxt, a)
            steps += 1
            c = nxt
    assert steps >= 1000 and pairs >= 1000


@pytest.mark.criterion(6, "server and agent views give one spec; render round-trips are fixed points")
def test_view_canonicity():
    server = load(read("semaphores.imds"))
    agent = load(read("semaphores_agent.imds"))
    assert server == agent
    assert len(server.actions) == len(agent.actions) == 24
    for spec in (server, agent):
        for view in ("server", "agent"):
            text = render(spec, view)
            again = load(text)
            assert again == spec
            assert render(again, view) == text
    # The agent listing as printed lacks the signal-on-up rules; everything
    # else coincides.
    verbatim = load(read("semaphores_agent_verbatim.imds"))
    missing = {a.signature() for a in server.actions} - {a.signature() for a in verbatim.actions}
    assert {a.signature() for a in verbatim.actions} <= {a.signature() for a in server.actions}
    assert sorted(f"{m.agent}.{m.server}.{m.service}/{q.state}" for m, q, _, _ in missing) == [
        "A[1].sem[1].signal/up", "A[1].sem[2].signal/up",
        "A[2].sem[1].signal/up", "A[2].sem[2].signal/up",
    ]


def _detector_seconds(lts, spec, repeats):
    best = float("inf")
    for _ in range(repeats):
        lts._ctl_graph = None
        t = time.perf_counter()
        check_resource_deadlock(lts, spec, "A[1]")
        check_comm_deadlock(lts, spec, "F[1]")
        check_termination(lts, spec, "A[1]")
        best = min(best, time.perf_counter() - t)
    return best


@pytest.mark.criterion(7, "detector time linear in LTS size on dining philosophers")
def test_linear_detector_time():
    sizes, seconds = [], []
    for n in range(2, 7):
        spec = philosophers(n)
        lts = build_lts(spec)
        sizes.append(lts.n_states + len(lts.src))
        seconds.append(_detector_seconds(lts, spec, 3))
    x, t = np.array(sizes, dtype=float), np.array(seconds)
    # Least squares on relative error, so small models count as much as big ones.
    w = 1.0 / t
    a, b = np.linalg.lstsq(np.column_stack([x, np.ones_like(x)]) * w[:, None], t * w,
                           rcond=None)[0]
    residual = (t - (a * x + b)) / t
    table = ", ".join(f"{int(s)}:{r:+.2f}" for s, r in zip(x, residual))
    assert a > 0
    assert np.all(np.abs(residual) <= 0.30), table


@pytest.mark.criterion(8, "two check --json runs are byte-identical")
def test_check_json_deterministic(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}.json"
        env = dict(os.environ, PYTHONHASHSEED=str(k + 1))
        proc = subprocess.run([sys.executable, "-m", "imds", "check", str(model_path("semaphores.imds")),
                               "--json", "--out", str(out)], env=env, capture_output=True)
        assert proc.returncode == 0, proc.stderr
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert b"\r" not in outs[0]


@pytest.mark.criterion(9, "Promela export matches the golden file; 5 runs, 3 initial sends")
def test_promela_golden():
    text = to_promela(load(read("semaphores.imds")))
    with open(os.path.join(GOLDEN, "semaphores.pml"), encoding="utf-8") as fh:
        golden = fh.read()
    assert text == golden
    init = text[text.index("init {"):]
    lines = [ln.strip() for ln in init.splitlines()]
    assert sum(ln.startswith("run ") for ln in lines) == 5
    sends = [ln for ln in lines if "!" in ln and not ln.startswith(("run", "chan"))]
    assert len(sends) == 3


def test_oracle_bfs_matches_builder(sem_spec, no_a3_spec):
    for spec, counts in ((sem_spec, (136, 344)), (no_a3_spec, (68, 104))):
        order, trans = brute_bfs(spec)
        assert (len(order), len(trans)) == counts
        lts = build_lts(spec)
        configs = [lts_config(spec, c) for c in lts.states]
        assert set(configs) == set(order)
        assert {(configs[u], a, configs[v]) for u, a, v in lts.transitions} == trans
