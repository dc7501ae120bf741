"""Deadlock and termination checks for travelers (agents) and residents (servers).

Deadlock verdicts are existential: ``holds`` means the deadlock can occur.
Termination verdicts are universal: ``holds`` means termination is
inevitable.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .ctl import (
    AF,
    AG,
    EF,
    And,
    EnabledAgentAction,
    EnabledServerAction,
    FalseF,
    Implies,
    Lasso,
    Not,
    Or,
    Path,
    PendingAgent,
    PendingAtServer,
    Terminal,
    check_duality,
    evaluate,
    lasso_counterexample,
    witness_ef,
)
from .lts import Lts, terminal_states
from .model import SystemSpec

RESOURCE = "resource_deadlock"
COMMUNICATION = "communication_deadlock"
TERMINATION = "termination"
TOTAL = "total_deadlock"

READINGS = {
    RESOURCE: "can occur (exists a reachable state)",
    COMMUNICATION: "can occur (exists a reachable state)",
    TERMINATION: "inevitable (on every path)",
    TOTAL: "can occur (exists a reachable state)",
}


@dataclass(frozen=True)
class TraceStep:
    state: int
    action: Optional[int]
    text: str
    target: int

    def as_dict(self) -> dict:
        return {"state": self.state, "action": self.action, "text": self.text,
                "target": self.target}


@dataclass(frozen=True)
class Trace:
    """Replayable evidence: a stem from the initial state and an optional cycle."""

    stem: tuple[TraceStep, ...]
    cycle: Optional[tuple[TraceStep, ...]] = None
    start: int = 0

    @property
    def kind(self) -> str:
        return "path" if self.cycle is None else "lasso"

    @property
    def end(self) -> int:
        return self.stem[-1].target if self.stem else self.start

    def actions(self) -> list[int]:
        return [s.action for s in self.stem]


@dataclass(frozen=True)
class Verdict:
    kind: str
    subject: Optional[str]
    holds: bool
    formula: str
    diagnosis: str
    evidence: Optional[Trace] = None
    details: tuple[str, ...] = ()

    @property
    def reading(self) -> str:
        return READINGS[self.kind]


@dataclass(frozen=True)
class Report:
    tool_version: str
    spec_digest: str
    stats: dict
    verdicts: tuple[Verdict, ...]
    terminal: dict = field(default_factory=dict)

    def find(self, kind: str, subject: Optional[str] = None) -> Verdict:
        for v in self.verdicts:
            if v.kind == kind and v.subject == subject:
                return v
        raise KeyError((kind, subject))

    def of_kind(self, kind: str) -> list[Verdict]:
        return [v for v in self.verdicts if v.kind == kind]


def _steps(lts: Lts, steps) -> tuple[TraceStep, ...]:
    out = []
    for s in steps:
        text = "(stays: no action enabled)" if s.action is None else lts.action_label(s.action)
        out.append(TraceStep(s.source, s.action, text, s.target))
    return tuple(out)


def as_trace(lts: Lts, evidence) -> Optional[Trace]:
    if evidence is None:
        return None
    if isinstance(evidence, Path):
        return Trace(_steps(lts, evidence.steps), None, evidence.start)
    if isinstance(evidence, Lasso):
        return Trace(_steps(lts, evidence.stem.steps), _steps(lts, evidence.cycle),
                     evidence.stem.start)
    raise TypeError(evidence)


def resource_deadlock_formula(agent: str):
    return EF(And(PendingAgent(agent), AG(Not(EnabledAgentAction(agent)))))


def comm_deadlock_formula(server: str):
    return EF(And(PendingAtServer(server), AG(Not(EnabledServerAction(server)))))


def termination_formula(agent: str):
    p = PendingAgent(agent)
    return AG(Implies(p, AF(AG(Not(p)))))


def termination_formula_simple(agent: str):
    """Equivalent form for static agents: not pending is absorbing."""
    p = PendingAgent(agent)
    return AG(Implies(p, AF(Not(p))))


def _deadlock(lts: Lts, formula, pending_f, enabled_f) -> tuple:
    cache: dict = {}
    enabled = evaluate(lts, enabled_f, cache)
    check_duality(lts, ~enabled)
    region = evaluate(lts, And(pending_f, AG(Not(enabled_f))), cache)
    sat = evaluate(lts, formula, cache)
    holds = bool(sat[0])
    evidence = witness_ef(lts, region) if holds else None
    return holds, evidence


def check_resource_deadlock(lts: Lts, spec: SystemSpec, agent: str) -> Verdict:
    """Can ``agent``'s message pend in a state where none of its actions is ever enabled again?"""
    name = str(spec.agent(agent).name)
    f = resource_deadlock_formula(name)
    holds, path = _deadlock(lts, f, PendingAgent(name), EnabledAgentAction(name))
    if holds:
        msg = spec.pending_of(lts.states[path.end], name)
        diagnosis = (f"agent {name} can reach a configuration where its message {msg} "
                     f"is pending forever")
        details = (f"deadlock state {path.end}: {spec.describe(lts.states[path.end])}",)
    else:
        diagnosis = f"no deadlock over resources in {name}"
        details = ()
    return Verdict(RESOURCE, name, holds, str(f), diagnosis, as_trace(lts, path), details)


def check_comm_deadlock(lts: Lts, spec: SystemSpec, server: str) -> Verdict:
    """Can messages pend at ``server`` while it never executes an action again?"""
    name = str(spec.server(server).name)
    f = comm_deadlock_formula(name)
    holds, path = _deadlock(lts, f, PendingAtServer(name),
                            EnabledServerAction(name))
    if holds:
        c = lts.states[path.end]
        msgs = [str(m) for m in spec.pending_messages(c) if m.server == name]
        diagnosis = (f"server {name} can reach a configuration where {', '.join(msgs)} "
                     f"{'is' if len(msgs) == 1 else 'are'} pending and no action on {name} "
                     f"can ever execute again")
        details = (f"deadlock state {path.end}: {spec.describe(c)}",)
    else:
        diagnosis = f"no communication deadlock in {name}"
        details = ()
    return Verdict(COMMUNICATION, name, holds, str(f), diagnosis, as_trace(lts, path), details)


def check_termination(lts: Lts, spec: SystemSpec, agent: str) -> Verdict:
    """Does ``agent`` inevitably disappear once it is present?"""
    name = str(spec.agent(agent).name)
    f = termination_formula(name)
    cache: dict = {}
    sat = evaluate(lts, f, cache)
    simple = evaluate(lts, termination_formula_simple(name), cache)
    if not np.array_equal(sat, simple):
        raise AssertionError(f"termination forms disagree for {name}")
    holds = bool(sat[0])
    if holds:
        return Verdict(TERMINATION, name, True, str(f), f"traveler {name} always terminates")
    pending = evaluate(lts, PendingAgent(name), cache)
    stuck = evaluate(lts, And(PendingAgent(name), AG(Not(EnabledAgentAction(name)))), cache)
    lasso = lasso_counterexample(lts, pending, prefer=stuck)
    diagnosis = (f"traveler {name} may not terminate: after {len(lasso.stem)} steps its "
                 f"message stays pending forever along a cycle of {len(lasso.cycle)} step(s)")
    return Verdict(TERMINATION, name, False, str(f), diagnosis, as_trace(lts, lasso))


def check_total_deadlock(lts: Lts) -> Verdict:
    """Classical check: is some reachable state without successors still busy?"""
    spec = lts.spec
    stuck = terminal_states(lts).stuck
    busy = FalseF()
    for a in spec.agents:
        busy = PendingAgent(str(a.name)) if isinstance(busy, FalseF) else Or(busy, PendingAgent(str(a.name)))
    formula = EF(And(Terminal(), busy))
    f = str(formula)
    if bool(evaluate(lts, formula)[0]) != bool(stuck):
        raise AssertionError("total deadlock formula disagrees with terminal classification")
    if not stuck:
        return Verdict(TOTAL, None, False, f, "no total deadlock")
    target = np.zeros(lts.n_states, dtype=bool)
    target[list(stuck)] = True
    path = witness_ef(lts, target)
    pending = tuple(str(m) for m in spec.pending_messages(lts.states[path.end]))
    diagnosis = (f"total deadlock in state {path.end}: no action is enabled while "
                 f"{', '.join(pending)} {'is' if len(pending) == 1 else 'are'} pending")
    return Verdict(TOTAL, None, True, f, diagnosis, as_trace(lts, path), pending)


def spec_digest(spec: SystemSpec) -> str:
    from .notation import render

    return "sha256:" + hashlib.sha256(render(spec, "server").encode("utf-8")).hexdigest()


def check_all(lts: Lts, spec: Optional[SystemSpec] = None) -> Report:
    """Resource deadlock per agent, communication deadlock per server,
    termination per agent, then total deadlock."""
    spec = spec or lts.spec
    verdicts = []
    verdicts += [check_resource_deadlock(lts, spec, a.name) for a in spec.agents]
    verdicts += [check_comm_deadlock(lts, spec, s.name) for s in spec.servers]
    verdicts += [check_termination(lts, spec, a.name) for a in spec.agents]
    verdicts.append(check_total_deadlock(lts))
    term = terminal_states(lts)
    terminal = {"clean": len(term.clean), "stuck": len(term.stuck)}
    return Report(__version__, spec_digest(spec), lts.stats.as_dict(), tuple(verdicts), terminal)
