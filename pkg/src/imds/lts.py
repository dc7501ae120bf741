"""Reachable labeled transition system of an IMDS system."""

from __future__ import annotations

import time
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import LimitExceeded, SpecError
from .model import Configuration, SystemSpec, validate_spec

DEFAULT_MAX_STATES = 1_000_000
DEFAULT_MAX_TRANSITIONS = 10_000_000


class Limits(NamedTuple):
    max_states: int = DEFAULT_MAX_STATES
    max_transitions: int = DEFAULT_MAX_TRANSITIONS


@dataclass(frozen=True)
class LtsStats:
    state_count: int
    transition_count: int
    build_seconds: float

    def as_dict(self) -> dict:
        """Deterministic part of the statistics."""
        return {"state_count": self.state_count, "transition_count": self.transition_count}


class TerminalStates(NamedTuple):
    clean: frozenset
    stuck: frozenset


class Lts:
    """Reachable configuration graph; state 0 is the initial configuration.

    States are numbered in BFS order and successors are explored in action
    ordinal order, so two builds of one spec are identical.  Terminal states
    are kept without outgoing transitions; the CTL engine totalizes them.
    """

    def __init__(self, spec: SystemSpec, states, src, act, dst, build_seconds=0.0):
        self.spec = spec
        self.states: tuple[Configuration, ...] = tuple(states)
        self.src = np.asarray(src, dtype=np.int64)
        self.act = np.asarray(act, dtype=np.int64)
        self.dst = np.asarray(dst, dtype=np.int64)
        self.stats = LtsStats(len(self.states), len(self.src), build_seconds)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def transitions(self) -> list[tuple[int, int, int]]:
        return list(zip(self.src.tolist(), self.act.tolist(), self.dst.tolist()))

    @cached_property
    def out_degree(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.n_states)

    @cached_property
    def terminal(self) -> np.ndarray:
        return self.out_degree == 0

    @cached_property
    def _succ_csr(self):
        # src is already sorted (BFS emits transitions state by state).
        offsets = np.zeros(self.n_states + 1, dtype=np.int64)
        np.cumsum(self.out_degree, out=offsets[1:])
        return offsets

    def successors(self, i: int) -> list[tuple[int, int]]:
        """``(action, target)`` pairs leaving state ``i`` in action order."""
        off = self._succ_csr
        lo, hi = off[i], off[i + 1]
        return list(zip(self.act[lo:hi].tolist(), self.dst[lo:hi].tolist()))

    # -- per-state caches used for atomic propositions ---------------------

    @cached_property
    def pending_message(self) -> np.ndarray:
        """``[state, agent]`` -> pending message index or -1."""
        n_agents = len(self.spec.agents)
        if not self.states or not n_agents:
            return np.zeros((self.n_states, n_agents), dtype=np.int64)
        return np.array([c.pending for c in self.states], dtype=np.int64).reshape(-1, n_agents)

    @cached_property
    def pending_agent(self) -> np.ndarray:
        return self.pending_message >= 0

    @cached_property
    def pending_at_server(self) -> np.ndarray:
        spec = self.spec
        msg_server = np.array([spec.server_index[m.server] for m in spec.messages] + [0],
                              dtype=np.int64)
        out = np.zeros((self.n_states, len(spec.servers)), dtype=bool)
        pm = self.pending_message
        rows, cols = np.nonzero(pm >= 0)
        out[rows, msg_server[pm[rows, cols]]] = True
        return out

    @cached_property
    def enabled(self) -> np.ndarray:
        """``[state, action]`` -> enabled; out-degree equals the enabled count."""
        out = np.zeros((self.n_states, len(self.spec.actions)), dtype=bool)
        out[self.src, self.act] = True
        return out

    def enabled_for(self, action_ids) -> np.ndarray:
        ids = list(action_ids)
        if not ids:
            return np.zeros(self.n_states, dtype=bool)
        return self.enabled[:, ids].any(axis=1)

    def action_label(self, action: int) -> str:
        return str(self.spec.actions[action])


def build_lts(spec: SystemSpec, limits: Limits = Limits()) -> Lts:
    """Explore every interleaving from the initial configuration (BFS)."""
    report = validate_spec(spec)
    if not report.ok:
        raise SpecError("model is invalid", report.errors)
    max_states, max_transitions = limits
    if max_states < 1 or max_transitions < 0:
        raise ValueError("limits must be positive")

    started = time.perf_counter()
    msg_server, msg_agent, table, fire_info = spec._compiled
    init = spec.initial_configuration()
    index = {init: 0}
    states = [init]
    src, act, dst = [], [], []
    head = 0
    while head < len(states):
        c = states[head]
        cs, cp = c
        enabled = []
        for m in cp:
            if m >= 0:
                ids = table.get((m, cs[msg_server[m]]))
                if ids:
                    enabled.extend(ids)
        if len(enabled) > 1:
            enabled.sort()
        for aid in enabled:
            s, a, out_q, out_m, _, _ = fire_info[aid]
            nxt = Configuration(cs[:s] + (out_q,) + cs[s + 1:], cp[:a] + (out_m,) + cp[a + 1:])
            j = index.get(nxt)
            if j is None:
                j = len(states)
                if j >= max_states:
                    raise LimitExceeded("state limit exceeded", len(states), len(src))
                index[nxt] = j
                states.append(nxt)
            src.append(head)
            act.append(aid)
            dst.append(j)
            if len(src) > max_transitions:
                raise LimitExceeded("transition limit exceeded", len(states), len(src))
        head += 1
    return Lts(spec, states, src, act, dst, time.perf_counter() - started)


def terminal_states(lts: Lts) -> TerminalStates:
    """Split states without successors into clean (no messages) and stuck."""
    term = np.flatnonzero(lts.terminal)
    busy = lts.pending_agent.any(axis=1) if lts.spec.agents else np.zeros(lts.n_states, bool)
    clean = frozenset(int(i) for i in term if not busy[i])
    stuck = frozenset(int(i) for i in term if busy[i])
    return TerminalStates(clean, stuck)
