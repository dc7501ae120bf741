"""IMDS domain types: identifiers, messages, server states, actions, systems.

A :class:`SystemSpec` is the flat, instantiated model.  Configurations are
compact immutable tuples indexed by server and agent ordinals, so they can be
hashed directly into a visited set.
"""

from __future__ import annotations

import array
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, NamedTuple, Optional, Union

from .errors import NotEnabled, UnknownIdentifier


class _Ident(str):
    """Interned identifier; comparing identifiers of different kinds is an error."""

    __slots__ = ()
    kind = "ident"

    def __new__(cls, value: str):
        return super().__new__(cls, value)

    def _check(self, other):
        if isinstance(other, _Ident) and type(other) is not type(self):
            raise TypeError(f"cannot compare {self.kind} {str(self)!r} with "
                            f"{other.kind} {str(other)!r}")

    def __eq__(self, other):
        self._check(other)
        return str.__eq__(self, other)

    def __ne__(self, other):
        self._check(other)
        return str.__ne__(self, other)

    def __lt__(self, other):
        self._check(other)
        return str.__lt__(self, other)

    __hash__ = str.__hash__

    def __repr__(self):
        return f"{type(self).__name__}({str(self)!r})"


class AgentId(_Ident):
    __slots__ = ()
    kind = "agent"


class ServerId(_Ident):
    __slots__ = ()
    kind = "server"


class ServiceId(_Ident):
    __slots__ = ()
    kind = "service"


class StateId(_Ident):
    __slots__ = ()
    kind = "state"


class ServerState(NamedTuple):
    server: ServerId
    state: StateId

    def __str__(self):
        return f"{self.server}.{self.state}"


class Message(NamedTuple):
    agent: AgentId
    server: ServerId
    service: ServiceId

    def __str__(self):
        return f"{self.agent}.{self.server}.{self.service}"


def message(agent: str, server: str, service: str) -> Message:
    return Message(AgentId(agent), ServerId(server), ServiceId(service))


def server_state(server: str, state: str) -> ServerState:
    return ServerState(ServerId(server), StateId(state))


def agent_of(m: Message) -> AgentId:
    return m.agent


def server_of(x: Union[Message, ServerState]) -> ServerId:
    return x.server


def agents(items: Iterable) -> set:
    """Agents of all messages among ``items``."""
    return {m.agent for m in items if isinstance(m, Message)}


def servers(items: Iterable) -> set:
    """Servers of all messages and server states among ``items``."""
    return {x.server for x in items}


_INDEXED = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\[(\d+)\]$")


def split_index(name: str) -> tuple[str, Optional[int]]:
    """``"sem[2]"`` -> ``("sem", 2)``; ``"r"`` -> ``("r", None)``."""
    m = _INDEXED.match(name)
    if m:
        return m.group(1), int(m.group(2))
    return name, None


@dataclass(frozen=True)
class ActionDef:
    id: int
    in_message: Message
    in_state: ServerState
    out_state: ServerState
    out_message: Optional[Message] = None

    @property
    def server(self) -> ServerId:
        return self.in_state.server

    @property
    def agent(self) -> AgentId:
        return self.in_message.agent

    @property
    def terminating(self) -> bool:
        return self.out_message is None

    def signature(self) -> tuple:
        return (self.in_message, self.in_state, self.out_state, self.out_message)

    def __str__(self):
        outs = [str(self.out_state)] if self.out_message is None else \
            [str(self.out_message), str(self.out_state)]
        return f"{{{self.in_message}, {self.in_state}}} -> {{{', '.join(outs)}}}"


@dataclass(frozen=True)
class ServerDecl:
    name: ServerId
    states: tuple[StateId, ...]
    services: tuple[ServiceId, ...]
    initial: StateId


@dataclass(frozen=True)
class AgentDecl:
    name: AgentId
    initial: Message


class Configuration(NamedTuple):
    """Global snapshot.

    ``states[i]`` is the index of server ``i``'s current state within its
    declared state tuple; ``pending[j]`` is the index of agent ``j``'s pending
    message in :attr:`SystemSpec.messages`, or ``-1`` once the agent has
    terminated.
    """

    states: tuple[int, ...]
    pending: tuple[int, ...]

    def encode(self) -> bytes:
        """Canonical byte encoding (ordinal order)."""
        return array.array("i", self.states + self.pending).tobytes()


@dataclass(frozen=True, eq=False)
class SystemSpec:
    servers: tuple[ServerDecl, ...]
    agents: tuple[AgentDecl, ...]
    actions: tuple[ActionDef, ...]
    source_view: str = field(default="server", compare=False)

    # Equality is semantic: action order and the ordering inside state and
    # service universes do not matter, and neither does the source view.
    def _key(self):
        return (
            tuple((s.name, frozenset(s.states), frozenset(s.services), s.initial)
                  for s in self.servers),
            tuple((a.name, a.initial) for a in self.agents),
            frozenset(a.signature() for a in self.actions),
        )

    def __eq__(self, other):
        if not isinstance(other, SystemSpec):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    # -- identifier tables -------------------------------------------------

    @cached_property
    def server_index(self) -> dict[ServerId, int]:
        return {s.name: i for i, s in enumerate(self.servers)}

    @cached_property
    def agent_index(self) -> dict[AgentId, int]:
        return {a.name: i for i, a in enumerate(self.agents)}

    @cached_property
    def state_ids(self) -> tuple[StateId, ...]:
        """All state names, densely numbered in first-declaration order."""
        seen = {}
        for s in self.servers:
            for q in s.states:
                seen.setdefault(q, None)
        return tuple(seen)

    @cached_property
    def service_ids(self) -> tuple[ServiceId, ...]:
        seen = {}
        for s in self.servers:
            for v in s.services:
                seen.setdefault(v, None)
        return tuple(seen)

    @cached_property
    def messages(self) -> tuple[Message, ...]:
        """Every message literal occurring in the system, in first-use order."""
        seen = {}
        for a in self.agents:
            seen.setdefault(a.initial, None)
        for act in self.actions:
            seen.setdefault(act.in_message, None)
            if act.out_message is not None:
                seen.setdefault(act.out_message, None)
        return tuple(seen)

    @cached_property
    def message_index(self) -> dict[Message, int]:
        return {m: i for i, m in enumerate(self.messages)}

    @cached_property
    def _state_local(self) -> list[dict[StateId, int]]:
        return [{q: i for i, q in enumerate(s.states)} for s in self.servers]

    def server(self, name: str) -> ServerDecl:
        try:
            return self.servers[self.server_index[ServerId(name)]]
        except KeyError:
            raise UnknownIdentifier(f"unknown server {name}") from None

    def agent(self, name: str) -> AgentDecl:
        try:
            return self.agents[self.agent_index[AgentId(name)]]
        except KeyError:
            raise UnknownIdentifier(f"unknown agent {name}") from None

    def server_ordinal(self, name: str) -> int:
        self.server(name)
        return self.server_index[ServerId(name)]

    def agent_ordinal(self, name: str) -> int:
        self.agent(name)
        return self.agent_index[AgentId(name)]

    # -- compiled semantics tables (require a valid spec) -----------------

    @cached_property
    def _compiled(self):
        msg_server = [self.server_index[m.server] for m in self.messages]
        msg_agent = [self.agent_index[m.agent] for m in self.messages]
        table: dict[tuple[int, int], list[int]] = {}
        fire_info = []
        for act in self.actions:
            s = self.server_index[act.server]
            q = self._state_local[s][act.in_state.state]
            m = self.message_index[act.in_message]
            table.setdefault((m, q), []).append(act.id)
            out_q = self._state_local[s][act.out_state.state]
            out_m = -1 if act.out_message is None else self.message_index[act.out_message]
            fire_info.append((s, self.agent_index[act.agent], out_q, out_m, m, q))
        return msg_server, msg_agent, table, fire_info

    def initial_configuration(self) -> Configuration:
        states = tuple(self._state_local[i][s.initial] for i, s in enumerate(self.servers))
        pending = tuple(self.message_index[a.initial] for a in self.agents)
        return Configuration(states, pending)

    def configuration(self, states: dict, pending: dict) -> Configuration:
        """Build a configuration from name maps.

        ``states`` maps every server name to a state name; ``pending`` maps
        agent names to a message (or ``(server, service)`` pair).  Agents
        missing from ``pending`` have terminated.
        """
        st = []
        for i, s in enumerate(self.servers):
            st.append(self._state_local[i][StateId(states[s.name])])
        pend = [-1] * len(self.agents)
        for a, m in pending.items():
            j = self.agent_ordinal(a)
            if not isinstance(m, Message):
                m = message(a, *m)
            pend[j] = self.message_index[m]
        return Configuration(tuple(st), tuple(pend))

    def state_of(self, c: Configuration, server: str) -> ServerState:
        i = self.server_ordinal(server)
        return ServerState(self.servers[i].name, self.servers[i].states[c.states[i]])

    def pending_of(self, c: Configuration, agent: str) -> Optional[Message]:
        k = c.pending[self.agent_ordinal(agent)]
        return None if k < 0 else self.messages[k]

    def pending_messages(self, c: Configuration) -> list[Message]:
        return [self.messages[k] for k in c.pending if k >= 0]

    def describe(self, c: Configuration) -> str:
        items = [str(ServerState(s.name, s.states[q])) for s, q in zip(self.servers, c.states)]
        items += [str(m) for m in self.pending_messages(c)]
        return "{" + ", ".join(items) + "}"


def enabled_actions(spec: SystemSpec, c: Configuration) -> list[int]:
    """Ids of the actions enabled in ``c``, in ascending ordinal order."""
    msg_server, _, table, _ = spec._compiled
    found = []
    for m in c.pending:
        if m >= 0:
            ids = table.get((m, c.states[msg_server[m]]))
            if ids:
                found.extend(ids)
    found.sort()
    return found


def is_enabled(spec: SystemSpec, c: Configuration, action_id: int) -> bool:
    s, a, _, _, m, q = spec._compiled[3][action_id]
    return c.pending[a] == m and c.states[s] == q


def fire(spec: SystemSpec, c: Configuration, action: Union[ActionDef, int]) -> Configuration:
    """Fire an enabled action, returning the successor configuration."""
    aid = action if isinstance(action, int) else action.id
    s, a, out_q, out_m, m, q = spec._compiled[3][aid]
    if c.pending[a] != m or c.states[s] != q:
        raise NotEnabled(f"action {aid} {spec.actions[aid]} is not enabled")
    states = c.states[:s] + (out_q,) + c.states[s + 1:]
    pending = c.pending[:a] + (out_m,) + c.pending[a + 1:]
    return Configuration(states, pending)


def is_well_formed(spec: SystemSpec, c: Configuration) -> bool:
    """One state per server, at most one message per agent, targets exist."""
    if len(c.states) != len(spec.servers) or len(c.pending) != len(spec.agents):
        return False
    for i, q in enumerate(c.states):
        if not 0 <= q < len(spec.servers[i].states):
            return False
    for j, k in enumerate(c.pending):
        if k == -1:
            continue
        if not 0 <= k < len(spec.messages):
            return False
        m = spec.messages[k]
        if m.agent != spec.agents[j].name or m.server not in spec.server_index:
            return False
    return True


@dataclass(frozen=True)
class Process:
    """A traveler or resident: its literals and the actions it owns."""

    messages: frozenset
    states: frozenset
    actions: tuple[int, ...]

    @property
    def items(self) -> frozenset:
        return self.messages | self.states


def _state_literals(spec: SystemSpec, server: ServerId) -> set:
    decl = spec.servers[spec.server_index[server]]
    return {ServerState(decl.name, q) for q in decl.states}


def traveler_of(spec: SystemSpec, agent: str) -> Process:
    """Messages of ``agent`` plus the states of the servers they target."""
    a = spec.agent(agent).name
    msgs = frozenset(m for m in spec.messages if m.agent == a)
    states = set()
    for srv in servers(msgs):
        states |= _state_literals(spec, srv)
    acts = tuple(act.id for act in spec.actions if act.agent == a)
    return Process(msgs, frozenset(states), acts)


def resident_of(spec: SystemSpec, server: str) -> Process:
    """States of ``server`` plus every message directed to it."""
    s = spec.server(server).name
    msgs = frozenset(m for m in spec.messages if m.server == s)
    acts = tuple(act.id for act in spec.actions if act.server == s)
    return Process(msgs, frozenset(_state_literals(spec, s)), acts)


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def unconsumed(self) -> list[str]:
        return [w for w in self.warnings if "never consumed" in w]


def validate_spec(spec: SystemSpec) -> ValidationReport:
    report = ValidationReport()
    err = report.errors.append
    warn = report.warnings.append

    universe: dict[ServerId, tuple[set, set]] = {}
    for s in spec.servers:
        if s.name in universe:
            err(f"duplicate server {s.name}")
            continue
        universe[s.name] = (set(s.states), set(s.services))
        if len(set(s.states)) != len(s.states):
            err(f"server {s.name}: duplicate state names")
        if len(set(s.services)) != len(s.services):
            err(f"server {s.name}: duplicate service names")
        if s.initial not in universe[s.name][0]:
            err(f"server {s.name}: initial state {s.initial} is not declared")
    agent_names = set()
    for a in spec.agents:
        if a.name in agent_names:
            err(f"duplicate agent {a.name}")
        agent_names.add(a.name)

    def check_message(m: Message, where: str) -> bool:
        if m.agent not in agent_names:
            err(f"{where}: unknown agent {m.agent} in {m}")
            return False
        if m.server not in universe:
            err(f"{where}: unknown server {m.server} in {m}")
            return False
        if m.service not in universe[m.server][1]:
            err(f"{where}: unknown service {m.service} on server {m.server} in {m}")
            return False
        return True

    def check_state(s: ServerState, where: str) -> bool:
        if s.server not in universe:
            err(f"{where}: unknown server {s.server} in {s}")
            return False
        if s.state not in universe[s.server][0]:
            err(f"{where}: unknown state {s.state} on server {s.server} in {s}")
            return False
        return True

    for a in spec.agents:
        if a.initial.agent != a.name:
            err(f"agent {a.name}: initial message {a.initial} belongs to another agent")
        check_message(a.initial, f"agent {a.name} initial message")

    seen = {}
    for i, act in enumerate(spec.actions):
        where = f"action {i} {act}"
        if act.id != i:
            err(f"{where}: id {act.id} does not match its position")
        check_message(act.in_message, where)
        check_state(act.in_state, where)
        check_state(act.out_state, where)
        if act.in_message.server != act.in_state.server:
            err(f"{where}: input message targets {act.in_message.server} but input "
                f"state is on {act.in_state.server} (an action executes on one server)")
        if act.out_state.server != act.in_state.server:
            err(f"{where}: continuation state must stay on server {act.in_state.server}")
        if act.out_message is not None:
            check_message(act.out_message, where)
            if act.out_message.agent != act.in_message.agent:
                err(f"{where}: continuation message changes agent "
                    f"(dynamic creation unsupported)")
        sig = act.signature()
        if sig in seen:
            err(f"{where}: duplicate action (same as action {seen[sig]})")
        else:
            seen[sig] = i

    if report.errors:
        return report

    consumed = {act.in_message for act in spec.actions}
    for m in spec.messages:
        if m not in consumed:
            warn(f"message {m} is produced but never consumed by any action")
    used_states = {(act.in_state.server, act.in_state.state) for act in spec.actions}
    used_states |= {(act.out_state.server, act.out_state.state) for act in spec.actions}
    used_states |= {(s.name, s.initial) for s in spec.servers}
    used_services = {(m.server, m.service) for m in spec.messages}
    for s in spec.servers:
        for q in s.states:
            if (s.name, q) not in used_states:
                warn(f"server {s.name}: state {q} is declared but never used")
        for v in s.services:
            if (s.name, v) not in used_services:
                warn(f"server {s.name}: service {v} is declared but never used")
    return report


def iter_successors(spec: SystemSpec, c: Configuration) -> Iterator[tuple[int, Configuration]]:
    for aid in enabled_actions(spec, c):
        yield aid, fire(spec, c, aid)
