"""Textual IMDS notation: tokenizer, parser, instantiation and rendering.

The notation groups actions into ``server:`` blocks (server view) or
``agent:`` blocks (agent view)::

    server: sem (agents A[2]; servers proc[2]),
    services {wait, signal},
    states {up, down},
    actions <j=1..2>{A[j].sem.wait, sem.up} -> {A[j].proc[j].ok_wait, sem.down},
    end;

    agents: A[2];
    servers: sem[2], proc[2];
    init -> { <j=1..2>A[j].proc[j].start, <j=1..2>sem[j](A[1],A[2],proc[1],proc[2]).up }.

See ``docs/grammar.md`` for the full grammar.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .errors import ParseError, RenderError, SpecError
from .model import (
    ActionDef,
    AgentDecl,
    AgentId,
    Message,
    ServerDecl,
    ServerId,
    ServerState,
    ServiceId,
    StateId,
    SystemSpec,
    split_index,
)

KEYWORDS = frozenset(
    {"server", "agent", "services", "states", "actions", "end", "agents", "servers", "init"}
)
_TOP_LEVEL = ("server", "agent", "agents", "servers", "init")

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<int>[0-9]+)
  | (?P<arrow>->)
  | (?P<dotdot>\.\.)
  | (?P<punct>[{}()\[\],;.:<>=+\-])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # ident, int, or the punctuation text itself; "eof" at the end
    text: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        value = m.group()
        if kind not in ("ws", "comment"):
            if kind in ("punct", "arrow", "dotdot"):
                kind = value
            tokens.append(Token(kind, value, line, pos - line_start + 1))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# -- AST -------------------------------------------------------------------

@dataclass(frozen=True)
class IndexExpr:
    """Sum of integer literals and index variables, e.g. ``3-j``."""

    terms: tuple[tuple[int, object], ...]  # (sign, int | variable name)

    def evaluate(self, env: dict[str, int], tok: Token) -> int:
        total = 0
        for sign, term in self.terms:
            if isinstance(term, str):
                if term not in env:
                    raise SpecError(f"{tok.line}:{tok.column}: unbound index variable {term}")
                term = env[term]
            total += sign * term
        return total


@dataclass(frozen=True)
class Ref:
    name: str
    index: Optional[IndexExpr]
    token: Token

    def key(self, env: dict[str, int]) -> str:
        if self.index is None:
            return self.name
        return f"{self.name}[{self.index.evaluate(env, self.token)}]"


@dataclass(frozen=True)
class Item:
    """Dotted literal: ``a.srv.svc`` (message) or ``srv.state`` (server state)."""

    parts: tuple[Ref, ...]
    binding: Optional[tuple[Ref, ...]]
    token: Token


@dataclass(frozen=True)
class Replicator:
    var: str
    lo: int
    hi: int

    def values(self):
        return range(self.lo, self.hi + 1)


@dataclass(frozen=True)
class Rule:
    replicator: Optional[Replicator]
    inputs: tuple[Item, ...]
    outputs: tuple[Item, ...]
    token: Token


@dataclass(frozen=True)
class Formal:
    group: str  # "agents" | "servers"
    name: str
    size: Optional[int]

    def names(self) -> list[str]:
        if self.size is None:
            return [self.name]
        return [f"{self.name}[{k}]" for k in range(1, self.size + 1)]


@dataclass
class TemplateDecl:
    kind: str
    name: str
    formals: list[Formal]
    services: list[Item]
    states: list[Item]
    rules: list[Rule]
    token: Token


@dataclass(frozen=True)
class InstanceDecl:
    name: str
    size: Optional[int]
    token: Token

    def names(self) -> list[str]:
        if self.size is None:
            return [self.name]
        return [f"{self.name}[{k}]" for k in range(1, self.size + 1)]


@dataclass(frozen=True)
class InitEntry:
    replicator: Optional[Replicator]
    item: Item


@dataclass
class Document:
    templates: list[TemplateDecl] = field(default_factory=list)
    agents: list[InstanceDecl] = field(default_factory=list)
    servers: list[InstanceDecl] = field(default_factory=list)
    init: list[InitEntry] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


# -- parser ----------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset=1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def error(self, message, expected=(), show_found=True):
        tok = self.tok
        if show_found:
            message += ", found " + ("end of input" if tok.kind == "eof" else repr(tok.text))
        raise ParseError(message, tok.line, tok.column, expected)

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at(self, kind, text=None) -> bool:
        tok = self.tok
        return tok.kind == kind and (text is None or tok.text == text)

    def at_keyword(self, word) -> bool:
        return self.at("ident", word)

    def accept(self, kind, text=None) -> Optional[Token]:
        if self.at(kind, text):
            return self.advance()
        return None

    def expect(self, kind, text=None, what=None) -> Token:
        if self.at(kind, text):
            return self.advance()
        label = what or text or kind
        self.error(f"expected {label}", [label])

    def skip_separators(self):
        while self.tok.kind in (",", ";"):
            self.advance()

    def name(self, what="identifier") -> Token:
        tok = self.tok
        if tok.kind != "ident":
            self.error(f"expected {what}", [what])
        if tok.text in KEYWORDS:
            self.error(f"keyword {tok.text!r} cannot be used as {what}", [what])
        return self.advance()

    def integer(self) -> int:
        return int(self.expect("int", what="integer").text)

    # document := (template | instances | init)*
    def document(self) -> Document:
        doc = Document()
        names = set()
        self.skip_separators()
        while not self.at("eof"):
            tok = self.tok
            if tok.kind == "ident" and tok.text in ("server", "agent") and self.peek().kind == ":":
                t = self.template()
                if t.name in names:
                    raise ParseError(f"duplicate template name {t.name!r}", t.token.line, t.token.column)
                names.add(t.name)
                if not t.rules:
                    doc.warnings.append(f"{t.token.line}:{t.token.column}: template {t.name} defines no actions")
                doc.templates.append(t)
            elif tok.kind == "ident" and tok.text in ("agents", "servers"):
                self.advance()
                self.expect(":")
                decls = self.instance_list()
                (doc.agents if tok.text == "agents" else doc.servers).extend(decls)
            elif tok.kind == "ident" and tok.text == "init":
                self.advance()
                self.expect("->")
                doc.init.extend(self.init_block())
            elif tok.kind == "ident":
                self.error(f"unknown keyword {tok.text!r}", _TOP_LEVEL, show_found=False)
            else:
                self.error("expected a declaration", _TOP_LEVEL)
            self.skip_separators()
        return doc

    def template(self) -> TemplateDecl:
        kind_tok = self.advance()
        self.expect(":")
        name_tok = self.name("template name")
        name = name_tok.text
        if self.accept("["):
            name = f"{name}[{self.integer()}]"
            self.expect("]")
        formals: list[Formal] = []
        if self.accept("("):
            while not self.at(")"):
                if not (self.at_keyword("agents") or self.at_keyword("servers")):
                    self.error("expected parameter group", ["agents", "servers"])
                group = self.advance().text
                self.accept(":")
                while True:
                    f_tok = self.name("parameter name")
                    size = None
                    if self.accept("["):
                        size = self.integer()
                        self.expect("]")
                    formals.append(Formal(group, f_tok.text, size))
                    if not self.accept(","):
                        break
                    if self.at_keyword("agents") or self.at_keyword("servers"):
                        break
                while self.accept(";") or self.accept(","):
                    pass
            self.expect(")")
        t = TemplateDecl(kind_tok.text, name, formals, [], [], [], name_tok)
        seen = set()
        self.skip_separators()
        while not self.at_keyword("end"):
            tok = self.tok
            if tok.kind == "ident" and tok.text in ("services", "states", "actions"):
                if tok.text in seen:
                    self.error(f"section {tok.text!r} given twice")
                seen.add(tok.text)
                self.advance()
                if tok.text == "actions":
                    t.rules.extend(self.rules())
                else:
                    target = t.services if tok.text == "services" else t.states
                    target.extend(self.name_set())
            elif tok.kind == "eof":
                self.error("unterminated template", ["end"])
            elif tok.kind == "ident":
                self.error(f"unknown keyword {tok.text!r}", ["services", "states", "actions", "end"],
                           show_found=False)
            else:
                self.error("expected a template section", ["services", "states", "actions", "end"])
            self.skip_separators()
        self.advance()
        return t

    def name_set(self) -> list[Item]:
        self.expect("{")
        items = []
        self.skip_separators()
        while not self.at("}"):
            items.append(self.item(allow_binding=False))
            if not self.accept(","):
                break
            self.skip_separators()
        self.expect("}")
        return items

    def rules(self) -> list[Rule]:
        rules = []
        self.skip_separators()
        while self.at("{") or self.at("<"):
            tok = self.tok
            rep = self.replicator()
            inputs = self.item_set()
            self.expect("->")
            outputs = self.item_set()
            rules.append(Rule(rep, tuple(inputs), tuple(outputs), tok))
            self.skip_separators()
        return rules

    def replicator(self) -> Optional[Replicator]:
        if not self.accept("<"):
            return None
        var = self.name("index variable").text
        self.expect("=")
        lo = self.integer()
        self.expect("..")
        hi = self.integer()
        self.expect(">")
        return Replicator(var, lo, hi)

    def item_set(self) -> list[Item]:
        self.expect("{")
        items = []
        self.skip_separators()
        while not self.at("}"):
            items.append(self.item(allow_binding=False))
            if not self.accept(","):
                break
            self.skip_separators()
        self.expect("}")
        return items

    def ref(self) -> Ref:
        tok = self.name()
        index = None
        if self.accept("["):
            index = self.index_expr()
            self.expect("]")
        return Ref(tok.text, index, tok)

    def index_expr(self) -> IndexExpr:
        terms = []
        sign = 1
        if self.accept("-"):
            sign = -1
        while True:
            if self.at("int"):
                terms.append((sign, int(self.advance().text)))
            elif self.at("ident"):
                terms.append((sign, self.name("index variable").text))
            else:
                self.error("expected index term", ["integer", "identifier"])
            if self.accept("+"):
                sign = 1
            elif self.accept("-"):
                sign = -1
            else:
                return IndexExpr(tuple(terms))

    def item(self, allow_binding: bool) -> Item:
        tok = self.tok
        parts = [self.ref()]
        binding = None
        if allow_binding and self.accept("("):
            actuals = []
            while not self.at(")"):
                actuals.append(self.ref())
                if not self.accept(","):
                    break
            self.expect(")")
            binding = tuple(actuals)
        while self.accept("."):
            parts.append(self.ref())
        return Item(tuple(parts), binding, tok)

    def instance_list(self) -> list[InstanceDecl]:
        decls = []
        while True:
            tok = self.name("instance name")
            size = None
            if self.accept("["):
                size = self.integer()
                self.expect("]")
            decls.append(InstanceDecl(tok.text, size, tok))
            if not self.accept(","):
                break
            if self.at("ident") and self.tok.text in KEYWORDS:
                break
        return decls

    def init_block(self) -> list[InitEntry]:
        self.expect("{")
        entries = []
        self.skip_separators()
        while not self.at("}"):
            if self.tok.kind not in ("<", "ident"):
                self.error("expected initial message or state", ["<", "identifier", "}"])
            rep = self.replicator()
            entries.append(InitEntry(rep, self.item(allow_binding=True)))
            self.skip_separators()
        self.expect("}")
        self.accept(".")
        return entries


def parse(text: str) -> Document:
    """Parse IMDS notation into a :class:`Document` (raises :class:`ParseError`)."""
    try:
        return _Parser(text).document()
    except RecursionError:  # pragma: no cover - grammar is not recursive
        raise ParseError("input nests too deeply") from None


# -- instantiation ---------------------------------------------------------

def _err(tok: Token, message: str) -> SpecError:
    return SpecError(f"{tok.line}:{tok.column}: {message}")


class _Universe:
    def __init__(self):
        self.states: dict[str, None] = {}
        self.services: dict[str, None] = {}


class _Instantiator:
    def __init__(self, doc: Document):
        self.doc = doc
        self.agents: list[str] = []
        self.servers: list[str] = []
        for decls, target in ((doc.agents, self.agents), (doc.servers, self.servers)):
            for d in decls:
                for n in d.names():
                    if n in self.agents or n in self.servers:
                        raise _err(d.token, f"instance {n} declared twice")
                    target.append(n)
        self.agent_set = set(self.agents)
        self.server_set = set(self.servers)
        self.arrays: dict[str, int] = {}
        for d in doc.agents + doc.servers:
            if d.size is not None:
                self.arrays[d.name] = d.size
        self.by_name = {t.name: t for t in doc.templates}

    def template_for(self, instance: str, kind: str) -> Optional[TemplateDecl]:
        t = self.by_name.get(instance)
        if t is None:
            t = self.by_name.get(split_index(instance)[0])
        if t is not None and t.kind == kind:
            return t
        return None

    def global_name(self, ref: Ref, env, kind: str) -> str:
        key = ref.key(env)
        pool = self.agent_set if kind == "agent" else self.server_set
        if key not in pool:
            if ref.index is not None and ref.name in self.arrays:
                raise _err(ref.token, f"index out of declared array range: {key} "
                                      f"(array {ref.name}[{self.arrays[ref.name]}])")
            raise _err(ref.token, f"unknown {kind} {key}")
        return key

    def run(self) -> SystemSpec:
        doc = self.doc
        bindings: dict[str, tuple[str, ...]] = {}
        init_states: dict[str, list[str]] = {s: [] for s in self.servers}
        init_messages: dict[str, list] = {a: [] for a in self.agents}

        for entry in doc.init:
            for env in _envs(entry.replicator):
                self.init_item(entry.item, env, bindings, init_states, init_messages)

        for t in doc.templates:
            pool = self.server_set if t.kind == "server" else self.agent_set
            if not any(self.template_for(n, t.kind) is t for n in pool):
                doc.warnings.append(f"template {t.name} has no instances")

        universes = {s: _Universe() for s in self.servers}
        templated_servers = {s for s in self.servers if self.template_for(s, "server")}
        raw_actions = []
        instance_actions: dict[str, list[int]] = {}
        for t in doc.templates:
            instances = [n for n in (self.servers if t.kind == "server" else self.agents)
                         if self.template_for(n, t.kind) is t]
            for inst in instances:
                scope = self.scope(t, inst, bindings.get(inst))
                if t.kind == "server":
                    u = universes[inst]
                    for it in t.services:
                        u.services.setdefault(self.plain_name(it, "service"), None)
                    for it in t.states:
                        u.states.setdefault(self.plain_name(it, "state"), None)
                else:
                    for section, attr in ((t.services, "services"), (t.states, "states")):
                        for it in section:
                            if len(it.parts) == 2:
                                srv = scope.resolve(it.parts[0], {}, "server")
                                getattr(universes[srv], attr).setdefault(it.parts[1].key({}), None)
                            elif len(it.parts) != 1:
                                raise _err(it.token, f"{attr} entry must be a name or server.name")
                for rule in t.rules:
                    for env in _envs(rule.replicator):
                        instance_actions.setdefault(inst, []).append(len(raw_actions))
                        raw_actions.append(self.rule(rule, env, scope))

        # Infer universes of servers that have no server template.
        def note(srv, state=None, service=None):
            if srv in templated_servers or srv not in universes:
                return
            if state is not None:
                universes[srv].states.setdefault(state, None)
            if service is not None:
                universes[srv].services.setdefault(service, None)

        for in_m, in_s, out_s, out_m in raw_actions:
            note(in_m.server, service=in_m.service)
            note(in_s.server, state=in_s.state)
            note(out_s.server, state=out_s.state)
            if out_m is not None:
                note(out_m.server, service=out_m.service)

        agents = []
        for a in self.agents:
            found = init_messages[a]
            if not found:
                raise SpecError(f"agent {a} has no initial message")
            if len(found) > 1:
                raise SpecError(f"agent {a} has more than one initial message")
            tok, srv, svc = found[0]
            if srv is None:
                candidates = []
                for in_m, _, _, out_m in raw_actions:
                    for m in (in_m, out_m):
                        if m is not None and m.agent == a and m.service == svc:
                            if m.server not in candidates:
                                candidates.append(m.server)
                if len(candidates) != 1:
                    why = "no" if not candidates else "ambiguous"
                    raise _err(tok, f"{why} server for initial message {a}.{svc}")
                srv = candidates[0]
            msg = Message(AgentId(a), ServerId(srv), ServiceId(svc))
            note(msg.server, service=msg.service)
            agents.append(AgentDecl(AgentId(a), msg))

        servers = []
        for s in self.servers:
            found = init_states[s]
            if not found:
                raise SpecError(f"server {s} has no initial state")
            if len(found) > 1:
                raise SpecError(f"server {s} has more than one initial state")
            note(s, state=found[0])
            u = universes[s]
            servers.append(ServerDecl(
                ServerId(s),
                tuple(StateId(q) for q in u.states),
                tuple(ServiceId(v) for v in u.services),
                StateId(found[0]),
            ))

        actions = tuple(ActionDef(i, *parts) for i, parts in enumerate(raw_actions))
        view = doc.templates[0].kind if doc.templates else "server"
        return SystemSpec(tuple(servers), tuple(agents), actions, source_view=view)

    def plain_name(self, item: Item, what: str) -> str:
        if len(item.parts) != 1 or item.parts[0].index is not None:
            raise _err(item.token, f"{what} names in a server template must be plain identifiers")
        return item.parts[0].name

    def init_item(self, item: Item, env, bindings, init_states, init_messages):
        head = item.parts[0]
        key = head.key(env)
        if len(item.parts) == 3:
            kind = "agent"
        elif len(item.parts) == 2:
            in_s, in_a = key in self.server_set, key in self.agent_set
            if in_s and in_a:
                raise _err(head.token, f"{key} is both an agent and a server; write a full literal")
            kind = "agent" if in_a else "server"
        else:
            raise _err(item.token, "initial item must be agent.server.service, "
                                   "agent.service or server.state")
        name = self.global_name(head, env, kind)
        if item.binding is not None:
            if name in bindings:
                raise _err(head.token, f"instance {name} bound more than once")
            if self.template_for(name, kind) is None:
                raise _err(head.token, f"{name} has no {kind} template to bind parameters to")
            actuals = []
            for ref in item.binding:
                k = ref.key(env)
                if k not in self.agent_set and k not in self.server_set:
                    self.global_name(ref, env, "server")
                actuals.append(k)
            bindings[name] = tuple(actuals)
        if kind == "server":
            init_states[name].append(item.parts[1].key(env))
        elif len(item.parts) == 3:
            srv = self.global_name(item.parts[1], env, "server")
            init_messages[name].append((item.token, srv, _service_name(item.parts[2])))
        else:
            init_messages[name].append((item.token, None, _service_name(item.parts[1])))

    def scope(self, t: TemplateDecl, instance: str, actuals) -> "_Scope":
        formal_names = []
        for f in t.formals:
            formal_names.extend((f.group, n) for n in f.names())
        if formal_names and actuals is None:
            raise _err(t.token, f"unbound formal parameters of {t.name} for instance {instance}")
        actuals = actuals or ()
        if len(actuals) != len(formal_names):
            raise _err(t.token, f"arity mismatch binding {instance}: template {t.name} takes "
                                f"{len(formal_names)} parameters, got {len(actuals)}")
        mapping = {}
        for (group, formal), actual in zip(formal_names, actuals):
            pool = self.agent_set if group == "agents" else self.server_set
            if actual not in pool:
                raise _err(t.token, f"actual {actual} for formal {formal} of {t.name} "
                                    f"is not one of the declared {group}")
            mapping[formal] = (group, actual)
        sizes = {f.name: f.size for f in t.formals if f.size is not None}
        return _Scope(self, t, instance, mapping, sizes)

    def rule(self, rule: Rule, env, scope: "_Scope"):
        msgs_in, states_in = _split(rule.inputs)
        msgs_out, states_out = _split(rule.outputs)
        tok = rule.token
        if len(msgs_in) != 1 or len(states_in) != 1:
            raise _err(tok, "action input must be exactly one message and one server state")
        if len(states_out) != 1:
            raise _err(tok, "action output must contain exactly one continuation state")
        if len(msgs_out) > 1:
            raise _err(tok, "action output contains several messages "
                            "(dynamic creation unsupported)")
        in_m = scope.message(msgs_in[0], env)
        in_s = scope.state(states_in[0], env)
        out_s = scope.state(states_out[0], env)
        out_m = scope.message(msgs_out[0], env) if msgs_out else None
        return in_m, in_s, out_s, out_m


class _Scope:
    def __init__(self, inst: _Instantiator, t: TemplateDecl, instance: str, mapping, sizes):
        self.inst = inst
        self.template = t
        self.instance = instance
        self.mapping = mapping
        self.sizes = sizes

    def resolve(self, ref: Ref, env, kind: str) -> str:
        key = ref.key(env)
        group = "agents" if kind == "agent" else "servers"
        if key in self.mapping:
            g, actual = self.mapping[key]
            if g != group:
                raise _err(ref.token, f"{key} is an {g[:-1]} parameter, used as {kind}")
            return actual
        if ref.index is not None and ref.name in self.sizes:
            raise _err(ref.token, f"index out of declared array range: {key} "
                                  f"(parameter {ref.name}[{self.sizes[ref.name]}])")
        if key == self.template.name:
            key = self.instance
            pool = self.inst.agent_set if kind == "agent" else self.inst.server_set
            if key not in pool:
                raise _err(ref.token, f"{ref.name} refers to {self.template.kind} "
                                      f"{self.instance}, used as {kind}")
            return key
        return self.inst.global_name(ref, env, kind)

    def message(self, item: Item, env) -> Message:
        a, s, v = item.parts
        return Message(AgentId(self.resolve(a, env, "agent")),
                       ServerId(self.resolve(s, env, "server")),
                       ServiceId(_service_name(v)))

    def state(self, item: Item, env) -> ServerState:
        s, q = item.parts
        return ServerState(ServerId(self.resolve(s, env, "server")), StateId(_service_name(q)))


def _service_name(ref: Ref) -> str:
    if ref.index is not None:
        raise _err(ref.token, f"service and state names cannot be indexed: {ref.name}[...]")
    return ref.name


def _split(items):
    msgs, states = [], []
    for it in items:
        if len(it.parts) == 3:
            msgs.append(it)
        elif len(it.parts) == 2:
            states.append(it)
        else:
            raise _err(it.token, "expected agent.server.service or server.state")
    return msgs, states


def _envs(rep: Optional[Replicator]):
    if rep is None:
        return [{}]
    return [{rep.var: j} for j in rep.values()]


def instantiate(doc: Document) -> SystemSpec:
    """Expand replicators and bindings into a flat :class:`SystemSpec`."""
    return _Instantiator(doc).run()


def load(text: str) -> SystemSpec:
    """Parse and instantiate IMDS text."""
    return instantiate(parse(text))


# -- rendering -------------------------------------------------------------

_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\[\d+\])?$")


def _check_name(name: str, allow_index=True) -> str:
    m = _NAME.match(name)
    if not m or (m.group(1) and not allow_index) or split_index(name)[0] in KEYWORDS:
        raise RenderError(f"identifier {name!r} cannot be written in IMDS notation")
    return name


def _instance_decls(names) -> str:
    out = []
    i = 0
    names = list(names)
    while i < len(names):
        base, idx = split_index(names[i])
        if idx is None:
            out.append(_check_name(names[i]))
            i += 1
            continue
        if idx != 1:
            raise RenderError(f"array instance {names[i]} is not part of a 1..n run")
        n = 1
        while i + n < len(names) and split_index(names[i + n]) == (base, n + 1):
            n += 1
        out.append(f"{_check_name(base, allow_index=False)}[{n}]")
        i += n
    return ", ".join(out)


def _block(kind, name, services, states, rules) -> list[str]:
    lines = [f"{kind}: {name},",
             f"    services {{{', '.join(services)}}},",
             f"    states {{{', '.join(states)}}},"]
    if rules:
        lines.append("    actions")
        lines.extend(f"        {r}," for r in rules)
    lines.append("end;")
    lines.append("")
    return lines


def render(spec: SystemSpec, view: str = "server") -> str:
    """Render ``spec`` as flat notation grouped by server or by agent."""
    if view not in ("server", "agent"):
        raise ValueError(f"unknown view {view!r}")
    lines = [f"// flat {view} view"]
    for s in spec.servers:
        _check_name(s.name)
        for x in s.states + s.services:
            _check_name(x, allow_index=False)
    if view == "server":
        for s in spec.servers:
            rules = [str(a) for a in spec.actions if a.server == s.name]
            lines += _block("server", s.name, s.services, s.states, rules)
    else:
        visited = {}
        for a in spec.agents:
            order = {}
            order.setdefault(a.initial.server, None)
            for act in spec.actions:
                if act.agent == a.name:
                    order.setdefault(act.in_message.server, None)
                    if act.out_message is not None:
                        order.setdefault(act.out_message.server, None)
            visited[a.name] = list(order)
        reached = {s for v in visited.values() for s in v}
        for s in spec.servers:
            if s.name not in reached:
                lines += _block("server", s.name, s.services, s.states, [])
        for a in spec.agents:
            _check_name(a.name)
            svcs, sts = [], []
            for srv in visited[a.name]:
                decl = spec.server(srv)
                svcs += [f"{srv}.{v}" for v in decl.services]
                sts += [f"{srv}.{q}" for q in decl.states]
            rules = [str(act) for act in spec.actions if act.agent == a.name]
            lines += _block("agent", a.name, svcs, sts, rules)
    if spec.agents:
        lines.append(f"agents: {_instance_decls(a.name for a in spec.agents)};")
    if spec.servers:
        lines.append(f"servers: {_instance_decls(s.name for s in spec.servers)};")
    lines.append("")
    lines.append("init -> {")
    for a in spec.agents:
        lines.append(f"    {a.initial},")
    for s in spec.servers:
        lines.append(f"    {s.name}.{s.initial},")
    lines.append("}.")
    return "\n".join(lines) + "\n"
