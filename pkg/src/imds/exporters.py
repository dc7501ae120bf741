"""Serializers: Graphviz DOT for the LTS, Promela for the model, JSON/text reports."""

from __future__ import annotations

import json
from typing import Optional

from .detectors import COMMUNICATION, RESOURCE, TERMINATION, TOTAL, Report, Trace, TraceStep, Verdict
from .errors import RenderError
from .lts import Lts, terminal_states
from .model import SystemSpec, split_index

DOT_MAX_STATES = 2000


# -- DOT -------------------------------------------------------------------

def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(lts: Lts, max_states: int = DOT_MAX_STATES, label_mode: str = "index") -> str:
    """Graphviz digraph with one node per state and one edge per transition.

    ``label_mode`` is ``"index"`` (state numbers) or ``"config"`` (full
    configurations).  Stuck terminals are red octagons, clean terminals
    green double circles.
    """
    if label_mode not in ("index", "config"):
        raise ValueError(f"unknown label mode {label_mode!r}")
    if lts.n_states > max_states:
        raise RenderError(f"too large to render: {lts.n_states} states (limit {max_states})")
    term = terminal_states(lts)
    lines = ["digraph lts {", "  rankdir=LR;", "  node [shape=circle];"]
    for i, c in enumerate(lts.states):
        label = str(i) if label_mode == "index" else f"{i}: {lts.spec.describe(c)}"
        attrs = [f"label={_dot_quote(label)}"]
        if label_mode == "config":
            attrs.append("shape=box")
        if i == 0:
            attrs.append("style=bold")
        if i in term.stuck:
            attrs += ["shape=doubleoctagon", "color=red"]
        elif i in term.clean:
            attrs += ["shape=doublecircle", "color=darkgreen"]
        lines.append(f"  s{i} [{', '.join(attrs)}];")
    for src, act, dst in lts.transitions:
        lines.append(f"  s{src} -> s{dst} [label={_dot_quote(lts.action_label(act))}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- Promela ---------------------------------------------------------------

PROMELA_KEYWORDS = frozenset("""
    active assert atomic bit bool break byte chan d_step D_proctype do else empty
    enabled eval false fi for full get_priority goto hidden if in init inline int len
    local mtype nempty never nfull notrace np_ od of pc_value printf printm priority
    proctype provided run select set_priority short show skip timeout trace true
    typedef unless unsigned xr xs c_code c_decl c_expr c_state c_track
""".split())
_LOCALS = frozenset({"mes", "state", "num", "inival", "none"})


class _Names:
    def __init__(self, spec: SystemSpec):
        ids = [str(a.name) for a in spec.agents] + [str(s.name) for s in spec.servers]
        plain = {n: n.replace("[", "").replace("]", "") for n in ids}
        counts: dict[str, int] = {}
        for v in plain.values():
            counts[v] = counts.get(v, 0) + 1
        self.ident = {}
        for n in ids:
            base, idx = split_index(n)
            v = plain[n]
            if counts[v] > 1 and idx is not None:
                v = f"{base}_{idx}"
            self.ident[n] = v
        reserved = PROMELA_KEYWORDS | _LOCALS
        self.service = {}
        for v in spec.service_ids:
            self.service[str(v)] = f"{v}_" if v in reserved else str(v)
        taken = set(self.service.values())
        self.state = {}
        for q in spec.state_ids:
            self.state[str(q)] = f"{q}_st" if (q in reserved or q in taken) else str(q)

    def __call__(self, name) -> str:
        return self.ident[str(name)]


class _Instance:
    def __init__(self, spec: SystemSpec, names: _Names, decl):
        self.decl = decl
        name = decl.name
        self.in_agents = [a.name for a in spec.agents
                          if any(m.server == name and m.agent == a.name for m in spec.messages)]
        self.in_channels = [(str(a), str(name)) for a in self.in_agents]
        self.out_channels: list[tuple[str, str]] = []
        branches = []
        for a in self.in_agents:
            slot = []
            for act in spec.actions:
                if act.server != name or act.agent != a:
                    continue
                out = None
                if act.out_message is not None:
                    key = (str(act.out_message.agent), str(act.out_message.server))
                    if key in self.in_channels:
                        ref = ("in", self.in_channels.index(key))
                    else:
                        if key not in self.out_channels:
                            self.out_channels.append(key)
                        ref = ("out", self.out_channels.index(key))
                    out = (ref, str(act.out_message.service))
                slot.append((str(act.in_message.service), str(act.in_state.state),
                             str(act.out_state.state), out))
            branches.append(tuple(slot))
        self.shape = (tuple(branches), len(self.out_channels))


def _group_base(names: _Names, name: str) -> str:
    base, idx = split_index(name)
    if idx is None:
        return names(name)
    return base.replace("[", "").replace("]", "")


def _channel(names: _Names, key) -> str:
    return f"{names(key[0])}_{names(key[1])}"


def to_promela(spec: SystemSpec) -> str:
    """Promela model: one proctype per server template, one channel per
    (agent, server) pair, tracking variables for LTL macros, and an init
    process that starts every server and sends the initial messages."""
    names = _Names(spec)
    instances = [_Instance(spec, names, s) for s in spec.servers]

    # Group instances sharing a base name and an identical action shape.
    groups: list[tuple[str, list[_Instance]]] = []
    for inst in instances:
        base = _group_base(names, str(inst.decl.name))
        for gname, members in groups:
            if gname.split("__")[0] == base and members[0].shape == inst.shape:
                members.append(inst)
                break
        else:
            same_base = sum(1 for g, _ in groups if g.split("__")[0] == base)
            groups.append((base if not same_base else f"{base}__{same_base + 1}", [inst]))

    out = []
    svcs = ["none"] + [names.service[str(v)] for v in spec.service_ids]
    out.append(f"mtype = {{{', '.join(svcs)}}};")
    out.append("")
    for i, q in enumerate(spec.state_ids, start=1):
        out.append(f"#define {names.state[str(q)]} {i}")
    out.append("")

    for gname, members in groups:
        pname = gname.replace("__", "_")
        first = members[0]
        size = len(members) + 1
        slots = [names(a) for a in first.in_agents]
        serv = [f"{pname}_{s}serv" for s in slots]
        act_var = f"{pname}act"
        out.append(f"// {pname}: {', '.join(str(m.decl.name) for m in members)}")
        if serv:
            out.append(f"mtype {', '.join(f'{v}[{size}]' for v in serv)};")
        out.append(f"int {act_var}[{size}];")
        for num, inst in enumerate(members, start=1):
            iname = names(inst.decl.name)
            for k, a in enumerate(inst.in_agents):
                out.append(f"#define {iname}c{names(a)} ({serv[k]}[{num}] != none)")
            macro = f"{iname}act" if f"{iname}act" != act_var else f"{iname}_act"
            out.append(f"#define {macro} ({act_var}[{num}] == 1)")
        params = slots + [_channel(names, key) for key in first.out_channels]
        chan_decl = f"; chan {', '.join(params)}" if params else ""
        out.append(f"proctype {pname}(int num; int inival{chan_decl})")
        out.append("{")
        out.append("    mtype mes;")
        out.append("    int state;")
        out.append("    state = inival;")
        for v in serv:
            out.append(f"    {v}[num] = none;")
        out.append(f"    {act_var}[num] = 0;")
        if slots:
            out.append("    do")
            for k, slot in enumerate(first.shape[0]):
                ch = slots[k]
                out.append(f"    :: {ch}?<mes> -> {serv[k]}[num] = mes;")
                out.append("        if")
                for service, q_in, q_out, result in slot:
                    out.append(f"        :: (mes == {names.service[service]}) && "
                               f"(state == {names.state[q_in]}) ->")
                    tail = f"{serv[k]}[num] = none; {act_var}[num] = 0"
                    if result is not None:
                        (where, idx), svc = result
                        target = slots[idx] if where == "in" else params[len(slots) + idx]
                        tail += f"; {target}!{names.service[svc]}"
                    out.append(f"            {ch}?mes; {act_var}[num] = 1; "
                               f"state = {names.state[q_out]};")
                    out.append(f"            {tail}")
                out.append("        :: else -> skip")
                out.append("        fi")
            out.append("    od")
        out.append("}")
        out.append("")

    channels = []
    for s in spec.servers:
        for a in spec.agents:
            key = (str(a.name), str(s.name))
            if any(m.server == s.name and m.agent == a.name for m in spec.messages):
                channels.append(key)
    out.append("init {")
    for key in channels:
        out.append(f"    chan {_channel(names, key)} = [1] of {{mtype}};")
    if channels:
        out.append("")
    for gname, members in groups:
        pname = gname.replace("__", "_")
        for num, inst in enumerate(members, start=1):
            args = [str(num), names.state[str(inst.decl.initial)]]
            args += [_channel(names, key) for key in inst.in_channels]
            args += [_channel(names, key) for key in inst.out_channels]
            out.append(f"    run {pname}({', '.join(args)});")
    if spec.agents:
        out.append("")
    for a in spec.agents:
        m = a.initial
        out.append(f"    {_channel(names, (str(m.agent), str(m.server)))}!{names.service[str(m.service)]};")
    out.append("}")
    return "\n".join(out) + "\n"


# -- reports ---------------------------------------------------------------

_KIND_ORDER = (RESOURCE, COMMUNICATION, TERMINATION, TOTAL)


def _trace_dict(t: Optional[Trace]):
    if t is None:
        return None
    return {
        "kind": t.kind,
        "start": t.start,
        "stem": [s.as_dict() for s in t.stem],
        "cycle": None if t.cycle is None else [s.as_dict() for s in t.cycle],
    }


def _verdict_dict(v: Verdict) -> dict:
    return {
        "subject": v.subject,
        "holds": v.holds,
        "formula": v.formula,
        "reading": v.reading,
        "diagnosis": v.diagnosis,
        "details": list(v.details),
        "evidence": _trace_dict(v.evidence),
    }


def report_dict(report: Report) -> dict:
    return {
        "tool_version": report.tool_version,
        "spec_digest": report.spec_digest,
        "lts": dict(report.stats),
        "terminal_states": dict(report.terminal),
        "verdicts": {k: [_verdict_dict(v) for v in report.of_kind(k)] for k in _KIND_ORDER},
    }


def report_json(report: Report) -> str:
    """Canonical JSON: sorted keys, two-space indent, LF line endings."""
    return json.dumps(report_dict(report), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _trace_from(d) -> Optional[Trace]:
    if d is None:
        return None
    steps = lambda xs: tuple(TraceStep(s["state"], s["action"], s["text"], s["target"])  # noqa: E731
                             for s in xs)
    return Trace(steps(d["stem"]), None if d["cycle"] is None else steps(d["cycle"]), d["start"])


def report_from_json(text: str) -> Report:
    data = json.loads(text)
    verdicts = []
    for kind in _KIND_ORDER:
        for v in data["verdicts"].get(kind, []):
            verdicts.append(Verdict(kind, v["subject"], v["holds"], v["formula"], v["diagnosis"],
                                    _trace_from(v["evidence"]), tuple(v["details"])))
    return Report(data["tool_version"], data["spec_digest"], data["lts"], tuple(verdicts),
                  data["terminal_states"])


_TITLES = {
    RESOURCE: ("resource deadlock in {}", "Deadlock over resources (per traveler)"),
    COMMUNICATION: ("communication deadlock in {}", "Communication deadlock (per resident)"),
    TERMINATION: ("termination of {}", "Traveler termination"),
    TOTAL: ("total deadlock", "Total deadlock (state with no future)"),
}


def _trace_lines(t: Trace, indent: str) -> list[str]:
    lines = []
    label = "witness" if t.kind == "path" else "counterexample"
    lines.append(f"{indent}{label}: {len(t.stem)} step(s) from state {t.start}")
    for s in t.stem:
        lines.append(f"{indent}  {s.state:>5} -> {s.target:<5} {s.text}")
    if t.cycle is not None:
        lines.append(f"{indent}  cycle, repeated forever:")
        for s in t.cycle:
            lines.append(f"{indent}  {s.state:>5} -> {s.target:<5} {s.text}")
    return lines


def report_text(report: Report, evidence: bool = True) -> str:
    stats = report.stats
    term = report.terminal
    out = [f"LTS: {stats['state_count']} states, {stats['transition_count']} transitions; "
           f"terminal states: {term.get('clean', 0)} clean, {term.get('stuck', 0)} stuck"]
    for kind in _KIND_ORDER:
        verdicts = report.of_kind(kind)
        if not verdicts:
            continue
        line, heading = _TITLES[kind]
        out.append("")
        out.append(f"{heading}; TRUE means {verdicts[0].reading}")
        for v in verdicts:
            name = line.format(v.subject)
            out.append(f"  {name}: {'TRUE' if v.holds else 'FALSE'} ({v.diagnosis})")
            out.append(f"    formula: {v.formula}")
            for d in v.details:
                out.append(f"    {d}")
            if evidence and v.evidence is not None:
                out.extend(_trace_lines(v.evidence, "    "))
    return "\n".join(out) + "\n"
