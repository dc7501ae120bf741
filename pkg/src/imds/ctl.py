"""CTL model checking by fixpoint labeling, with witnesses and lassos.

Formulas are evaluated over a graph in which every terminal state carries an
implicit self-loop, so that ``EG``/``AF`` are meaningful on maximal finite
paths.  Label sets are boolean numpy arrays indexed by state.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from typing import Iterator, Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import NoWitness, ParseError, UnknownIdentifier

LabelSet = np.ndarray


# -- formulas --------------------------------------------------------------

class Formula:
    def __and__(self, other):
        return And(self, other)

    def __or__(self, other):
        return Or(self, other)

    def __invert__(self):
        return Not(self)


@dataclass(frozen=True)
class TrueF(Formula):
    def __str__(self):
        return "true"


@dataclass(frozen=True)
class FalseF(Formula):
    def __str__(self):
        return "false"


@dataclass(frozen=True)
class Terminal(Formula):
    def __str__(self):
        return "terminal"


@dataclass(frozen=True)
class Prop(Formula):
    """Named label of a :class:`Kripke` structure."""

    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class PendingAgent(Formula):
    agent: str

    def __str__(self):
        return f"pending(agent:{self.agent})"


@dataclass(frozen=True)
class PendingAtServer(Formula):
    server: str

    def __str__(self):
        return f"pending(server:{self.server})"


@dataclass(frozen=True)
class EnabledAgentAction(Formula):
    agent: str

    def __str__(self):
        return f"enabled(agent:{self.agent})"


@dataclass(frozen=True)
class EnabledServerAction(Formula):
    server: str

    def __str__(self):
        return f"enabled(server:{self.server})"


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula

    def __str__(self):
        return f"!{self.arg}"


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return f"({self.left} & {self.right})"


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return f"({self.left} | {self.right})"


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return f"({self.left} -> {self.right})"


@dataclass(frozen=True)
class _Unary(Formula):
    arg: Formula

    def __str__(self):
        return f"{type(self).__name__}{_wrap(self.arg)}"


class EX(_Unary):
    pass


class AX(_Unary):
    pass


class EF(_Unary):
    pass


class AF(_Unary):
    pass


class EG(_Unary):
    pass


class AG(_Unary):
    pass


@dataclass(frozen=True)
class EU(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return f"E[{self.left} U {self.right}]"


@dataclass(frozen=True)
class AU(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return f"A[{self.left} U {self.right}]"


def _wrap(f: Formula) -> str:
    text = str(f)
    return text if text.startswith("(") else f"({text})"


def subformulas(f: Formula) -> Iterator[Formula]:
    yield f
    for name in ("arg", "left", "right"):
        child = getattr(f, name, None)
        if isinstance(child, Formula):
            yield from subformulas(child)


# -- formula syntax --------------------------------------------------------

_FTOKEN = re.compile(
    r"\s*(?:(?P<arrow>->)|(?P<punct>[()\[\]!~&|:,])|(?P<ident>[A-Za-z_][A-Za-z0-9_]*(?:\[\d+\])?))"
)
_UNARY = {"EX": EX, "AX": AX, "EF": EF, "AF": AF, "EG": EG, "AG": AG}
_ATOMS = {("pending", "agent"): PendingAgent, ("pending", "server"): PendingAtServer,
          ("enabled", "agent"): EnabledAgentAction, ("enabled", "server"): EnabledServerAction}


def parse_formula(text: str) -> Formula:
    """Parse the textual CTL syntax, e.g. ``EF(pending(agent:A[1]) & AG !enabled(agent:A[1]))``."""
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _FTOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r} in formula", 1, pos + 1)
        tokens.append((m.group(m.lastgroup), m.start(m.lastgroup) + 1))
        pos = m.end()
    tokens.append(("", len(text) + 1))
    p = _FormulaParser(tokens)
    f = p.implication()
    if p.tok:
        p.error("unexpected trailing input")
    return f


class _FormulaParser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    @property
    def tok(self) -> str:
        return self.tokens[self.i][0]

    def error(self, message, expected=()):
        col = self.tokens[self.i][1]
        raise ParseError(f"{message} in formula", 1, col, expected)

    def take(self, expected=None) -> str:
        tok = self.tok
        if expected is not None and tok != expected:
            self.error(f"expected {expected!r}", [expected])
        if not tok:
            self.error("unexpected end")
        self.i += 1
        return tok

    def implication(self) -> Formula:
        left = self.disjunction()
        if self.tok == "->":
            self.take()
            return Implies(left, self.implication())
        return left

    def disjunction(self) -> Formula:
        f = self.conjunction()
        while self.tok == "|":
            self.take()
            f = Or(f, self.conjunction())
        return f

    def conjunction(self) -> Formula:
        f = self.unary()
        while self.tok == "&":
            self.take()
            f = And(f, self.unary())
        return f

    def unary(self) -> Formula:
        tok = self.tok
        if tok in ("!", "~", "not"):
            self.take()
            return Not(self.unary())
        if tok in _UNARY:
            self.take()
            return _UNARY[tok](self.unary())
        if tok in ("E", "A") and self.tokens[self.i + 1][0] == "[":
            self.take()
            self.take("[")
            left = self.implication()
            self.take("U")
            right = self.implication()
            self.take("]")
            return EU(left, right) if tok == "E" else AU(left, right)
        return self.atom()

    def atom(self) -> Formula:
        tok = self.tok
        if tok == "(":
            self.take()
            f = self.implication()
            self.take(")")
            return f
        if tok == "true":
            self.take()
            return TrueF()
        if tok == "false":
            self.take()
            return FalseF()
        if tok == "terminal":
            self.take()
            return Terminal()
        if tok in ("pending", "enabled"):
            self.take()
            self.take("(")
            kind = self.take()
            if (tok, kind) not in _ATOMS:
                self.i -= 1
                self.error("expected 'agent' or 'server'", ["agent", "server"])
            self.take(":")
            name = self.take()
            self.take(")")
            return _ATOMS[tok, kind](name)
        if tok and re.match(r"[A-Za-z_]", tok):
            self.take()
            return Prop(tok)
        self.error("expected a formula", ["(", "!", "EF", "AG", "true", "pending", "enabled"])


# -- models ----------------------------------------------------------------

class Kripke:
    """Plain labeled graph; used for randomized testing of the engine."""

    def __init__(self, n_states: int, edges, labels: Optional[dict] = None):
        self.n_states = n_states
        edges = sorted(edges)
        self.src = np.array([e[0] for e in edges], dtype=np.int64)
        self.dst = np.array([e[1] for e in edges], dtype=np.int64)
        self.act = np.arange(len(edges), dtype=np.int64)
        self.labels = {k: np.asarray(v, dtype=bool) for k, v in (labels or {}).items()}
        self.terminal = np.bincount(self.src, minlength=n_states) == 0
        self._succ = [[] for _ in range(n_states)]
        for k, (u, v) in enumerate(edges):
            self._succ[u].append((k, v))

    def successors(self, i: int):
        return list(self._succ[i])


class _Graph:
    """Totalized graph with the reversed edges in CSR form (row = target)."""

    def __init__(self, model):
        n = model.n_states
        loops = np.flatnonzero(model.terminal)
        self.n = n
        self.src = np.concatenate([model.src, loops])
        self.dst = np.concatenate([model.dst, loops])
        order = np.argsort(self.dst, kind="stable")
        self.pred_src = self.src[order]
        self.pred_row = self.dst[order]
        off = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.dst, minlength=n), out=off[1:])
        self.pred_off = off

    def reverse(self, through: Optional[LabelSet] = None, sources: Optional[LabelSet] = None):
        """Reversed graph keeping edges whose source lies in ``through``.

        With ``sources`` an extra vertex ``n`` points at every source state.
        """
        n = self.n
        if through is None:
            indices, counts = self.pred_src, np.diff(self.pred_off)
        else:
            keep = through[self.pred_src]
            indices = self.pred_src[keep]
            counts = np.bincount(self.pred_row[keep], minlength=n)
        size = n
        if sources is not None:
            extra = np.flatnonzero(sources)
            indices = np.concatenate([indices, extra])
            counts = np.concatenate([counts, [len(extra)]])
            size = n + 1
        indptr = np.zeros(size + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        data = np.ones(len(indices), dtype=np.int8)
        return sp.csr_matrix((data, indices, indptr), shape=(size, size))


def _graph(model) -> _Graph:
    g = getattr(model, "_ctl_graph", None)
    if g is None:
        g = _Graph(model)
        model._ctl_graph = g
    return g


def _reached(order, n: int) -> LabelSet:
    out = np.zeros(n + 1, dtype=bool)
    out[order] = True
    return out[:n]


def ex(model, f: LabelSet) -> LabelSet:
    g = _graph(model)
    out = np.zeros(g.n, dtype=bool)
    out[g.src[f[g.dst]]] = True
    return out


def eu(model, f: LabelSet, target: LabelSet) -> LabelSet:
    """Least fixpoint: backward search from ``target`` through ``f`` states."""
    g = _graph(model)
    if not target.any():
        return target.copy()
    m = g.reverse(through=f & ~target, sources=target)
    order = breadth_first_order(m, g.n, directed=True, return_predecessors=False)
    return _reached(order, g.n) | target


def eg(model, f: LabelSet) -> LabelSet:
    """Greatest fixpoint: states with an infinite path inside ``f``.

    Such a path ends in a strongly connected part of the ``f``-subgraph that
    carries a cycle, so ``EG f = E[f U core]`` with ``core`` the states of
    non-trivial components (a terminal state's implicit self-loop counts).
    """
    g = _graph(model)
    if not f.any():
        return f.copy()
    inner = f[g.src] & f[g.dst]
    rows, cols = g.dst[inner], g.src[inner]
    m = sp.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(g.n, g.n))
    _, comp = connected_components(m, directed=True, connection="strong")
    sizes = np.bincount(comp[f], minlength=comp.max() + 1)
    core = f & (sizes[comp] > 1)
    core[rows[rows == cols]] = True
    return eu(model, f, core)


def ag_direct(model, f: LabelSet) -> LabelSet:
    """``AG f`` as ``gfp Z. f & AX Z``: drop every state with a path to ``!f``.

    Searches the unrestricted reversed graph from each violating state
    separately from the ``EF`` route, as a cross-check.
    """
    g = _graph(model)
    bad = ~f
    if not bad.any():
        return f.copy()
    m = g.reverse(sources=bad)
    order = breadth_first_order(m, g.n, directed=True, return_predecessors=False)
    return ~_reached(order, g.n) & f


def kleene_eu(model, f: LabelSet, target: LabelSet) -> Iterator[LabelSet]:
    """Successive approximations ``Z_{k+1} = target | (f & EX Z_k)``."""
    z = target.copy()
    yield z
    while True:
        nxt = target | (f & ex(model, z))
        if np.array_equal(nxt, z):
            return
        z = nxt
        yield z


def kleene_eg(model, f: LabelSet) -> Iterator[LabelSet]:
    """Successive approximations ``Z_{k+1} = f & EX Z_k`` from ``Z_0 = f``."""
    z = f.copy()
    yield z
    while True:
        nxt = f & ex(model, z)
        if np.array_equal(nxt, z):
            return
        z = nxt
        yield z


def _atom(model, f: Formula) -> LabelSet:
    if isinstance(f, Prop):
        labels = getattr(model, "labels", None)
        if labels is None or f.name not in labels:
            raise UnknownIdentifier(f"unknown proposition {f.name}")
        return labels[f.name].copy()
    if isinstance(f, Terminal):
        return model.terminal.copy()
    spec = getattr(model, "spec", None)
    if spec is None:
        raise UnknownIdentifier(f"{f} needs an IMDS transition system")
    from .model import resident_of, traveler_of

    if isinstance(f, PendingAgent):
        return model.pending_agent[:, spec.agent_ordinal(f.agent)].copy()
    if isinstance(f, PendingAtServer):
        return model.pending_at_server[:, spec.server_ordinal(f.server)].copy()
    if isinstance(f, EnabledAgentAction):
        return model.enabled_for(traveler_of(spec, f.agent).actions)
    if isinstance(f, EnabledServerAction):
        return model.enabled_for(resident_of(spec, f.server).actions)
    raise TypeError(f"not a formula: {f!r}")


def evaluate(model, f: Formula, cache: Optional[dict] = None) -> LabelSet:
    """Label set of ``f`` (states where it holds); fresh array per call."""
    if cache is None:
        cache = {}
    return _eval(model, f, cache).copy()


def _eval(model, f: Formula, cache: dict) -> LabelSet:
    hit = cache.get(f)
    if hit is not None:
        return hit
    n = model.n_states
    r = lambda x: _eval(model, x, cache)  # noqa: E731
    if isinstance(f, TrueF):
        out = np.ones(n, dtype=bool)
    elif isinstance(f, FalseF):
        out = np.zeros(n, dtype=bool)
    elif isinstance(f, Not):
        out = ~r(f.arg)
    elif isinstance(f, And):
        out = r(f.left) & r(f.right)
    elif isinstance(f, Or):
        out = r(f.left) | r(f.right)
    elif isinstance(f, Implies):
        out = ~r(f.left) | r(f.right)
    elif isinstance(f, EX):
        out = ex(model, r(f.arg))
    elif isinstance(f, AX):
        out = ~ex(model, ~r(f.arg))
    elif isinstance(f, EF):
        out = eu(model, np.ones(n, dtype=bool), r(f.arg))
    elif isinstance(f, AG):
        out = ~eu(model, np.ones(n, dtype=bool), ~r(f.arg))
    elif isinstance(f, EG):
        out = eg(model, r(f.arg))
    elif isinstance(f, AF):
        out = ~eg(model, ~r(f.arg))
    elif isinstance(f, EU):
        out = eu(model, r(f.left), r(f.right))
    elif isinstance(f, AU):
        left, right = r(f.left), r(f.right)
        bad = eu(model, ~right, ~left & ~right) | eg(model, ~right)
        out = ~bad
    else:
        out = _atom(model, f)
    cache[f] = out
    return out


def check_duality(model, f: LabelSet) -> None:
    """Runtime self-test: ``AG f`` computed directly equals ``!EF !f``."""
    via_ef = ~eu(model, np.ones(model.n_states, dtype=bool), ~f)
    if not np.array_equal(ag_direct(model, f), via_ef):
        raise AssertionError("CTL self-test failed: AG f differs from !EF !f")


# -- evidence --------------------------------------------------------------

@dataclass(frozen=True)
class Step:
    source: int
    action: Optional[int]  # None marks the implicit self-loop of a terminal state
    target: int


@dataclass(frozen=True)
class Path:
    start: int
    steps: tuple[Step, ...] = ()

    @property
    def end(self) -> int:
        return self.steps[-1].target if self.steps else self.start

    @property
    def states(self) -> list[int]:
        return [self.start] + [s.target for s in self.steps]

    def __len__(self):
        return len(self.steps)


@dataclass(frozen=True)
class Lasso:
    stem: Path
    cycle: tuple[Step, ...]

    @property
    def loop_state(self) -> int:
        return self.stem.end


def witness_ef(model, target: LabelSet, start: int = 0) -> Path:
    """Shortest path from ``start`` into ``target`` (BFS over real edges)."""
    if target[start]:
        return Path(start)
    parent = {start: None}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for action, v in model.successors(u):
            if v in parent:
                continue
            parent[v] = (u, action)
            if target[v]:
                steps = []
                while parent[v] is not None:
                    p, a = parent[v]
                    steps.append(Step(p, a, v))
                    v = p
                return Path(start, tuple(reversed(steps)))
            queue.append(v)
    raise NoWitness("no witness: target is unreachable")


def lasso_counterexample(model, bad_inv: LabelSet, prefer: Optional[LabelSet] = None,
                         start: int = 0) -> Lasso:
    """Stem into a state from which some infinite path stays in ``bad_inv``.

    With ``prefer`` the stem aims at such a state inside ``prefer`` when one
    is reachable.  The cycle follows the lowest-numbered action that stays in
    the region; a terminal state closes with its implicit self-loop.
    """
    region = eg(model, bad_inv)
    stem = None
    if prefer is not None and (region & prefer).any():
        try:
            stem = witness_ef(model, region & prefer, start)
        except NoWitness:
            stem = None
    if stem is None:
        try:
            stem = witness_ef(model, region, start)
        except NoWitness:
            raise NoWitness("no counterexample: no reachable path stays in the region") from None
    steps = list(stem.steps)
    seen = {stem.end: 0}
    walk: list[Step] = []
    cur = stem.end
    while True:
        if model.terminal[cur]:
            loop_at, cycle = cur, [Step(cur, None, cur)]
            break
        action, nxt = next((a, v) for a, v in model.successors(cur) if region[v])
        walk.append(Step(cur, action, nxt))
        if nxt in seen:
            loop_at = nxt
            cycle = walk[seen[nxt]:]
            walk = walk[:seen[nxt]]
            break
        seen[nxt] = len(walk)
        cur = nxt
    steps.extend(walk)
    stem = Path(stem.start, tuple(steps))
    assert stem.end == loop_at
    return Lasso(stem, tuple(cycle))


Evidence = Union[Path, Lasso, None]
