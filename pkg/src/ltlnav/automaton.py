"""Deterministic Rabin automata for navigation-style LTL tasks.

Supports a template fragment (conjunctions of reach, safety, recurrence and
ordering constraints) compiled compositionally, plus import/export of a HOA
v1 subset for anything produced by external translators. Pruning removes
transitions on physically impossible symbols and computes the hop distance
from every state to the accepting sets.
"""
from __future__ import annotations

import itertools
import math
import re
from collections import deque
from dataclasses import dataclass, field

from . import ltl
from .ltl import Formula, LassoWord


class UnsupportedFragment(ValueError):
    """Formula outside the compilable template fragment."""


class HOAError(ValueError):
    pass


class MalformedHeader(HOAError):
    pass


class UnsupportedAcceptance(HOAError):
    pass


class NondeterminismDetected(HOAError):
    pass


class IncompletenessDetected(HOAError):
    pass


class InfeasibleTask(ValueError):
    """The initial state cannot reach acceptance in the pruned automaton."""


def all_symbols(ap: tuple) -> list[frozenset]:
    """Enumerate 2^AP in a fixed order (subset bitmask order over ap)."""
    out = []
    for bits in range(1 << len(ap)):
        out.append(frozenset(a for i, a in enumerate(ap) if bits >> i & 1))
    return out


@dataclass
class DRA:
    """Deterministic Rabin automaton with guard-labelled edges.

    edges[q] is a list of (guard, successor) with guards as boolean
    formulas over ap; for every state and symbol exactly one guard holds.
    pairs is the Rabin condition [(G_i, B_i), ...]: a run is accepting iff
    for some i it visits G_i infinitely often and B_i finitely often.
    """

    ap: tuple
    n_states: int
    initial: int
    edges: list
    pairs: list

    def step(self, q: int, symbol: frozenset) -> int:
        for guard, dest in self.edges[q]:
            if ltl.holds(guard, symbol):
                return dest
        raise IncompletenessDetected(f"no edge from state {q} on {set(symbol)}")

    def goal_states(self) -> frozenset:
        out = set()
        for good, _bad in self.pairs:
            out |= good
        return frozenset(out)

    def validate(self) -> None:
        """Check determinism/totality by enumerating all symbols."""
        if not 0 <= self.initial < self.n_states:
            raise ValueError("initial state out of range")
        if not self.pairs:
            raise ValueError("need at least one accepting pair")
        for good, bad in self.pairs:
            for q in good | bad:
                if not 0 <= q < self.n_states:
                    raise ValueError("accepting pair references unknown state")
        for q in range(self.n_states):
            for sym in all_symbols(self.ap):
                hits = [d for g, d in self.edges[q] if ltl.holds(g, sym)]
                if len(hits) > 1:
                    raise NondeterminismDetected(
                        f"state {q} has {len(hits)} edges on {set(sym)}"
                    )
                if not hits:
                    raise IncompletenessDetected(
                        f"state {q} has no edge on {set(sym)}"
                    )


@dataclass
class PrunedDRA:
    """A DRA restricted to physically feasible symbols, with the hop
    distance from each state to the union of accepting G-sets.

    distance[q] is math.inf for deadlock states (acceptance unreachable).
    Stepping still uses the full transition function: runtime labels are
    always legal symbols, pruning only shapes distances and goal sets.
    """

    dra: DRA
    feasible_symbols: tuple
    transitions: dict  # (q, symbol) -> successor, feasible symbols only
    distance: tuple
    deadlocks: frozenset

    @property
    def ap(self):
        return self.dra.ap

    @property
    def n_states(self):
        return self.dra.n_states

    @property
    def initial(self):
        return self.dra.initial

    @property
    def pairs(self):
        return self.dra.pairs

    def step(self, q: int, symbol: frozenset) -> int:
        return self.dra.step(q, symbol)


def dra_step(d, q: int, symbol: frozenset) -> int:
    """Successor of q on symbol (total on DRA and PrunedDRA alike)."""
    return d.step(q, symbol)


# ---------------------------------------------------------------------------
# Compilation of the template fragment
# ---------------------------------------------------------------------------

def _classify_conjunct(f: Formula):
    """Map a conjunct onto one of the supported templates."""
    if f.kind == "true":
        return ("trivial",)
    if f.kind == "eventually":
        inner = f.children[0]
        if inner.kind == "atom":
            return ("reach", inner.name)
    if f.kind == "always":
        inner = f.children[0]
        if inner.kind == "not" and inner.children[0].kind == "atom":
            return ("safety", inner.children[0].name)
        if inner.kind == "eventually" and inner.children[0].kind == "atom":
            return ("recur", inner.children[0].name)
    if f.kind == "until":
        left, right = f.children
        if (
            left.kind == "not"
            and left.children[0].kind == "atom"
            and right.kind == "atom"
        ):
            return ("order", left.children[0].name, right.name)
    raise UnsupportedFragment(
        f"cannot compile subformula {ltl.to_text(f)!r}; supported conjuncts "
        "are F a, G !a, G F a, and !a U b"
    )


_SINK = "sink"


def compile_dra(f: Formula) -> DRA:
    """Compile a conjunction of template constraints into a DRA with one
    Rabin pair.

    Component automata (a visited-bit per reach constraint, a done/waiting
    bit per ordering constraint, a violation flag per safety constraint and
    a cyclic counter over the recurrence atoms) run in lockstep; any
    violation collapses into a single absorbing sink. G_1 holds the states
    where every reach/order component is satisfied and, when recurrence
    constraints exist, the counter has just completed a full cycle.
    """
    reach, safety, recur, order = [], [], [], []
    for g in ltl.conjuncts(f):
        tag = _classify_conjunct(g)
        if tag[0] == "reach" and tag[1] not in reach:
            reach.append(tag[1])
        elif tag[0] == "safety" and tag[1] not in safety:
            safety.append(tag[1])
        elif tag[0] == "recur" and tag[1] not in recur:
            recur.append(tag[1])
        elif tag[0] == "order" and tag[1:] not in order:
            order.append(tag[1:])

    ap = tuple(sorted(ltl.atoms(f)))
    n_rec = len(recur)

    def initial_state():
        counter = (0, False) if n_rec else None
        return (tuple(False for _ in reach), tuple("wait" for _ in order),
                counter)

    def step_state(state, sym):
        if state == _SINK:
            return _SINK
        bits, orders, counter = state
        for a in safety:
            if a in sym:
                return _SINK
        new_orders = []
        for (a, b), st in zip(order, orders):
            if st == "wait":
                if b in sym:
                    st = "done"
                elif a in sym:
                    return _SINK
            new_orders.append(st)
        new_bits = tuple(bit or (a in sym) for a, bit in zip(reach, bits))
        if counter is not None:
            c, _ = counter
            if recur[c] in sym:
                c += 1
                counter = (0, True) if c == n_rec else (c, False)
            else:
                counter = (c, False)
        return (new_bits, tuple(new_orders), counter)

    def is_goal(state):
        if state == _SINK:
            return False
        bits, orders, counter = state
        if not all(bits) or any(st != "done" for st in orders):
            return False
        return counter[1] if counter is not None else True

    symbols = all_symbols(ap)
    index = {initial_state(): 0}
    states = [initial_state()]
    queue = deque([initial_state()])
    trans = {}  # (state index, symbol) -> state index
    while queue:
        s = queue.popleft()
        for sym in symbols:
            t = step_state(s, sym)
            if t not in index:
                index[t] = len(states)
                states.append(t)
                queue.append(t)
            trans[(index[s], sym)] = index[t]

    edges = [
        _guards_from_symbols(
            {sym: trans[(qi, sym)] for sym in symbols}, ap
        )
        for qi in range(len(states))
    ]
    good = frozenset(i for i, s in enumerate(states) if is_goal(s))
    bad = frozenset(i for i, s in enumerate(states) if s == _SINK)
    return DRA(ap=ap, n_states=len(states), initial=0, edges=edges,
               pairs=[(good, bad)])


def _minterm(sym: frozenset, ap: tuple) -> Formula:
    term = None
    for a in ap:
        lit = ltl.atom(a) if a in sym else ltl.not_(ltl.atom(a))
        term = lit if term is None else ltl.and_(term, lit)
    return term if term is not None else ltl.true_()


def _guards_from_symbols(sym_to_dest: dict, ap: tuple) -> list:
    """Group symbols by destination and express each group as a guard
    (true when the group covers the whole alphabet, else a minterm DNF)."""
    by_dest: dict[int, list] = {}
    for sym, dest in sym_to_dest.items():
        by_dest.setdefault(dest, []).append(sym)
    total = 1 << len(ap)
    edges = []
    for dest in sorted(by_dest):
        syms = by_dest[dest]
        if len(syms) == total:
            edges.append((ltl.true_(), dest))
            continue
        guard = None
        for sym in sorted(syms, key=lambda s: sorted(s)):
            term = _minterm(sym, ap)
            guard = term if guard is None else ltl.or_(guard, term)
        edges.append((guard, dest))
    return edges


# ---------------------------------------------------------------------------
# HOA v1 subset
# ---------------------------------------------------------------------------

def export_hoa(d: DRA) -> str:
    """Serialize to the HOA v1 subset with state-based Rabin acceptance:
    pair i uses Fin(2i) for B_i and Inf(2i+1) for G_i."""
    lines = ["HOA: v1", f"States: {d.n_states}", f"Start: {d.initial}"]
    lines.append("AP: {} {}".format(
        len(d.ap), " ".join(f'"{a}"' for a in d.ap)))
    f = len(d.pairs)
    lines.append(f"acc-name: Rabin {f}")
    terms = [f"Fin({2 * i}) & Inf({2 * i + 1})" for i in range(f)]
    cond = " | ".join(terms if f == 1 else [f"({t})" for t in terms])
    lines.append(f"Acceptance: {2 * f} {cond}")
    lines.append("properties: trans-labels explicit-labels state-acc "
                 "deterministic complete")
    lines.append("--BODY--")
    for q in range(d.n_states):
        sets = []
        for i, (good, bad) in enumerate(d.pairs):
            if q in bad:
                sets.append(2 * i)
            if q in good:
                sets.append(2 * i + 1)
        suffix = f" {{{' '.join(str(s) for s in sets)}}}" if sets else ""
        lines.append(f"State: {q}{suffix}")
        for guard, dest in d.edges[q]:
            lines.append(f"[{_hoa_expr(guard, d.ap)}] {dest}")
    lines.append("--END--")
    return "\n".join(lines) + "\n"


def _hoa_expr(guard: Formula, ap: tuple) -> str:
    idx = {a: i for i, a in enumerate(ap)}

    def rec(g: Formula, parent: int) -> str:
        if g.kind == "true":
            return "t"
        if g.kind == "atom":
            return str(idx[g.name])
        if g.kind == "not":
            return "!" + rec(g.children[0], 3)
        prec = 2 if g.kind == "and" else 1
        op = "&" if g.kind == "and" else "|"
        text = rec(g.children[0], prec) + op + rec(g.children[1], prec)
        return f"({text})" if prec < parent else text

    return rec(guard, 0)


def _parse_label_expr(text: str, ap: tuple) -> Formula:
    tokens = re.findall(r"\d+|[tf!&|()]", text.replace(" ", ""))
    if "".join(tokens) != text.replace(" ", ""):
        raise MalformedHeader(f"bad label expression {text!r}")
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else ""

    def take():
        nonlocal pos
        t = peek()
        pos += 1
        return t

    def parse_or():
        left = parse_and()
        while peek() == "|":
            take()
            left = ltl.or_(left, parse_and())
        return left

    def parse_and():
        left = parse_unary()
        while peek() == "&":
            take()
            left = ltl.and_(left, parse_unary())
        return left

    def parse_unary():
        t = take()
        if t == "!":
            return ltl.not_(parse_unary())
        if t == "(":
            e = parse_or()
            if take() != ")":
                raise MalformedHeader(f"unbalanced parens in {text!r}")
            return e
        if t == "t":
            return ltl.true_()
        if t == "f":
            return ltl.not_(ltl.true_())
        if t.isdigit():
            i = int(t)
            if i >= len(ap):
                raise MalformedHeader(f"AP index {i} out of range in {text!r}")
            return ltl.atom(ap[i])
        raise MalformedHeader(f"bad label expression {text!r}")

    expr = parse_or()
    if pos != len(tokens):
        raise MalformedHeader(f"trailing tokens in label {text!r}")
    return expr


_ACC_TERM = re.compile(r"^Fin\((\d+)\)\s*&\s*Inf\((\d+)\)$")


def import_hoa(text: str) -> DRA:
    """Parse the HOA v1 subset produced by export_hoa (and by common
    LTL-to-DRA translators restricted to state-based Rabin acceptance)."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("/*")]
    try:
        body_at = lines.index("--BODY--")
    except ValueError:
        raise MalformedHeader("missing --BODY--") from None
    headers, body = lines[:body_at], lines[body_at + 1 :]
    if not headers or headers[0] != "HOA: v1":
        raise MalformedHeader("file must start with 'HOA: v1'")

    n_states = start = n_ap = n_pairs = None
    ap: tuple = ()
    acc_sets = None
    for ln in headers[1:]:
        key, _, rest = ln.partition(":")
        rest = rest.strip()
        if key == "States":
            n_states = int(rest)
        elif key == "Start":
            if not rest.isdigit():
                raise NondeterminismDetected(f"need a single start state, got {rest!r}")
            start = int(rest)
        elif key == "AP":
            parts = rest.split(None, 1)
            n_ap = int(parts[0])
            names = re.findall(r'"([^"]*)"', parts[1] if len(parts) > 1 else "")
            if len(names) != n_ap:
                raise MalformedHeader("AP count does not match declared names")
            ap = tuple(names)
        elif key == "acc-name":
            m = re.match(r"^Rabin\s+(\d+)$", rest)
            if not m:
                raise UnsupportedAcceptance(f"acc-name {rest!r} (need Rabin k)")
            n_pairs = int(m.group(1))
        elif key == "Acceptance":
            parts = rest.split(None, 1)
            acc_sets = int(parts[0])
            cond = parts[1] if len(parts) > 1 else ""
            for i, term in enumerate(re.split(r"\|", cond)):
                term = term.strip()
                if term.startswith("(") and term.endswith(")"):
                    term = term[1:-1].strip()
                m = _ACC_TERM.match(term)
                if not m or int(m.group(1)) != 2 * i or int(m.group(2)) != 2 * i + 1:
                    raise UnsupportedAcceptance(
                        f"acceptance condition {cond!r} is not canonical Rabin"
                    )
        elif key in ("properties", "name", "tool"):
            continue
        else:
            raise MalformedHeader(f"unsupported header {key!r}")
    if n_states is None or start is None or n_ap is None:
        raise MalformedHeader("States, Start and AP headers are required")
    if n_pairs is None:
        raise UnsupportedAcceptance("missing 'acc-name: Rabin k' header")
    if acc_sets is not None and acc_sets != 2 * n_pairs:
        raise UnsupportedAcceptance(
            f"Acceptance declares {acc_sets} sets, Rabin {n_pairs} needs {2 * n_pairs}"
        )
    if body and body[-1] == "--END--":
        body = body[:-1]
    else:
        raise MalformedHeader("missing --END--")

    edges: list = [[] for _ in range(n_states)]
    state_sets: list = [frozenset() for _ in range(n_states)]
    seen_states = set()
    current = None
    state_re = re.compile(r"^State:\s*(\d+)\s*(?:\{([\d\s]*)\})?$")
    edge_re = re.compile(r"^\[(.*)\]\s*(\d+)\s*(\{[\d\s]*\})?$")
    for ln in body:
        m = state_re.match(ln)
        if m:
            current = int(m.group(1))
            if current >= n_states:
                raise MalformedHeader(f"state {current} out of range")
            if current in seen_states:
                raise MalformedHeader(f"state {current} declared twice")
            seen_states.add(current)
            if m.group(2):
                state_sets[current] = frozenset(int(s) for s in m.group(2).split())
            continue
        m = edge_re.match(ln)
        if m:
            if current is None:
                raise MalformedHeader(f"edge before any State: line: {ln!r}")
            if m.group(3):
                raise UnsupportedAcceptance(
                    "transition-based acceptance marks are not supported"
                )
            dest = int(m.group(2))
            if dest >= n_states:
                raise MalformedHeader(f"edge to unknown state {dest}")
            edges[current].append((_parse_label_expr(m.group(1), ap), dest))
            continue
        raise MalformedHeader(f"cannot parse body line {ln!r}")
    if len(seen_states) != n_states:
        raise MalformedHeader("not every declared state appears in the body")

    for s in state_sets:
        for acc in s:
            if acc >= 2 * n_pairs:
                raise UnsupportedAcceptance(f"acceptance set {acc} out of range")
    pairs = []
    for i in range(n_pairs):
        bad = frozenset(q for q in range(n_states) if 2 * i in state_sets[q])
        good = frozenset(q for q in range(n_states) if 2 * i + 1 in state_sets[q])
        pairs.append((good, bad))

    d = DRA(ap=ap, n_states=n_states, initial=start, edges=edges, pairs=pairs)
    d.validate()  # raises NondeterminismDetected / IncompletenessDetected
    return d


def export_dot(d: DRA, distance=None) -> str:
    """Graphviz rendering for inspection; G-states are double circles,
    B-states are boxes, edge labels show guards."""
    good, bad = set(), set()
    for g, b in d.pairs:
        good |= g
        bad |= b
    lines = ["digraph dra {", "  rankdir=LR;", '  init [shape=point, label=""];',
             f"  init -> {d.initial};"]
    for q in range(d.n_states):
        shape = "doublecircle" if q in good else ("box" if q in bad else "circle")
        label = str(q)
        if distance is not None:
            dq = distance[q]
            label += "\\nd=" + ("inf" if math.isinf(dq) else str(int(dq)))
        lines.append(f'  {q} [shape={shape}, label="{label}"];')
        for guard, dest in d.edges[q]:
            lines.append(f'  {q} -> {dest} [label="{ltl.to_text(guard)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Pruning and the distance-to-acceptance map
# ---------------------------------------------------------------------------

def exclusive_symbols(ap: tuple, mutex_groups) -> tuple:
    """Symbols that put the agent in at most one member of each mutually
    exclusive group (the physically generatable alphabet)."""
    feas = []
    groups = [frozenset(g) for g in mutex_groups]
    for sym in all_symbols(ap):
        if all(len(sym & g) <= 1 for g in groups):
            feas.append(sym)
    return tuple(feas)


def prune(d: DRA, mutex_groups) -> PrunedDRA:
    """Restrict to feasible symbols and compute the hop distance from each
    state to the union of the G-sets by reverse breadth-first search.

    Raises InfeasibleTask when the initial state cannot reach acceptance.
    """
    feas = exclusive_symbols(d.ap, mutex_groups)
    trans = {}
    preds: list[set] = [set() for _ in range(d.n_states)]
    for q in range(d.n_states):
        for sym in feas:
            q2 = d.step(q, sym)
            trans[(q, sym)] = q2
            preds[q2].add(q)

    dist = [math.inf] * d.n_states
    frontier = deque()
    for q in sorted(d.goal_states()):
        dist[q] = 0
        frontier.append(q)
    while frontier:
        q = frontier.popleft()
        for p in preds[q]:
            if math.isinf(dist[p]):
                dist[p] = dist[q] + 1
                frontier.append(p)

    deadlocks = frozenset(q for q in range(d.n_states) if math.isinf(dist[q]))
    if d.initial in deadlocks:
        raise InfeasibleTask(
            "initial automaton state cannot reach acceptance under the "
            "given mutual-exclusion assumptions"
        )
    return PrunedDRA(dra=d, feasible_symbols=feas, transitions=trans,
                     distance=tuple(dist), deadlocks=deadlocks)


def is_accepting_run_prefix(pruned: PrunedDRA, visit_counts) -> bool:
    """Finite-run success test: some G-set was visited at least twice and
    no deadlock state was ever touched."""
    for q, count in visit_counts.items():
        if count > 0 and q in pruned.deadlocks:
            return False
    for good, _bad in pruned.pairs:
        if sum(visit_counts.get(q, 0) for q in good) >= 2:
            return True
    return False


def accepts_lasso(d: DRA, w: LassoWord) -> bool:
    """Run the automaton on prefix . cycle^omega and apply the Rabin
    condition to the set of states visited infinitely often."""
    q = d.initial
    for sym in w.prefix:
        q = d.step(q, sym)
    # After the prefix, the state at each cycle boundary eventually repeats;
    # the states visited between two repeats are exactly Inf of the run.
    boundary_seen = {}
    arrivals = []
    while q not in boundary_seen:
        boundary_seen[q] = len(arrivals)
        for sym in w.cycle:
            q = d.step(q, sym)
            arrivals.append(q)
    inf_states = set(arrivals[boundary_seen[q]:])
    return any(
        inf_states & good and not inf_states & bad for good, bad in d.pairs
    )
