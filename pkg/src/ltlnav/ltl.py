"""LTL formulas over atomic propositions: parsing, printing, and a
ground-truth evaluator on ultimately-periodic (lasso) words.

The evaluator is deliberately independent of any automaton machinery so it
can serve as a semantics oracle when validating compiled automata.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, Sequence

UNARY_KINDS = ("not", "next", "eventually", "always")
BINARY_KINDS = ("and", "or", "implies", "until")
LEAF_KINDS = ("true", "atom")

_ARITY = {k: 0 for k in LEAF_KINDS}
_ARITY.update({k: 1 for k in UNARY_KINDS})
_ARITY.update({k: 2 for k in BINARY_KINDS})


class LTLSyntaxError(ValueError):
    """Raised on malformed formula text; carries the character position."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownAtomError(ValueError):
    """Raised when a formula references an atom outside the declared set."""

    def __init__(self, name, position=None):
        where = f" (at position {position})" if position is not None else ""
        super().__init__(f"unknown atomic proposition {name!r}{where}")
        self.name = name


@dataclass(frozen=True)
class Formula:
    """Immutable LTL syntax tree node.

    kind is one of true/atom/not/and/or/implies/next/until/eventually/always;
    children holds 0-2 sub-formulas and name is set for atoms only.
    """

    kind: str
    children: tuple = ()
    name: str = ""

    def __post_init__(self):
        if self.kind not in _ARITY:
            raise ValueError(f"unknown formula kind {self.kind!r}")
        if len(self.children) != _ARITY[self.kind]:
            raise ValueError(
                f"{self.kind} takes {_ARITY[self.kind]} children, "
                f"got {len(self.children)}"
            )
        if (self.kind == "atom") != bool(self.name):
            raise ValueError("name is set exactly for atom nodes")

    def __str__(self):
        return to_text(self)


def true_() -> Formula:
    return Formula("true")


def atom(name: str) -> Formula:
    return Formula("atom", name=name)


def not_(f: Formula) -> Formula:
    return Formula("not", (f,))


def and_(left: Formula, right: Formula) -> Formula:
    return Formula("and", (left, right))


def or_(left: Formula, right: Formula) -> Formula:
    return Formula("or", (left, right))


def implies(left: Formula, right: Formula) -> Formula:
    return Formula("implies", (left, right))


def next_(f: Formula) -> Formula:
    return Formula("next", (f,))


def until(left: Formula, right: Formula) -> Formula:
    return Formula("until", (left, right))


def eventually(f: Formula) -> Formula:
    return Formula("eventually", (f,))


def always(f: Formula) -> Formula:
    return Formula("always", (f,))


def atoms(f: Formula) -> FrozenSet[str]:
    """All atom names appearing in the formula."""
    if f.kind == "atom":
        return frozenset({f.name})
    out = frozenset()
    for c in f.children:
        out |= atoms(c)
    return out


def conjuncts(f: Formula) -> list[Formula]:
    """Flatten a right- or left-nested conjunction into its conjuncts."""
    if f.kind == "and":
        return conjuncts(f.children[0]) + conjuncts(f.children[1])
    return [f]


# Surface syntax. ASCII operators are primary; a few common Unicode
# aliases are accepted on input.
_UNICODE_ALIASES = {
    "¬": "!",   # ¬
    "∧": "&",   # ∧
    "∨": "|",   # ∨
    "⇒": "->",  # ⇒
    "◇": "F",   # ◇
    "◊": "F",   # ◊
    "□": "G",   # □
    "○": "X",   # ○
    "◯": "X",   # ◯
    "\U0001d4b0": "U",
}

_PREC = {"implies": 1, "or": 2, "and": 3, "until": 4}
_OP_TEXT = {"and": "&", "or": "|", "implies": "->", "until": "U"}
_UNARY_TEXT = {"not": "!", "next": "X", "eventually": "F", "always": "G"}


def to_text(f: Formula) -> str:
    """Render with ASCII operators and the minimal parentheses needed to
    reparse into the same tree."""

    def rec(g: Formula, parent_prec: int, right_side: bool) -> str:
        if g.kind == "true":
            return "true"
        if g.kind == "atom":
            return g.name
        if g.kind in UNARY_KINDS:
            inner = rec(g.children[0], 5, True)
            if g.children[0].kind not in LEAF_KINDS + UNARY_KINDS:
                inner = f"({inner})"
            # X/F/G are keywords, so keep a space before identifier operands
            sep = " " if g.kind != "not" else ""
            return _UNARY_TEXT[g.kind] + sep + inner
        prec = _PREC[g.kind]
        # Binary ops are right-associative, so the left child needs parens
        # at equal precedence while the right child does not.
        left = rec(g.children[0], prec, False)
        right = rec(g.children[1], prec, True)
        text = f"{left} {_OP_TEXT[g.kind]} {right}"
        if prec < parent_prec or (prec == parent_prec and not right_side):
            return f"({text})"
        return text

    return rec(f, 0, True)


@dataclass(frozen=True)
class _Token:
    kind: str  # op symbol, "ident", or "end"
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    for uni, ascii_ in _UNICODE_ALIASES.items():
        # pad so keyword aliases cannot fuse with a following identifier
        text = text.replace(uni, f" {ascii_} ")
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in "()!&|":
            tokens.append(_Token(ch, ch, i))
            i += 1
        elif ch == "-":
            if text[i : i + 2] != "->":
                raise LTLSyntaxError("expected '->'", i)
            tokens.append(_Token("->", "->", i))
            i += 2
        elif ch == "=" and text[i : i + 2] == "=>":
            tokens.append(_Token("->", "=>", i))
            i += 2
        elif ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("ident", text[i:j], i))
            i = j
        else:
            raise LTLSyntaxError(f"unexpected character {ch!r}", i)
    tokens.append(_Token("end", "", n))
    return tokens


class _Parser:
    """Recursive descent over precedence levels.

    Tightest first: unary (!, X, F, G) > U > & > | > ->, with U and ->
    right-associative (& and | are parsed right-nested as well).
    """

    def __init__(self, tokens: list[_Token], ap_set: frozenset):
        self.tokens = tokens
        self.i = 0
        self.ap = ap_set

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def take(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, kind: str) -> _Token:
        t = self.take()
        if t.kind != kind:
            raise LTLSyntaxError(f"expected {kind!r}, found {t.text!r}", t.pos)
        return t

    def parse_formula(self) -> Formula:
        f = self.parse_implies()
        t = self.peek()
        if t.kind != "end":
            raise LTLSyntaxError(f"unexpected {t.text!r}", t.pos)
        return f

    def parse_implies(self) -> Formula:
        left = self.parse_or()
        if self.peek().kind == "->":
            self.take()
            return implies(left, self.parse_implies())
        return left

    def parse_or(self) -> Formula:
        left = self.parse_and()
        if self.peek().kind == "|":
            self.take()
            return or_(left, self.parse_or())
        return left

    def parse_and(self) -> Formula:
        left = self.parse_until()
        if self.peek().kind == "&":
            self.take()
            return and_(left, self.parse_and())
        return left

    def parse_until(self) -> Formula:
        left = self.parse_unary()
        t = self.peek()
        if t.kind == "ident" and t.text == "U":
            self.take()
            return until(left, self.parse_until())
        return left

    def parse_unary(self) -> Formula:
        t = self.peek()
        if t.kind == "!":
            self.take()
            return not_(self.parse_unary())
        if t.kind == "ident" and t.text in ("X", "F", "G"):
            self.take()
            ctor = {"X": next_, "F": eventually, "G": always}[t.text]
            return ctor(self.parse_unary())
        return self.parse_leaf()

    def parse_leaf(self) -> Formula:
        t = self.take()
        if t.kind == "(":
            f = self.parse_implies()
            self.expect(")")
            return f
        if t.kind == "ident":
            if t.text == "true":
                return true_()
            if t.text in ("U", "X", "F", "G"):
                raise LTLSyntaxError(f"operator {t.text!r} needs an operand", t.pos)
            if t.text not in self.ap:
                raise UnknownAtomError(t.text, t.pos)
            return atom(t.text)
        raise LTLSyntaxError(f"unexpected {t.text or 'end of input'!r}", t.pos)


def parse(text: str, ap_set: Iterable[str]) -> Formula:
    """Parse formula text against a declared atomic-proposition set."""
    ap = frozenset(ap_set)
    if not ap:
        raise ValueError("ap_set must be nonempty")
    return _Parser(_tokenize(text), ap).parse_formula()


@dataclass(frozen=True)
class LassoWord:
    """Finite representation prefix . cycle^omega of an infinite word.

    Each symbol is a frozenset of atom names.
    """

    prefix: tuple
    cycle: tuple

    def __post_init__(self):
        if len(self.cycle) < 1:
            raise ValueError("cycle must be nonempty")

    @staticmethod
    def make(prefix: Sequence[Iterable[str]], cycle: Sequence[Iterable[str]]) -> "LassoWord":
        return LassoWord(
            tuple(frozenset(s) for s in prefix),
            tuple(frozenset(s) for s in cycle),
        )

    def symbol_at(self, t: int) -> frozenset:
        p = len(self.prefix)
        if t < p:
            return self.prefix[t]
        return self.cycle[(t - p) % len(self.cycle)]


def eval_lasso(f: Formula, w: LassoWord) -> bool:
    """Truth of f on the infinite word w.prefix . w.cycle^omega.

    Positions 0..p+c-1 cover all distinct suffixes of the word (the suffix
    at p+c equals the one at p), so temporal operators are solved by
    fixpoint iteration over that finite set with successor wrapping from
    the last cycle position back to the cycle start.
    """
    p, c = len(w.prefix), len(w.cycle)
    n = p + c
    syms = list(w.prefix) + list(w.cycle)
    succ = [i + 1 if i + 1 < n else p for i in range(n)]
    memo: dict[Formula, list[bool]] = {}

    def lfp(base: list[bool], cond: list[bool]) -> list[bool]:
        # least fixpoint of v[i] = base[i] or (cond[i] and v[succ[i]])
        vals = list(base)
        changed = True
        while changed:
            changed = False
            for i in range(n - 1, -1, -1):
                nv = base[i] or (cond[i] and vals[succ[i]])
                if nv and not vals[i]:
                    vals[i] = True
                    changed = True
        return vals

    def table(g: Formula) -> list[bool]:
        if g in memo:
            return memo[g]
        k = g.kind
        if k == "true":
            vals = [True] * n
        elif k == "atom":
            vals = [g.name in syms[i] for i in range(n)]
        elif k == "not":
            vals = [not v for v in table(g.children[0])]
        elif k == "and":
            a, b = table(g.children[0]), table(g.children[1])
            vals = [x and y for x, y in zip(a, b)]
        elif k == "or":
            a, b = table(g.children[0]), table(g.children[1])
            vals = [x or y for x, y in zip(a, b)]
        elif k == "implies":
            a, b = table(g.children[0]), table(g.children[1])
            vals = [(not x) or y for x, y in zip(a, b)]
        elif k == "next":
            a = table(g.children[0])
            vals = [a[succ[i]] for i in range(n)]
        elif k == "until":
            a, b = table(g.children[0]), table(g.children[1])
            vals = lfp(b, a)
        elif k == "eventually":
            b = table(g.children[0])
            vals = lfp(b, [True] * n)
        else:  # always
            a = table(g.children[0])
            # greatest fixpoint of v[i] = a[i] and v[succ[i]]
            vals = list(a)
            changed = True
            while changed:
                changed = False
                for i in range(n - 1, -1, -1):
                    nv = a[i] and vals[succ[i]]
                    if vals[i] and not nv:
                        vals[i] = False
                        changed = True
        memo[g] = vals
        return vals

    return table(f)[0]


def holds(f: Formula, symbol: frozenset) -> bool:
    """Evaluate a purely boolean formula (no temporal operators) on one
    symbol, i.e. a set of atoms that are currently true."""
    k = f.kind
    if k == "true":
        return True
    if k == "atom":
        return f.name in symbol
    if k == "not":
        return not holds(f.children[0], symbol)
    if k == "and":
        return holds(f.children[0], symbol) and holds(f.children[1], symbol)
    if k == "or":
        return holds(f.children[0], symbol) or holds(f.children[1], symbol)
    if k == "implies":
        return (not holds(f.children[0], symbol)) or holds(f.children[1], symbol)
    raise ValueError(f"temporal operator {k!r} in a boolean guard")
