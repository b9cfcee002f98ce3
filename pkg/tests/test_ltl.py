"""Formula parsing, printing and the lasso-word semantics oracle."""
import pytest
from hypothesis import given, settings, strategies as st

from ltlnav import ltl
from ltlnav.ltl import (Formula, LassoWord, LTLSyntaxError, UnknownAtomError,
                        and_, atom, eval_lasso, eventually, not_, parse,
                        to_text, until)

APS = ("r1", "r2", "r3", "r4", "obs")
CASE1 = "F r1 & F r2 & F r3 & G !obs"


def test_parse_case1_shape():
    f = parse(CASE1, APS)
    # four conjuncts, right-nested
    assert f.kind == "and"
    parts = ltl.conjuncts(f)
    assert len(parts) == 4
    assert parts[0] == eventually(atom("r1"))
    assert parts[1] == eventually(atom("r2"))
    assert parts[2] == eventually(atom("r3"))
    assert parts[3] == ltl.always(not_(atom("obs")))
    # right-nested: second child of the top node is itself a conjunction
    assert f.children[1].kind == "and"


def test_parse_true_leaf():
    assert parse("true", APS) == ltl.true_()


def test_parse_until_ordering_conjunct():
    f = parse("!(r4) U r1", APS)
    assert f == until(not_(atom("r4")), atom("r1"))


def test_parse_unicode_aliases():
    f = parse("◇r1 ∧ □¬obs", APS)
    assert f == and_(eventually(atom("r1")), ltl.always(not_(atom("obs"))))


def test_parse_precedence_and_associativity():
    # unary > U > & > | > ->
    f = parse("!r1 U r2 & r3 | r4 -> obs", APS)
    assert f.kind == "implies"
    assert f.children[0].kind == "or"
    assert f.children[0].children[0].kind == "and"
    assert f.children[0].children[0].children[0] == until(not_(atom("r1")),
                                                          atom("r2"))
    # right associativity
    g = parse("r1 -> r2 -> r3", APS)
    assert g == ltl.implies(atom("r1"), ltl.implies(atom("r2"), atom("r3")))
    u = parse("r1 U r2 U r3", APS)
    assert u == until(atom("r1"), until(atom("r2"), atom("r3")))


def test_syntax_error_carries_position():
    with pytest.raises(LTLSyntaxError) as err:
        parse("F r1 & & r2", APS)
    assert err.value.position == 7


def test_unknown_atom_named():
    with pytest.raises(UnknownAtomError) as err:
        parse("F r9", APS)
    assert err.value.name == "r9"


def test_empty_ap_set_rejected():
    with pytest.raises(ValueError):
        parse("true", [])


# -- lasso-word evaluation ---------------------------------------------------

def test_eval_safety_trivial():
    f = parse("G !obs", APS)
    assert eval_lasso(f, LassoWord.make([], [{}])) is True
    assert eval_lasso(f, LassoWord.make([], [{"obs"}])) is False


def test_eval_reach_trivial():
    f = parse("F r1", APS)
    assert eval_lasso(f, LassoWord.make([{}, {"r1"}], [{}])) is True
    assert eval_lasso(f, LassoWord.make([{}], [{}])) is False


def test_eval_case1_derived_words():
    f = parse(CASE1, APS)
    w = LassoWord.make([{"r1"}, {"r2"}, {"r3"}], [{}])
    assert eval_lasso(f, w) is True
    w_missing = LassoWord.make([{"r1"}, {"r2"}], [{}])
    assert eval_lasso(f, w_missing) is False


def test_eval_next_and_until():
    f = parse("X r1", APS)
    assert eval_lasso(f, LassoWord.make([{}, {"r1"}], [{}])) is True
    assert eval_lasso(f, LassoWord.make([{"r1"}], [{}])) is False
    g = parse("!r4 U r1", APS)
    assert eval_lasso(g, LassoWord.make([{}, {"r1"}], [{}])) is True
    assert eval_lasso(g, LassoWord.make([{"r4"}, {"r1"}], [{}])) is False
    # the witnessing position does not need the left side
    assert eval_lasso(g, LassoWord.make([{"r1", "r4"}], [{}])) is True


def test_eval_recurrence_on_cycle():
    f = parse("G F r2", APS)
    assert eval_lasso(f, LassoWord.make([{}], [{"r2"}, {}])) is True
    assert eval_lasso(f, LassoWord.make([{"r2"}], [{}])) is False


# -- randomized properties ---------------------------------------------------

ATOM_POOL = ("r1", "r2", "obs")


def formulas(max_depth=6):
    leaves = st.one_of(
        st.just(ltl.true_()),
        st.sampled_from(ATOM_POOL).map(atom),
    )

    def extend(children):
        unary = st.sampled_from(["not", "next", "eventually", "always"])
        binary = st.sampled_from(["and", "or", "implies", "until"])
        return st.one_of(
            st.tuples(unary, children).map(lambda t: Formula(t[0], (t[1],))),
            st.tuples(binary, children, children).map(
                lambda t: Formula(t[0], (t[1], t[2]))),
        )

    return st.recursive(leaves, extend, max_leaves=2 ** max_depth)


def symbols():
    return st.frozensets(st.sampled_from(ATOM_POOL), max_size=3)


def lasso_words():
    return st.builds(
        LassoWord,
        st.lists(symbols(), max_size=5).map(tuple),
        st.lists(symbols(), min_size=1, max_size=4).map(tuple),
    )


@given(formulas())
@settings(max_examples=200, deadline=None)
def test_parse_print_roundtrip(f):
    assert parse(to_text(f), ATOM_POOL) == f


@given(formulas(max_depth=4), lasso_words())
@settings(max_examples=150, deadline=None)
def test_negation_duality(f, w):
    assert eval_lasso(not_(f), w) == (not eval_lasso(f, w))


@given(formulas(max_depth=4), lasso_words())
@settings(max_examples=150, deadline=None)
def test_always_duality(f, w):
    lhs = eval_lasso(ltl.always(f), w)
    rhs = eval_lasso(not_(eventually(not_(f))), w)
    assert lhs == rhs


@given(formulas(max_depth=4), lasso_words(),
       st.integers(min_value=0, max_value=6))
@settings(max_examples=150, deadline=None)
def test_cycle_rotation_invariance(f, w, k):
    # prefix.cycle^w equals (prefix+cycle[:k]).(rotated cycle)^w as words
    k = k % len(w.cycle)
    rotated = LassoWord(w.prefix + w.cycle[:k], w.cycle[k:] + w.cycle[:k])
    assert eval_lasso(f, w) == eval_lasso(f, rotated)
    unrolled = LassoWord(w.prefix + w.cycle, w.cycle)
    assert eval_lasso(f, w) == eval_lasso(f, unrolled)
