"""Automaton compilation, HOA round trips, pruning and distances.

Language correctness is judged against the independent lasso-word
semantics oracle; distances are judged against a per-state forward BFS
written here from scratch.
"""
import math
from collections import deque

import numpy as np
import pytest

from ltlnav import ltl
from ltlnav.automaton import (DRA, IncompletenessDetected, InfeasibleTask,
                              MalformedHeader, NondeterminismDetected,
                              UnsupportedAcceptance, UnsupportedFragment,
                              accepts_lasso, all_symbols, compile_dra,
                              dra_step, export_hoa, import_hoa,
                              is_accepting_run_prefix, prune)
from ltlnav.harness import PRESETS
from ltlnav.ltl import LassoWord, parse

MUTEX = {name: [frozenset(p.atoms)] for name, p in PRESETS.items()}


def compiled(name):
    p = PRESETS[name]
    return parse(p.formula, p.atoms), compile_dra(parse(p.formula, p.atoms)), p


def bfs_distance_oracle(pruned):
    """Hop distance of each state to the nearest G-state, via one forward
    BFS per state over the feasible-successor relation."""
    d = pruned.dra
    goals = d.goal_states()
    out = []
    for q0 in range(d.n_states):
        if q0 in goals:
            out.append(0)
            continue
        seen = {q0}
        frontier = deque([(q0, 0)])
        dist = math.inf
        while frontier:
            q, k = frontier.popleft()
            succs = {pruned.transitions[(q, sym)]
                     for sym in pruned.feasible_symbols}
            if succs & goals:
                dist = k + 1
                break
            for q2 in succs - seen:
                seen.add(q2)
                frontier.append((q2, k + 1))
        out.append(dist)
    return out


# -- fragment compilation -----------------------------------------------------

def test_safety_template_two_states():
    d = compile_dra(parse("G !obs", ["obs"]))
    assert d.n_states == 2
    (good, bad), = d.pairs
    live = d.initial
    sink = 1 - live
    assert good == {live} and bad == {sink}
    assert dra_step(d, live, frozenset()) == live
    assert dra_step(d, live, frozenset({"obs"})) == sink
    assert dra_step(d, sink, frozenset()) == sink


def test_case_study_reference_sizes():
    # the reference translator reports 9/13/10 states, 1 pair each; the
    # template construction happens to match exactly
    for name in ("case1", "case3", "case4"):
        _, d, preset = compiled(name)
        assert len(d.pairs) == preset.ref_pairs == 1
        assert d.n_states == preset.ref_states
        d.validate()


def test_unsupported_fragment_names_subformula():
    with pytest.raises(UnsupportedFragment) as err:
        compile_dra(parse("F (r1 & r2)", ["r1", "r2"]))
    assert "r1 & r2" in str(err.value)
    with pytest.raises(UnsupportedFragment):
        compile_dra(parse("r1 U r2", ["r1", "r2"]))


def test_absorbing_accepting_state_stays_put():
    _, d, _ = compiled("case1")
    q = d.initial
    for sym in [{"r1"}, {"r2"}, {"r3"}]:
        q = dra_step(d, q, frozenset(sym))
    (good, _), = d.pairs
    assert q in good
    for sym in [frozenset(), frozenset({"r1"})]:
        assert dra_step(d, q, sym) == q
        assert dra_step(d, dra_step(d, q, sym), sym) == q


def test_case4_accepts_spec_word_and_rejects_obs():
    f, d, _ = compiled("case4")
    w = LassoWord.make([{"r1"}, {"r4"}], [{"r2"}, {"r3"}])
    assert ltl.eval_lasso(f, w) is True
    assert accepts_lasso(d, w) is True
    w_obs = LassoWord.make([{"r1"}, {"obs"}, {"r4"}], [{"r2"}, {"r3"}])
    assert ltl.eval_lasso(f, w_obs) is False
    assert accepts_lasso(d, w_obs) is False


# -- language equivalence against the semantics oracle ------------------------

CURATED = {
    "case1": [
        ([{"r1"}, {"r2"}, {"r3"}], [{}]),
        ([{"r1"}, {"r2"}], [{}]),
        ([], [{"r1"}, {"r2"}, {"r3"}]),
        ([{"r1"}, {"r2"}, {"r3"}, {"obs"}], [{}]),
        ([], [{}]),
        ([{"r1", "r2", "r3"}], [{}]),
        ([], [{"obs"}]),
        ([{"r3"}, {"r2"}, {"r1"}], [{}]),
        ([{}, {}, {}, {"r1"}, {"r2"}, {"r3"}], [{}]),
        ([{"r1"}, {"r2"}, {"r3"}], [{"obs"}]),
        ([{"obs"}, {"r1"}, {"r2"}, {"r3"}], [{}]),
    ],
    "case3": [
        ([{"r1"}, {"r4"}, {"r2"}, {"r3"}], [{}]),
        ([{"r4"}, {"r1"}, {"r2"}, {"r3"}], [{}]),
        ([{"r1"}, {"r2"}, {"r3"}], [{}]),
        ([{"r1", "r4"}, {"r2"}, {"r3"}], [{}]),
        ([{"r2"}, {"r3"}, {"r1"}, {"r4"}], [{}]),
        ([{"r1"}, {"r4"}, {"r2"}], [{}]),
        ([{"r1"}, {"r4"}, {"r2"}, {"r3"}, {"obs"}], [{}]),
        ([], [{"r1"}, {"r4"}, {"r2"}, {"r3"}]),
        ([{"r4"}], [{"r1"}, {"r2"}, {"r3"}, {"r4"}]),
        ([{}], [{}]),
    ],
    "case4": [
        ([{"r1"}, {"r4"}], [{"r2"}, {"r3"}]),
        ([{"r1"}, {"r4"}], [{"r2"}]),
        ([{"r1"}, {"r4"}, {"r2"}, {"r3"}], [{}]),
        ([{"r4"}, {"r1"}], [{"r2"}, {"r3"}]),
        ([{"r1"}], [{"r2"}, {"r3"}]),
        ([{"r1"}, {"r4"}], [{"r2"}, {"r3"}, {"obs"}]),
        ([], [{"r1"}, {"r4"}, {"r2"}, {"r3"}]),
        ([{"r1"}, {"r4"}], [{"r2"}, {}, {"r3"}, {}]),
        ([{"obs"}, {"r1"}, {"r4"}], [{"r2"}, {"r3"}]),
        ([{"r1"}, {"r4"}], [{"r3"}, {"r2"}]),
    ],
}
CURATED["case2"] = CURATED["case1"]


def random_words(ap, n, seed):
    rng = np.random.default_rng(seed)
    symbols = all_symbols(tuple(ap))
    words = []
    for _ in range(n):
        p = int(rng.integers(0, 7))
        c = int(rng.integers(1, 5))
        prefix = [symbols[i] for i in rng.integers(0, len(symbols), p)]
        cycle = [symbols[i] for i in rng.integers(0, len(symbols), c)]
        words.append(LassoWord(tuple(prefix), tuple(cycle)))
    return words


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_language_matches_oracle(name):
    f, d, preset = compiled(name)
    words = [LassoWord.make(p, c) for p, c in CURATED[name]]
    words += random_words(preset.atoms, 50,
                          seed=sum(map(ord, name)))
    for w in words:
        assert accepts_lasso(d, w) == ltl.eval_lasso(f, w), w


# -- HOA subset ---------------------------------------------------------------

def test_export_safety_template_canonical():
    d = compile_dra(parse("G !obs", ["obs"]))
    text = export_hoa(d)
    assert "acc-name: Rabin 1" in text
    assert "Acceptance: 2 Fin(0) & Inf(1)" in text


def test_hoa_roundtrip_isomorphic_and_language_preserving():
    for name in sorted(PRESETS):
        f, d, preset = compiled(name)
        d2 = import_hoa(export_hoa(d))
        assert d2.n_states == d.n_states
        assert d2.initial == d.initial
        assert d2.ap == d.ap
        assert [(set(g), set(b)) for g, b in d2.pairs] == \
            [(set(g), set(b)) for g, b in d.pairs]
        for q in range(d.n_states):
            for sym in all_symbols(d.ap):
                assert d2.step(q, sym) == d.step(q, sym)
        for p, c in CURATED[name]:
            w = LassoWord.make(p, c)
            assert accepts_lasso(d2, w) == ltl.eval_lasso(f, w)


NONDET_HOA = """HOA: v1
States: 2
Start: 0
AP: 1 "a"
acc-name: Rabin 1
Acceptance: 2 Fin(0) & Inf(1)
--BODY--
State: 0
[0] 1
[t] 0
State: 1 {1}
[t] 1
--END--
"""

INCOMPLETE_HOA = NONDET_HOA.replace("[t] 0", "[!0] 0").replace("[0] 1\n[!0] 0",
                                                               "[0] 1")


def test_import_detects_overlapping_guards():
    with pytest.raises(NondeterminismDetected):
        import_hoa(NONDET_HOA)


def test_import_detects_incompleteness():
    text = """HOA: v1
States: 1
Start: 0
AP: 1 "a"
acc-name: Rabin 1
Acceptance: 2 Fin(0) & Inf(1)
--BODY--
State: 0 {1}
[0] 0
--END--
"""
    with pytest.raises(IncompletenessDetected):
        import_hoa(text)


def test_import_rejects_malformed_and_unsupported():
    with pytest.raises(MalformedHeader):
        import_hoa("HOA: v1\nStates: 1\n--END--\n")
    buchi = NONDET_HOA.replace("acc-name: Rabin 1", "acc-name: Buchi")
    with pytest.raises(UnsupportedAcceptance):
        import_hoa(buchi)
    bad_cond = NONDET_HOA.replace("Acceptance: 2 Fin(0) & Inf(1)",
                                  "Acceptance: 1 Inf(0)")
    with pytest.raises(UnsupportedAcceptance):
        import_hoa(bad_cond)


# -- pruning and distances ----------------------------------------------------

def test_case1_initial_distance_three():
    _, d, _ = compiled("case1")
    p = prune(d, MUTEX["case1"])
    assert p.distance[d.initial] == 3


def test_distance_zero_exactly_on_goal_states():
    for name in sorted(PRESETS):
        _, d, _ = compiled(name)
        p = prune(d, MUTEX[name])
        (good, _), = d.pairs
        for q in range(d.n_states):
            assert (p.distance[q] == 0) == (q in good)


def test_distance_matches_bfs_oracle_everywhere():
    for name in sorted(PRESETS):
        _, d, _ = compiled(name)
        p = prune(d, MUTEX[name])
        assert list(p.distance) == bfs_distance_oracle(p)


def test_safety_sink_is_deadlock():
    d = compile_dra(parse("G !obs", ["obs"]))
    p = prune(d, [frozenset({"obs"})])
    (_, bad), = d.pairs
    sink = next(iter(bad))
    assert math.isinf(p.distance[sink])
    assert sink in p.deadlocks


def test_infeasible_task_rejected():
    # r1 and r2 can never hold together, so reaching both in one symbol
    # being required makes the task dead on arrival
    d = compile_dra(parse("G !r1", ["r1"]))
    # force infeasibility: initial state must reach acceptance, here it can,
    # so instead check a formula whose goal needs a forbidden symbol
    f = parse("F r1 & G !r1", ["r1"])
    with pytest.raises(InfeasibleTask):
        prune(compile_dra(f), [frozenset({"r1"})])
    # sanity: the safe formula prunes fine
    prune(d, [frozenset({"r1"})])


def test_step_into_progress_state():
    _, d, _ = compiled("case1")
    p = prune(d, MUTEX["case1"])
    q = dra_step(p, d.initial, frozenset({"r1"}))
    assert p.distance[q] == 2


def test_pruned_step_falls_back_on_infeasible_symbols():
    _, d, _ = compiled("case1")
    p = prune(d, MUTEX["case1"])
    sym = frozenset({"r1", "r2"})
    assert (d.initial, sym) not in p.transitions
    assert dra_step(p, d.initial, sym) == dra_step(d, d.initial, sym)


def test_distance_monotonicity_over_feasible_transitions():
    for name in sorted(PRESETS):
        _, d, _ = compiled(name)
        p = prune(d, MUTEX[name])
        for (q, _sym), q2 in p.transitions.items():
            if math.isinf(p.distance[q]) or math.isinf(p.distance[q2]):
                continue
            assert p.distance[q2] >= p.distance[q] - 1


def test_pruning_soundness():
    for name in sorted(PRESETS):
        _, d, preset = compiled(name)
        p = prune(d, MUTEX[name])
        feas = set(p.feasible_symbols)
        assert feas <= set(all_symbols(d.ap))
        for sym in set(all_symbols(d.ap)) - feas:
            assert any(len(sym & g) >= 2 for g in MUTEX[name])


# -- finite-run acceptance ----------------------------------------------------

def pruned_case1():
    _, d, _ = compiled("case1")
    return prune(d, MUTEX["case1"])


def goal_state(p):
    (good, _), = p.pairs
    return min(good)


def test_accepting_prefix_needs_two_goal_visits():
    p = pruned_case1()
    g = goal_state(p)
    assert is_accepting_run_prefix(p, {g: 2}) is True
    assert is_accepting_run_prefix(p, {g: 1}) is False


def test_deadlock_visit_excludes_success():
    p = pruned_case1()
    g = goal_state(p)
    dead = next(iter(p.deadlocks))
    assert is_accepting_run_prefix(p, {g: 5, dead: 1}) is False
