"""Synchronized execution of the navigation simulator and a Rabin
automaton: product states, the four-class reward, episode rollouts and the
finite-run success test."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import world
from .automaton import PrunedDRA, is_accepting_run_prefix
from .world import AgentState, Environment


@dataclass(frozen=True)
class RewardConfig:
    """Reward per transition, keyed on the automaton state being entered:
    r_goal for G-states, r_bad for B-states, r_deadlock for states that can
    no longer reach acceptance, r_other otherwise."""

    r_goal: float = 100.0
    r_bad: float = 10.0
    r_other: float = -0.01
    r_deadlock: float = -100.0

    def __post_init__(self):
        if not self.r_goal > self.r_bad > 0.0:
            raise ValueError("need r_goal > r_bad > 0")
        if not self.r_deadlock < self.r_other <= 0.0:
            raise ValueError("need r_deadlock < r_other <= 0")


@dataclass
class ProductState:
    """Simulator state paired with the tracked automaton state. psi is the
    feature embedding, filled in lazily by consumers that need it."""

    x: AgentState
    q: int
    psi: np.ndarray | None = None


@dataclass(frozen=True)
class Transition:
    s: ProductState
    a: int
    r: float
    s2: ProductState
    terminal: bool


@dataclass
class EpisodeTrace:
    steps: list
    cause: str  # "horizon" or "deadlock"
    visit_counts: dict
    discounted_return: float

    def __len__(self):
        return len(self.steps)


def reward_of(q_next: int, pairs, deadlock_set, cfg: RewardConfig) -> float:
    """Classify the entered automaton state; exactly one class fires.

    G-states always pay r_goal. Among the rest, deadlock wins over B: a
    B-state that is also a deadlock pays r_deadlock (and the episode ends).
    """
    for good, _bad in pairs:
        if q_next in good:
            return cfg.r_goal
    if q_next in deadlock_set:
        return cfg.r_deadlock
    for _good, bad in pairs:
        if q_next in bad:
            return cfg.r_bad
    return cfg.r_other


def product_step(env: Environment, pruned: PrunedDRA, s: ProductState, a: int,
                 rng, cfg: RewardConfig = RewardConfig(), noise: bool = True):
    """Advance simulator and automaton one step.

    The automaton consumes the label observed at the successor state
    (restricted to its own alphabet). Returns (s', reward, terminal);
    terminal iff the automaton entered a deadlock state.
    """
    x2 = world.step_dynamics(env, s.x, a, rng, noise=noise)
    sym = world.label(env, x2) & frozenset(pruned.ap)
    q2 = pruned.step(s.q, sym)
    r = reward_of(q2, pruned.pairs, pruned.deadlocks, cfg)
    return ProductState(x2, q2), r, q2 in pruned.deadlocks


def run_episode(env: Environment, pruned: PrunedDRA, policy, t_max: int, rng,
                cfg: RewardConfig = RewardConfig(), gamma: float = 0.99,
                x0: AgentState | None = None, noise: bool = True) -> EpisodeTrace:
    """Roll the policy for at most t_max steps, stopping early on deadlock.

    policy is called as policy(env, x, q) -> action index. Visit counts
    cover the automaton states of the whole run including the initial one.
    """
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    x = x0 if x0 is not None else world.sample_initial_state(env, rng)
    s = ProductState(x, pruned.initial)
    counts: dict[int, int] = {s.q: 1}
    steps = []
    ret = 0.0
    disc = 1.0
    cause = "horizon"
    for _ in range(t_max):
        a = policy(env, s.x, s.q)
        s2, r, terminal = product_step(env, pruned, s, a, rng, cfg, noise=noise)
        steps.append(Transition(s, a, r, s2, terminal))
        counts[s2.q] = counts.get(s2.q, 0) + 1
        ret += disc * r
        disc *= gamma
        s = s2
        if terminal:
            cause = "deadlock"
            break
    return EpisodeTrace(steps=steps, cause=cause, visit_counts=counts,
                        discounted_return=ret)


def classify_success(trace_or_counts, pruned: PrunedDRA) -> bool:
    """Success: some accepting set visited at least twice, no deadlock
    state ever visited."""
    counts = (trace_or_counts.visit_counts
              if isinstance(trace_or_counts, EpisodeTrace) else trace_or_counts)
    return is_accepting_run_prefix(pruned, counts)


def dump_trace_jsonl(trace: EpisodeTrace, fh) -> None:
    """One transition per line, for debugging and replay."""
    for t, tr in enumerate(trace.steps):
        fh.write(json.dumps({
            "t": t,
            "x": [tr.s.x.p1, tr.s.x.p2, tr.s.x.theta],
            "q": tr.s.q,
            "a": tr.a,
            "r": tr.r,
            "x2": [tr.s2.x.p1, tr.s2.x.p2, tr.s2.x.theta],
            "q2": tr.s2.q,
            "terminal": tr.terminal,
        }) + "\n")
