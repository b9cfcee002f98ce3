"""Mission-driven exploration machinery: workspace discretization graph,
construction of the (features, goal, safe-best-action) dataset, the action
classifier trained on it, and goal selection over the pruned automaton.

Dataset protocol (the reproducibility contract relied on by callers that
recompute labels independently): for environment index k and start index i
under root seed s, the per-start trial stream is
np.random.default_rng(np.random.SeedSequence((s, k, i))) and is consumed as
two normal draws per simulated step, looping actions in index order and,
per action, trials z = 0..Z-1 in order. Start states are drawn beforehand
from np.random.default_rng(np.random.SeedSequence((s, k))).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from . import world
from .automaton import PrunedDRA
from .neural import MLP, Adam, DivergenceError
from .world import AgentState, Environment


class DisconnectedFreeSpace(RuntimeError):
    """Obstacle-free cells do not form a single connected graph."""


@dataclass
class GridGraph:
    """Uniform cell partition of the workspace with 4-connected adjacency
    between obstacle-free cells, Euclidean center-to-center edge weights
    and all-pairs shortest-path costs."""

    side: int
    bounds: tuple
    centers: np.ndarray  # (m, 2), row-major: index = iy * side + ix
    avoid: frozenset
    dist: np.ndarray     # (m, m) shortest-path costs, inf when unreachable

    @property
    def n_cells(self) -> int:
        return self.side * self.side

    def cell_index(self, p1: float, p2: float) -> int:
        ix = min(int(p1 / self.bounds[0] * self.side), self.side - 1)
        iy = min(int(p2 / self.bounds[1] * self.side), self.side - 1)
        return iy * self.side + ix

    def goal_cells(self) -> list:
        return [i for i in range(self.n_cells) if i not in self.avoid]


def build_grid_graph(env: Environment, m_per_side: int) -> GridGraph:
    """Discretize the workspace into m_per_side^2 cells and solve all-pairs
    shortest paths over the free cells.

    A cell is avoided when its square intersects any obstacle disk; edges
    never touch avoided cells. Raises DisconnectedFreeSpace when the free
    cells split into multiple components.
    """
    if m_per_side < 2:
        raise ValueError("need at least a 2x2 grid")
    side = m_per_side
    wx, wy = env.bounds
    cw, ch = wx / side, wy / side
    m = side * side
    centers = np.empty((m, 2))
    avoid = set()
    for iy in range(side):
        for ix in range(side):
            i = iy * side + ix
            centers[i] = ((ix + 0.5) * cw, (iy + 0.5) * ch)
            x0, x1 = ix * cw, (ix + 1) * cw
            y0, y1 = iy * ch, (iy + 1) * ch
            for ob in env.obstacles:
                nx = min(max(ob.center[0], x0), x1)
                ny = min(max(ob.center[1], y0), y1)
                if math.hypot(nx - ob.center[0], ny - ob.center[1]) <= ob.radius:
                    avoid.add(i)
                    break

    rows, cols, weights = [], [], []
    for iy in range(side):
        for ix in range(side):
            i = iy * side + ix
            if i in avoid:
                continue
            for jx, jy in ((ix + 1, iy), (ix, iy + 1)):
                if jx >= side or jy >= side:
                    continue
                j = jy * side + jx
                if j in avoid:
                    continue
                rows.append(i)
                cols.append(j)
                weights.append(float(np.hypot(*(centers[j] - centers[i]))))
    graph = coo_matrix((weights, (rows, cols)), shape=(m, m))
    free = sorted(set(range(m)) - avoid)
    n_comp, labels = connected_components(graph, directed=False)
    if len({labels[i] for i in free}) != 1:
        raise DisconnectedFreeSpace(
            "free cells form more than one connected component"
        )
    dist = dijkstra(graph, directed=False)
    return GridGraph(side=side, bounds=(wx, wy), centers=centers,
                     avoid=frozenset(avoid), dist=dist)


# ---------------------------------------------------------------------------
# Dataset construction
# ---------------------------------------------------------------------------

@dataclass
class BiasDatapoint:
    psi: np.ndarray      # (7,) features at the start state
    goal: np.ndarray     # (2,) goal cell center
    action: int
    env_id: str = ""
    start: AgentState | None = None
    p_safe: np.ndarray | None = None  # per-action safe-landing frequencies


@dataclass
class BiasDataset:
    points: list

    def __len__(self):
        return len(self.points)

    def arrays(self):
        x = np.array([np.concatenate([p.psi, p.goal]) for p in self.points])
        y = np.array([p.action for p in self.points], dtype=int)
        return x, y


CSV_HEADER = ["psi1", "psi2", "psi3", "psi4", "psi5", "psi6", "psi7",
              "goal_x", "goal_y", "action"]


def save_dataset_csv(ds: BiasDataset, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for p in ds.points:
            writer.writerow([repr(v) for v in p.psi]
                            + [repr(p.goal[0]), repr(p.goal[1]), p.action])


def load_dataset_csv(path: str) -> BiasDataset:
    points = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected dataset header {header!r}")
        for row in reader:
            points.append(BiasDatapoint(
                psi=np.array([float(v) for v in row[:7]]),
                goal=np.array([float(row[7]), float(row[8])]),
                action=int(row[9]),
            ))
    return BiasDataset(points)


def safe_action_set(p: np.ndarray, zeta: float) -> np.ndarray:
    """Indices of actions whose safe-landing frequency is within zeta of
    the best one; nonempty for zeta >= 0 since the argmax always passes."""
    p = np.asarray(p, float)
    return np.flatnonzero(p >= p.max() - zeta)


def simulate_action_outcomes(env: Environment, grid: GridGraph,
                             start: AgentState, trials: int, rng):
    """For every action, simulate `trials` noisy one-step outcomes from
    `start` and record the landing cell. Returns (cells, safe) with shapes
    (n_actions, trials); safe marks landings outside avoided cells.

    Consumes the rng in (action, trial) order which is part of the dataset
    protocol documented in the module docstring.
    """
    n_a = len(world.ACTIONS)
    cells = np.empty((n_a, trials), dtype=int)
    safe = np.empty((n_a, trials), dtype=bool)
    for a in range(n_a):
        for z in range(trials):
            x2 = world.step_dynamics(env, start, a, rng)
            c = grid.cell_index(x2.p1, x2.p2)
            cells[a, z] = c
            safe[a, z] = c not in grid.avoid
    return cells, safe


def best_safe_actions(grid: GridGraph, cells, safe, goals, trials: int,
                      zeta: float):
    """Per-goal best safe action from simulated one-step outcomes.

    p[a] = fraction of trials landing safely. Goal distances average over
    the surviving (safe) trials only; actions with no safe trial get an
    infinite distance and are never selected. Ties take the lowest action
    index. Returns (p, actions_per_goal).
    """
    n_a = cells.shape[0]
    n = safe.sum(axis=1)
    p = n / trials
    dsum = np.zeros((n_a, len(goals)))
    for a in range(n_a):
        for z in range(trials):
            if safe[a, z]:
                dsum[a] += grid.dist[cells[a, z], goals]
    with np.errstate(invalid="ignore"):
        dbar = np.where(n[:, None] > 0, dsum / np.maximum(n, 1)[:, None],
                        np.inf)
    unsafe = p < p.max() - zeta
    dbar = dbar.copy()
    dbar[unsafe, :] = np.inf
    return p, np.argmin(dbar, axis=0)


def build_dataset(envs, grid_side: int, starts_per_env: int, seed,
                  trials: int = 20, zeta: float = 0.1,
                  keep_provenance: bool = True) -> BiasDataset:
    """Build the exploration-bias training set.

    For each environment: sample free-space starts; for each start simulate
    every action `trials` times; for every free goal cell emit a datapoint
    (features(start), goal center, safest action of least expected
    goal distance).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0.0 <= zeta <= 1.0:
        raise ValueError("zeta must be in [0, 1]")
    points = []
    for k, env in enumerate(envs):
        grid = build_grid_graph(env, grid_side)
        goals = grid.goal_cells()
        start_rng = np.random.default_rng(np.random.SeedSequence((seed, k)))
        starts = [world.sample_initial_state(env, start_rng)
                  for _ in range(starts_per_env)]
        for i, start in enumerate(starts):
            psi = world.features(env, start)
            trial_rng = np.random.default_rng(
                np.random.SeedSequence((seed, k, i)))
            cells, safe = simulate_action_outcomes(env, grid, start, trials,
                                                   trial_rng)
            p, best = best_safe_actions(grid, cells, safe, goals, trials, zeta)
            for gi, goal in enumerate(goals):
                points.append(BiasDatapoint(
                    psi=psi,
                    goal=grid.centers[goal].copy(),
                    action=int(best[gi]),
                    env_id=env.env_id if keep_provenance else "",
                    start=start if keep_provenance else None,
                    p_safe=p.copy() if keep_provenance else None,
                ))
    return BiasDataset(points)


# ---------------------------------------------------------------------------
# The action classifier
# ---------------------------------------------------------------------------

@dataclass
class BiasModel:
    """Softmax classifier over the action set, input [features, goal]."""

    net: MLP
    meta: dict = field(default_factory=dict)

    def distribution(self, psi, goal) -> np.ndarray:
        return self.net.forward(np.concatenate([np.asarray(psi, float),
                                                np.asarray(goal, float)]))

    def save(self, path: str) -> None:
        data = self.net.to_dict()
        data["meta"] = self.meta
        import json
        with open(path, "w") as fh:
            json.dump(data, fh)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "BiasModel":
        import json
        with open(path) as fh:
            data = json.load(fh)
        meta = data.pop("meta", {})
        return cls(net=MLP.from_dict(data), meta=meta)


def train_bias_model(ds: BiasDataset, epochs: int = 50, lr: float = 1e-3,
                     hidden=(2048, 1024), batch_size: int = 128, seed=0,
                     standardize: bool = True) -> BiasModel:
    """Fit the classifier by minibatch Adam on the mean cross-entropy.

    Inputs are optionally standardized with statistics stored inside the
    model. Raises DivergenceError if the loss goes non-finite; reports the
    final training accuracy and per-epoch mean losses in the metadata.
    """
    if len(ds) < 1:
        raise ValueError("dataset is empty")
    x, y = ds.arrays()
    mean = std = None
    if standardize:
        mean = x.mean(axis=0)
        std = np.maximum(x.std(axis=0), 1e-8)
    net = MLP([x.shape[1], *hidden, len(world.ACTIONS)], head="softmax",
              seed=seed, input_mean=mean, input_std=std)
    opt = Adam(lr)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))
    losses = []
    for _ in range(epochs):
        order = rng.permutation(len(x))
        epoch_losses = []
        for lo in range(0, len(x), batch_size):
            idx = order[lo : lo + batch_size]
            epoch_losses.append(
                net.train_step(x[idx], y[idx], "cross-entropy", opt))
        losses.append(float(np.mean(epoch_losses)))
    preds = np.argmax(net.forward(x), axis=1)
    accuracy = float(np.mean(preds == y))
    return BiasModel(net=net, meta={
        "epochs": epochs, "lr": lr, "hidden": list(hidden),
        "losses": losses, "train_accuracy": accuracy,
    })


def biased_action(model: BiasModel, psi, goal) -> int:
    """Most likely action for steering from psi toward the goal point;
    ties break toward the lowest action index."""
    return int(np.argmax(model.distribution(psi, goal)))


# ---------------------------------------------------------------------------
# Goal selection over the pruned automaton
# ---------------------------------------------------------------------------

def select_goal(pruned: PrunedDRA, q: int, task_regions: dict, rng):
    """Pick the next automaton subgoal and a workspace point realizing it.

    Candidate successors are the states exactly one distance level closer
    to acceptance that some single region label reaches in one hop (regions
    are the only label-bearing sets, so only they can trigger the wanted
    transition); the successor and then the region are chosen uniformly.
    Returns (q_goal, goal_point, region_name).
    """
    d = pruned.distance
    if math.isinf(d[q]) or d[q] < 1:
        raise ValueError(
            f"state {q} has distance {d[q]}; goal biasing needs 1 <= d < inf"
        )
    by_succ: dict[int, list] = {}
    for name in sorted(task_regions):
        if name not in pruned.ap:
            continue
        q2 = pruned.step(q, frozenset({name}))
        if d[q2] == d[q] - 1:
            by_succ.setdefault(q2, []).append(name)
    if not by_succ:
        raise ValueError(
            f"no region-labelled transition makes progress from state {q}"
        )
    q_goal = int(rng.choice(sorted(by_succ)))
    name = str(rng.choice(by_succ[q_goal]))
    region = task_regions[name]
    return q_goal, np.array(region.center, float), name
