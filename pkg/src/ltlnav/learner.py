"""Episodic deep Q-learning over the product of simulator and automaton,
with the three-way behavior policy (greedy / mission-biased / random) and
linearly decaying exploration."""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import automaton, bias, ltl, product, world
from .automaton import PrunedDRA, export_hoa, import_hoa, prune
from .bias import BiasModel, biased_action, select_goal
from .neural import MLP, Adam, SGD
from .product import ProductState, RewardConfig, reward_of
from .world import Environment

POLICY_FORMAT_TAG = "ltlnav-policy-v1"
LOG_HEADER = ["episode", "return", "steps", "eps", "delta_b", "delta_e",
              "loss_mean", "greedy_ct", "biased_ct", "random_ct"]


@dataclass(frozen=True)
class ExplorationSchedule:
    """Linear decay keyed on the episode index.

    The biased share starts at delta_b0 and hits zero at `horizon`
    episodes; the random share decays `rate_ratio` times slower (zero at
    horizon * rate_ratio). The total exploration probability is their sum.
    """

    delta_b0: float = 0.5
    delta_e0: float = 0.5
    horizon: int = 200_000
    rate_ratio: float = 1.25

    def at(self, episode: int):
        if episode < 0:
            raise ValueError("episode must be >= 0")
        db = self.delta_b0 * max(0.0, 1.0 - episode / self.horizon)
        de = self.delta_e0 * max(0.0, 1.0 - episode / (self.horizon * self.rate_ratio))
        return db + de, db, de


def schedule_at(sch: ExplorationSchedule, episode: int):
    """(eps, delta_b, delta_e) at the given episode."""
    return sch.at(episode)


class ReplayMemory:
    """Bounded FIFO of transitions with uniform without-replacement batch
    sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.data = []
        self.pos = 0

    def __len__(self):
        return len(self.data)

    def push(self, item) -> None:
        if len(self.data) < self.capacity:
            self.data.append(item)
        else:
            self.data[self.pos] = item
        self.pos = (self.pos + 1) % self.capacity

    def sample(self, batch_size: int, rng) -> list:
        idx = rng.choice(len(self.data), size=batch_size, replace=False)
        return [self.data[i] for i in idx]


def encode_state(psi: np.ndarray, q: int, n_states: int) -> np.ndarray:
    """Q-network input: the 7 features followed by a one-hot of the
    automaton state."""
    onehot = np.zeros(n_states)
    onehot[q] = 1.0
    return np.concatenate([psi, onehot])


def greedy_action(qnet: MLP, psi_p: np.ndarray) -> int:
    """argmax over the action values; ties break to the lowest index."""
    return int(np.argmax(qnet.forward(psi_p)))


def sample_action(qnet: MLP, psi: np.ndarray, q: int, n_states: int,
                  eps: float, delta_b: float, bias_model, goal_point, rng):
    """Draw one action from the three-way behavior policy.

    With probability 1 - eps the greedy action, with probability delta_b
    the biased action toward goal_point, else uniformly random. When no
    goal or model is available the biased probability mass reverts to
    random. Returns (action, kind). delta_b == 0 recovers plain
    epsilon-greedy.
    """
    u = rng.random()
    if u < 1.0 - eps:
        return greedy_action(qnet, encode_state(psi, q, n_states)), "greedy"
    if u < 1.0 - eps + delta_b and bias_model is not None and goal_point is not None:
        return biased_action(bias_model, psi, goal_point), "biased"
    return int(rng.integers(len(world.ACTIONS))), "random"


@dataclass
class TrainedPolicy:
    """Q-network plus the pruned automaton it was trained against.

    Deployment tracks the automaton state from observed labels and acts
    greedily on (features, automaton state).
    """

    qnet: MLP
    pruned: PrunedDRA
    mutex_groups: list
    meta: dict = field(default_factory=dict)

    def act(self, env: Environment, x, q: int) -> int:
        psi = world.features(env, x)
        return greedy_action(self.qnet, encode_state(psi, q, self.pruned.n_states))

    def save(self, path: str) -> None:
        data = {
            "format": POLICY_FORMAT_TAG,
            "qnet": self.qnet.to_dict(),
            "hoa": export_hoa(self.pruned.dra),
            "mutex_groups": [sorted(g) for g in self.mutex_groups],
            "meta": self.meta,
        }
        with open(path, "w") as fh:
            json.dump(data, fh)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "TrainedPolicy":
        with open(path) as fh:
            data = json.load(fh)
        if data.get("format") != POLICY_FORMAT_TAG:
            raise ValueError(f"unsupported policy format {data.get('format')!r}")
        groups = [frozenset(g) for g in data["mutex_groups"]]
        pruned = prune(import_hoa(data["hoa"]), groups)
        return cls(qnet=MLP.from_dict(data["qnet"]), pruned=pruned,
                   mutex_groups=groups, meta=data.get("meta", {}))


@dataclass
class TrainConfig:
    formula: str
    atoms: tuple
    envs: list
    episodes: int
    seed: int = 0
    t_max: int = 500
    gamma: float = 0.99
    batch_size: int = 64
    replay_capacity: int = 100_000
    optimizer: str = "sgd"  # per-step batch TD gradient; "adam" available
    lr: float = 1e-3
    q_hidden: tuple = (256, 256)
    schedule: ExplorationSchedule = field(default_factory=ExplorationSchedule)
    reward: RewardConfig = field(default_factory=RewardConfig)
    bias_model: BiasModel | None = None
    mutex_groups: list | None = None  # default: all atoms mutually exclusive
    bootstrap_replay: bool = False
    bootstrap_max: int = 10_000
    ckpt_every: int = 0
    out_dir: str | None = None
    dump_traces: bool = False


@dataclass
class TrainingLog:
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def returns(self) -> np.ndarray:
        return np.array([r["return"] for r in self.rows])

    def to_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(LOG_HEADER) + "\n")
            for r in self.rows:
                fh.write(",".join(repr(r[k]) if isinstance(r[k], float)
                                  else str(r[k]) for k in LOG_HEADER) + "\n")

    @classmethod
    def from_csv(cls, path: str) -> "TrainingLog":
        rows = []
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if header != LOG_HEADER:
                raise ValueError(f"unexpected log header {header!r}")
            for line in fh:
                vals = line.strip().split(",")
                row = {}
                for key, val in zip(LOG_HEADER, vals):
                    row[key] = (int(val) if key in ("episode", "steps",
                                                    "greedy_ct", "biased_ct",
                                                    "random_ct")
                                else float(val))
                rows.append(row)
        return cls(rows=rows)


def _bootstrap_from_dataset(cfg, pruned, replay, dataset):
    """Seed the replay memory from dataset points (start state, chosen
    action) by simulating one product step each from the initial automaton
    state."""
    env_by_id = {e.env_id: e for e in cfg.envs}
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 2)))
    n = 0
    for point in dataset.points:
        if n >= min(cfg.bootstrap_max, cfg.replay_capacity):
            break
        env = env_by_id.get(point.env_id)
        if env is None or point.start is None:
            continue
        s = ProductState(point.start, pruned.initial, psi=point.psi)
        s2, r, terminal = product.product_step(env, pruned, s, point.action,
                                               rng, cfg.reward)
        psi2 = world.features(env, s2.x)
        replay.push((encode_state(point.psi, s.q, pruned.n_states),
                     point.action, r,
                     encode_state(psi2, s2.q, pruned.n_states), terminal))
        n += 1
    return n


def train(cfg: TrainConfig, dataset=None):
    """Run the episodic training loop and return (policy, log).

    Per step: act with the behavior policy, advance the product, store the
    transition, then regress a sampled batch toward
    r + gamma * max_a' Q(s', a') (just r at terminal transitions). The
    goal used for biased actions is resampled whenever the automaton state
    changes and cached otherwise. Exploration decays per episode.
    """
    formula = ltl.parse(cfg.formula, cfg.atoms)
    dra = automaton.compile_dra(formula)
    groups = cfg.mutex_groups or [frozenset(cfg.atoms)]
    pruned = prune(dra, groups)
    n_q = pruned.n_states

    qnet = MLP([7 + n_q, *cfg.q_hidden, len(world.ACTIONS)], head="linear",
               seed=np.random.SeedSequence((cfg.seed, 0)))
    opt = Adam(cfg.lr) if cfg.optimizer == "adam" else SGD(cfg.lr)
    replay = ReplayMemory(cfg.replay_capacity)
    rng_batch = np.random.default_rng(np.random.SeedSequence((cfg.seed, 1)))
    log = TrainingLog(meta={"seed": cfg.seed, "episodes": cfg.episodes,
                            "n_states": n_q, "bootstrap_count": 0})
    if cfg.bootstrap_replay:
        if dataset is None:
            raise ValueError("bootstrap_replay needs the bias dataset")
        log.meta["bootstrap_count"] = _bootstrap_from_dataset(
            cfg, pruned, replay, dataset)

    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
    trace_fh = (open(os.path.join(cfg.out_dir, "traces.jsonl"), "w")
                if cfg.dump_traces and cfg.out_dir else None)

    def make_policy(meta):
        return TrainedPolicy(qnet=qnet, pruned=pruned, mutex_groups=groups,
                             meta=meta)

    for k in range(cfg.episodes):
        eps, delta_b, delta_e = cfg.schedule.at(k)
        rng_world = np.random.default_rng(np.random.SeedSequence((cfg.seed, 3, k)))
        rng_act = np.random.default_rng(np.random.SeedSequence((cfg.seed, 4, k)))
        rng_goal = np.random.default_rng(np.random.SeedSequence((cfg.seed, 5, k)))
        env = cfg.envs[int(rng_world.integers(len(cfg.envs)))]
        x = world.sample_initial_state(env, rng_world)
        q = pruned.initial
        goal_cache: dict[int, object] = {}
        counts = {"greedy": 0, "biased": 0, "random": 0}
        losses = []
        ret, disc = 0.0, 1.0
        steps = 0
        trace_rows = []
        for _ in range(cfg.t_max):
            psi = world.features(env, x)
            goal_point = None
            if cfg.bias_model is not None and delta_b > 0.0:
                if q not in goal_cache:
                    d = pruned.distance[q]
                    if 1 <= d < math.inf:
                        goal_cache[q] = select_goal(pruned, q, env.regions,
                                                    rng_goal)
                    else:
                        goal_cache[q] = None
                cached = goal_cache[q]
                goal_point = cached[1] if cached is not None else None
            a, kind = sample_action(qnet, psi, q, n_q, eps, delta_b,
                                    cfg.bias_model, goal_point, rng_act)
            counts[kind] += 1
            s2, r, terminal = product.product_step(
                env, pruned, ProductState(x, q), a, rng_world, cfg.reward)
            psi2 = world.features(env, s2.x)
            replay.push((encode_state(psi, q, n_q), a, r,
                         encode_state(psi2, s2.q, n_q), terminal))
            if len(replay) >= cfg.batch_size:
                batch = replay.sample(cfg.batch_size, rng_batch)
                xs = np.stack([b[0] for b in batch])
                acts = np.array([b[1] for b in batch], dtype=int)
                rs = np.array([b[2] for b in batch])
                x2s = np.stack([b[3] for b in batch])
                terms = np.array([b[4] for b in batch], dtype=float)
                qmax = qnet.forward(x2s).max(axis=1)
                y = rs + cfg.gamma * qmax * (1.0 - terms)
                losses.append(qnet.train_step(xs, (acts, y), "td-mse", opt))
            ret += disc * r
            disc *= cfg.gamma
            steps += 1
            if trace_fh is not None:
                trace_rows.append({
                    "t": steps - 1, "x": [x.p1, x.p2, x.theta], "q": q,
                    "a": a, "r": r,
                    "x2": [s2.x.p1, s2.x.p2, s2.x.theta], "q2": s2.q,
                    "terminal": terminal,
                })
            x, q = s2.x, s2.q
            if terminal:
                break
        log.rows.append({
            "episode": k + 1, "return": ret, "steps": steps, "eps": eps,
            "delta_b": delta_b, "delta_e": delta_e,
            "loss_mean": float(np.mean(losses)) if losses else math.nan,
            "greedy_ct": counts["greedy"], "biased_ct": counts["biased"],
            "random_ct": counts["random"],
        })
        if trace_fh is not None:
            for row in trace_rows:
                row["episode"] = k + 1
                trace_fh.write(json.dumps(row) + "\n")
        if cfg.ckpt_every and cfg.out_dir and (k + 1) % cfg.ckpt_every == 0:
            make_policy({"episode": k + 1, "seed": cfg.seed}).save(
                os.path.join(cfg.out_dir, f"ckpt_{k + 1:07d}.json"))

    if trace_fh is not None:
        trace_fh.close()
    policy = make_policy({"episode": cfg.episodes, "seed": cfg.seed,
                          "formula": cfg.formula})
    if cfg.out_dir:
        policy.save(os.path.join(cfg.out_dir, "policy_final.json"))
        log.to_csv(os.path.join(cfg.out_dir, "log.csv"))
    return policy, log
