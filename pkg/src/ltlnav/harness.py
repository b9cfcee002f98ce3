"""Experiment orchestration: task presets, test-time accuracy evaluation,
the full train-and-compare pipeline with CSV and SVG artifacts, and the
episodes-to-threshold sample-efficiency comparison."""
from __future__ import annotations

import json
import math
import os
import statistics
from dataclasses import dataclass, field, replace

import numpy as np

from . import automaton, bias, learner, ltl, product, world
from .bias import build_dataset, save_dataset_csv, train_bias_model
from .learner import (ExplorationSchedule, TrainConfig, TrainedPolicy,
                      TrainingLog, train)
from .product import RewardConfig
from .world import DEFAULT_REGIONS, Environment


@dataclass(frozen=True)
class TaskPreset:
    """A shipped navigation task: formula, proposition set, region layout,
    environment group and the reference automaton size reported for it."""

    name: str
    formula: str
    atoms: tuple
    regions: dict
    group: str
    ref_states: int
    ref_pairs: int


def _preset(name, formula, atoms, group, ref_states):
    regions = {a: DEFAULT_REGIONS[a] for a in atoms if a != "obs"}
    return TaskPreset(name=name, formula=formula, atoms=tuple(atoms),
                      regions=regions, group=group, ref_states=ref_states,
                      ref_pairs=1)


PRESETS = {
    "case1": _preset(
        "case1", "F r1 & F r2 & F r3 & G !obs",
        ("r1", "r2", "r3", "obs"), "A", 9),
    "case2": _preset(
        "case2", "F r1 & F r2 & F r3 & G !obs",
        ("r1", "r2", "r3", "obs"), "B", 9),
    "case3": _preset(
        "case3", "F r1 & F r4 & (!r4 U r1) & F r2 & F r3 & G !obs",
        ("r1", "r2", "r3", "r4", "obs"), "A", 13),
    "case4": _preset(
        "case4", "F r1 & F r4 & (!r4 U r1) & G F r2 & G F r3 & G !obs",
        ("r1", "r2", "r3", "r4", "obs"), "A", 10),
}


def task_to_json(preset: TaskPreset) -> dict:
    return {
        "name": preset.name,
        "formula": preset.formula,
        "atoms": list(preset.atoms),
        "regions": {n: {"c": list(r.center), "hw": r.half_width}
                    for n, r in preset.regions.items()},
        "group": preset.group,
    }


def task_from_json(data: dict) -> TaskPreset:
    regions = {n: world.Region(tuple(r["c"]), r["hw"])
               for n, r in data.get("regions", {}).items()}
    return TaskPreset(name=data.get("name", "custom"),
                      formula=data["formula"],
                      atoms=tuple(data["atoms"]),
                      regions=regions,
                      group=data.get("group", "A"),
                      ref_states=data.get("ref_states", 0),
                      ref_pairs=data.get("ref_pairs", 1))


def load_task(path_or_name: str) -> TaskPreset:
    if path_or_name in PRESETS:
        return PRESETS[path_or_name]
    with open(path_or_name) as fh:
        return task_from_json(json.load(fh))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    """Success counts of greedy rollouts from shared random starts."""

    per_env: list   # [{"env_id", "successes", "n"}]
    seed: int
    checkpoint_id: str = ""
    undefined: bool = False

    @property
    def accuracy(self):
        """Percentage of successful runs, or None when no runs were made."""
        total = sum(e["n"] for e in self.per_env)
        if total == 0:
            return None
        return 100.0 * sum(e["successes"] for e in self.per_env) / total

    def to_json(self) -> dict:
        return {"per_env": self.per_env, "seed": self.seed,
                "checkpoint_id": self.checkpoint_id,
                "accuracy": self.accuracy, "undefined": self.undefined}


def evaluate(policy, pruned, envs, n_starts: int = 120, horizon: int = 500,
             seed: int = 0, checkpoint_id: str = "") -> EvalReport:
    """Metric: fraction of greedy rollouts that visit an accepting set at
    least twice without touching a deadlock state.

    Starts derive from `seed` and the (environment, start) index only, so
    different checkpoints evaluated with the same seed face identical
    initial states. `policy` is any object with act(env, x, q) -> action.
    """
    per_env = []
    for ei, env in enumerate(envs):
        successes = 0
        for si in range(n_starts):
            rng = np.random.default_rng(np.random.SeedSequence((seed, ei, si)))
            x0 = world.sample_initial_state(env, rng)
            trace = product.run_episode(
                env, pruned, lambda e, x, q: policy.act(e, x, q),
                t_max=horizon, rng=rng, x0=x0)
            if product.classify_success(trace, pruned):
                successes += 1
        per_env.append({"env_id": env.env_id or f"env{ei}",
                        "successes": successes, "n": n_starts})
    return EvalReport(per_env=per_env, seed=seed, checkpoint_id=checkpoint_id,
                      undefined=(n_starts == 0))


# ---------------------------------------------------------------------------
# Return curves and sample efficiency
# ---------------------------------------------------------------------------

def moving_average(values, window: int) -> np.ndarray:
    """Trailing mean over full windows; positions before the first full
    window are NaN. A constant series maps to the same constant."""
    values = np.asarray(values, float)
    out = np.full(len(values), np.nan)
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(values) >= window:
        csum = np.concatenate([[0.0], np.cumsum(values)])
        out[window - 1 :] = (csum[window:] - csum[:-window]) / window
    return out


def episodes_to_threshold(returns, threshold: float, window: int = 100):
    """First episode number (1-based, at the window end) whose trailing
    moving-average return reaches the threshold; math.inf when never."""
    ma = moving_average(returns, window)
    hits = np.flatnonzero(~np.isnan(ma) & (ma >= threshold))
    return math.inf if len(hits) == 0 else int(hits[0]) + 1


def compare_sample_efficiency(runs_ours, runs_baseline, threshold: float,
                              window: int = 100) -> dict:
    """Per-seed episodes-to-threshold for both methods plus medians and
    never-reached counts. Inputs are lists of per-seed return sequences."""
    ours = [episodes_to_threshold(r, threshold, window) for r in runs_ours]
    base = [episodes_to_threshold(r, threshold, window) for r in runs_baseline]
    return {
        "threshold": threshold,
        "window": window,
        "ours": ours,
        "baseline": base,
        "median_ours": statistics.median(ours),
        "median_baseline": statistics.median(base),
        "failures_ours": sum(1 for v in ours if math.isinf(v)),
        "failures_baseline": sum(1 for v in base if math.isinf(v)),
    }


# ---------------------------------------------------------------------------
# Native SVG line plots
# ---------------------------------------------------------------------------

def plot_series_svg(path, series, title="", xlabel="", ylabel="",
                    width=640, height=400):
    """Write a minimal line plot: axes, tick labels at the extremes and one
    polyline per (x, y, label, color) series. NaNs split the polyline."""
    margin = 60
    xs_all = np.concatenate([np.asarray(s[0], float) for s in series])
    ys_all = np.concatenate([np.asarray(s[1], float) for s in series])
    finite = np.isfinite(ys_all)
    if not finite.any():
        xs_all, ys_all = np.array([0.0, 1.0]), np.array([0.0, 1.0])
        finite = np.array([True, True])
    x_lo, x_hi = float(xs_all.min()), float(xs_all.max())
    y_lo, y_hi = float(ys_all[finite].min()), float(ys_all[finite].max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def px(x):
        return margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin)

    def py(y):
        return height - margin - (y - y_lo) / (y_hi - y_lo) * (height - 2 * margin)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
           f'height="{height}" viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
           f'y2="{height - margin}" stroke="black"/>',
           f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
           f'y2="{height - margin}" stroke="black"/>']
    if title:
        out.append(f'<text x="{width / 2}" y="20" text-anchor="middle" '
                   f'font-size="14">{title}</text>')
    if xlabel:
        out.append(f'<text x="{width / 2}" y="{height - 12}" '
                   f'text-anchor="middle" font-size="12">{xlabel}</text>')
    if ylabel:
        out.append(f'<text x="16" y="{height / 2}" text-anchor="middle" '
                   f'font-size="12" transform="rotate(-90 16 {height / 2})">'
                   f'{ylabel}</text>')
    for val, anchor, xx, yy in [
        (x_lo, "middle", px(x_lo), height - margin + 16),
        (x_hi, "middle", px(x_hi), height - margin + 16),
        (y_lo, "end", margin - 6, py(y_lo) + 4),
        (y_hi, "end", margin - 6, py(y_hi) + 4),
    ]:
        out.append(f'<text x="{xx}" y="{yy}" text-anchor="{anchor}" '
                   f'font-size="11">{val:.4g}</text>')
    for li, (xs, ys, label, color) in enumerate(series):
        xs = np.asarray(xs, float)
        ys = np.asarray(ys, float)
        run = []
        chunks = []
        for x, y in zip(xs, ys):
            if np.isfinite(y):
                run.append(f"{px(x):.2f},{py(y):.2f}")
            elif run:
                chunks.append(run)
                run = []
        if run:
            chunks.append(run)
        for chunk in chunks:
            out.append(f'<polyline fill="none" stroke="{color}" '
                       f'stroke-width="1.5" points="{" ".join(chunk)}"/>')
        out.append(f'<text x="{width - margin + 4}" y="{margin + 16 * li}" '
                   f'font-size="11" fill="{color}">{label}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# The full experiment pipeline
# ---------------------------------------------------------------------------

DESK_DEFAULTS = {
    "n_train_envs": 2,
    "n_test_envs": 2,
    "dataset_starts": 200,
    "dataset_trials": 20,
    "zeta": 0.1,
    "grid": 12,
    "schedule_horizon": 5_000,
    "bias_hidden": [128, 64],
    "bias_epochs": 50,
    "bias_lr": 1e-3,
    "q_hidden": [64, 64],
    "optimizer": "adam",
    "lr": 1e-3,
    "batch_size": 64,
    "t_max": 500,
    "n_eval_starts": 120,
    "eval_horizon": 500,
    "threshold": 50.0,
    "ma_window": 100,
}

FULL_DEFAULTS = dict(DESK_DEFAULTS, **{
    "n_train_envs": 4,
    "n_test_envs": 4,
    "dataset_starts": 500,
    "schedule_horizon": 200_000,
    "bias_hidden": [2048, 1024],
    "q_hidden": [256, 256],
})


class ExperimentError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


def _generate_group(task, group, count, seed, tag, grid_side):
    """Generate environments, resampling any whose free cells disconnect
    the bias grid (environment generation alone does not know the grid)."""
    envs = []
    attempt = 0
    while len(envs) < count:
        env = world.generate_environment(
            group, np.random.SeedSequence((seed, 7, attempt)),
            regions=task.regions,
            env_id=f"{task.name}-{tag}-{len(envs)}")
        attempt += 1
        if attempt > 200 * count:
            raise world.PlacementBudgetExceeded(
                "could not generate connected environments")
        try:
            bias.build_grid_graph(env, grid_side)
        except bias.DisconnectedFreeSpace:
            continue
        envs.append(env)
    return envs


def run_experiment(config: dict, out_dir=None) -> str:
    """Execute the full pipeline and write artifacts to the output
    directory: per-seed return logs for both methods, accuracy tables on
    training and held-out environments, three SVG plots and a summary with
    the episodes-to-threshold comparison.

    Config keys: task (preset name), group, seeds, episodes, desk_scale,
    out, plus optional overrides of the scale defaults.
    """
    knobs = dict(DESK_DEFAULTS if config.get("desk_scale", True)
                 else FULL_DEFAULTS)
    knobs.update({k: v for k, v in config.items() if k in knobs})
    out_dir = out_dir or config.get("out", "experiment_out")
    os.makedirs(out_dir, exist_ok=True)
    seeds = list(config.get("seeds", [0]))
    episodes = int(config["episodes"])
    task = load_task(config.get("task", "case1"))
    if config.get("group"):
        task = replace(task, group=config["group"])
    root_seed = int(config.get("root_seed", 12_345))

    def stage(name, fn):
        try:
            return fn()
        except Exception as exc:  # noqa: BLE001 - report stage and cause
            raise ExperimentError(name, exc) from exc

    train_envs = stage("gen-env", lambda: _generate_group(
        task, task.group, knobs["n_train_envs"], root_seed, "train",
        knobs["grid"]))
    test_envs = stage("gen-env", lambda: _generate_group(
        task, task.group, knobs["n_test_envs"], root_seed + 1, "test",
        knobs["grid"]))
    env_dir = os.path.join(out_dir, "envs")
    os.makedirs(os.path.join(env_dir, "train"), exist_ok=True)
    os.makedirs(os.path.join(env_dir, "test"), exist_ok=True)
    for env in train_envs:
        world.save_environment(env, os.path.join(env_dir, "train",
                                                 env.env_id + ".json"))
    for env in test_envs:
        world.save_environment(env, os.path.join(env_dir, "test",
                                                 env.env_id + ".json"))

    def compile_task():
        formula = ltl.parse(task.formula, task.atoms)
        dra = automaton.compile_dra(formula)
        pruned = automaton.prune(dra, [frozenset(task.atoms)])
        with open(os.path.join(out_dir, "task.hoa"), "w") as fh:
            fh.write(automaton.export_hoa(dra))
        return pruned

    pruned = stage("compile-automaton", compile_task)

    def make_dataset():
        ds = build_dataset(train_envs, knobs["grid"], knobs["dataset_starts"],
                           seed=root_seed, trials=knobs["dataset_trials"],
                           zeta=knobs["zeta"])
        save_dataset_csv(ds, os.path.join(out_dir, "bias_dataset.csv"))
        return ds

    ds = stage("gen-dataset", make_dataset)

    def fit_bias():
        model = train_bias_model(ds, epochs=knobs["bias_epochs"],
                                 lr=knobs["bias_lr"],
                                 hidden=tuple(knobs["bias_hidden"]),
                                 seed=root_seed)
        model.save(os.path.join(out_dir, "bias_model.json"))
        return model

    bias_model = stage("train-bias", fit_bias)

    logs = {"ours": [], "eps": []}
    final_policies = {}
    for seed in seeds:
        for method in ("ours", "eps"):
            cfg = TrainConfig(
                formula=task.formula, atoms=task.atoms, envs=train_envs,
                episodes=episodes, seed=seed, t_max=knobs["t_max"],
                batch_size=knobs["batch_size"], optimizer=knobs["optimizer"],
                lr=knobs["lr"], q_hidden=tuple(knobs["q_hidden"]),
                schedule=ExplorationSchedule(horizon=knobs["schedule_horizon"]),
                bias_model=bias_model if method == "ours" else None,
            )
            policy, log = stage(f"train-{method}", lambda c=cfg: train(c))
            logs[method].append(log)
            final_policies[(seed, method)] = policy
            policy.save(os.path.join(out_dir, f"policy_{method}_s{seed}.json"))

    for method in ("ours", "eps"):
        with open(os.path.join(out_dir, f"returns_{method}.csv"), "w") as fh:
            fh.write("seed,episode,return\n")
            for seed, log in zip(seeds, logs[method]):
                for row in log.rows:
                    fh.write(f"{seed},{row['episode']},{row['return']!r}\n")

    def run_eval():
        rows = []
        for seed in seeds:
            for method in ("ours", "eps"):
                policy = final_policies[(seed, method)]
                for split, envs in (("train", train_envs), ("test", test_envs)):
                    rep = evaluate(policy, policy.pruned, envs,
                                   n_starts=knobs["n_eval_starts"],
                                   horizon=knobs["eval_horizon"],
                                   seed=root_seed + 99,
                                   checkpoint_id=f"{method}-s{seed}")
                    rows.append((split, method, seed, episodes, rep.accuracy))
        for split in ("train", "test"):
            with open(os.path.join(out_dir, f"acc_{split}.csv"), "w") as fh:
                fh.write("method,seed,episode,accuracy\n")
                for s, m, sd, ep, acc in rows:
                    if s == split:
                        fh.write(f"{m},{sd},{ep},{acc!r}\n")
        return rows

    eval_rows = stage("evaluate", run_eval) if knobs["n_eval_starts"] > 0 else []

    def plots():
        window = knobs["ma_window"]
        series = []
        for method, color in (("ours", "#1f77b4"), ("eps", "#ff7f0e")):
            mat = np.stack([log.returns() for log in logs[method]])
            ma = np.stack([moving_average(r, window) for r in mat])
            mean_ma = np.nanmean(ma, axis=0) if len(ma) else ma
            series.append((np.arange(1, episodes + 1), mean_ma, method, color))
        plot_series_svg(os.path.join(out_dir, "fig_return.svg"), series,
                        title=f"{task.name}: moving-average return "
                              f"(window {window})",
                        xlabel="episode", ylabel="return")
        for split in ("train", "test"):
            acc_series = []
            for method, color in (("ours", "#1f77b4"), ("eps", "#ff7f0e")):
                pts = [(ep, acc) for s, m, sd, ep, acc in eval_rows
                       if s == split and m == method and acc is not None]
                if pts:
                    xs = [p[0] for p in pts]
                    ys = [p[1] for p in pts]
                else:
                    xs, ys = [0], [np.nan]
                acc_series.append((xs, ys, method, color))
            plot_series_svg(os.path.join(out_dir, f"fig_acc_{split}.svg"),
                            acc_series,
                            title=f"{task.name}: accuracy ({split})",
                            xlabel="episode", ylabel="accuracy %")

    stage("plot", plots)

    comparison = compare_sample_efficiency(
        [log.returns() for log in logs["ours"]],
        [log.returns() for log in logs["eps"]],
        threshold=knobs["threshold"], window=knobs["ma_window"])
    summary = {
        "task": task.name,
        "group": task.group,
        "seeds": seeds,
        "episodes": episodes,
        "comparison": {
            k: (None if isinstance(v, float) and math.isinf(v) else
                [None if isinstance(x, float) and math.isinf(x) else x
                 for x in v] if isinstance(v, list) else v)
            for k, v in comparison.items()
        },
        "accuracy": [
            {"split": s, "method": m, "seed": sd, "episode": ep,
             "accuracy": acc}
            for s, m, sd, ep, acc in eval_rows
        ],
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return out_dir
