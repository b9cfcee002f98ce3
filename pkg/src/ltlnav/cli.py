"""Command-line front end for the library pipeline."""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import automaton, bias, harness, learner, ltl, world


def _infer_atoms(text: str) -> tuple:
    names = set()
    for tok in ltl._tokenize(text):
        if tok.kind == "ident" and tok.text not in ("true", "U", "X", "F", "G"):
            names.add(tok.text)
    return tuple(sorted(names))


def cmd_compile_automaton(args) -> int:
    text = args.formula
    if os.path.exists(text):
        with open(text) as fh:
            text = fh.read().strip()
    atoms = tuple(args.atoms.split(",")) if args.atoms else _infer_atoms(text)
    formula = ltl.parse(text, atoms)
    dra = automaton.compile_dra(formula)
    pruned = automaton.prune(dra, [frozenset(atoms)])
    print(f"states: {dra.n_states}  pairs: {len(dra.pairs)}  "
          f"initial distance: {pruned.distance[dra.initial]:.0f}")
    if args.hoa_out:
        with open(args.hoa_out, "w") as fh:
            fh.write(automaton.export_hoa(dra))
        print(f"wrote {args.hoa_out}")
    if args.dot_out:
        with open(args.dot_out, "w") as fh:
            fh.write(automaton.export_dot(dra, pruned.distance))
        print(f"wrote {args.dot_out}")
    return 0


def cmd_gen_env(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    regions = None
    if args.task:
        regions = harness.load_task(args.task).regions
    for i in range(args.count):
        env = world.generate_environment(
            args.group, np.random.SeedSequence((args.seed, i)),
            regions=regions, env_id=f"{args.group}{args.seed}_{i:03d}")
        path = os.path.join(args.out, env.env_id + ".json")
        world.save_environment(env, path)
        print(f"wrote {path} ({len(env.obstacles)} obstacles)")
    return 0


def cmd_gen_dataset(args) -> int:
    envs = world.load_environment_dir(args.envs)
    ds = bias.build_dataset(envs, args.grid, args.M, seed=args.seed,
                            trials=args.Z, zeta=args.zeta)
    bias.save_dataset_csv(ds, args.out)
    print(f"wrote {args.out} ({len(ds)} datapoints from {len(envs)} envs)")
    return 0


def cmd_train_bias(args) -> int:
    ds = bias.load_dataset_csv(args.data)
    hidden = tuple(int(h) for h in args.hidden.split(","))
    model = bias.train_bias_model(ds, epochs=args.epochs, lr=args.lr,
                                  hidden=hidden, seed=args.seed)
    model.save(args.out)
    print(f"wrote {args.out} "
          f"(train accuracy {model.meta['train_accuracy']:.3f})")
    return 0


def cmd_train(args) -> int:
    task = harness.load_task(args.task)
    envs = world.load_environment_dir(args.envs)
    bias_model = None
    if not args.no_bias:
        if not args.bias:
            print("error: give --bias MODEL or pass --no-bias", file=sys.stderr)
            return 2
        bias_model = bias.BiasModel.load(args.bias)
    hidden = tuple(int(h) for h in args.q_hidden.split(","))
    cfg = learner.TrainConfig(
        formula=task.formula, atoms=task.atoms, envs=envs,
        episodes=args.episodes, seed=args.seed, t_max=args.t_max,
        optimizer=args.optimizer, lr=args.lr, q_hidden=hidden,
        schedule=learner.ExplorationSchedule(horizon=args.schedule_horizon),
        bias_model=bias_model, ckpt_every=args.ckpt_every,
        out_dir=args.out, dump_traces=args.dump_traces)
    _policy, log = learner.train(cfg)
    last = log.rows[-1] if log.rows else {}
    print(f"trained {args.episodes} episodes; final return "
          f"{last.get('return', float('nan')):.3f}; artifacts in {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    policy = learner.TrainedPolicy.load(args.policy)
    envs = world.load_environment_dir(args.envs)
    report = harness.evaluate(policy, policy.pruned, envs,
                              n_starts=args.n_starts, horizon=args.horizon,
                              seed=args.seed,
                              checkpoint_id=os.path.basename(args.policy))
    with open(args.out, "w") as fh:
        json.dump(report.to_json(), fh, indent=2)
        fh.write("\n")
    acc = report.accuracy
    print(f"accuracy: {'undefined' if acc is None else f'{acc:.1f}%'}; "
          f"wrote {args.out}")
    return 0


def cmd_plot(args) -> int:
    rows = {}
    path = os.path.join(args.run, "returns_ours.csv")
    for method in ("ours", "eps"):
        path = os.path.join(args.run, f"returns_{method}.csv")
        if not os.path.exists(path):
            continue
        per_seed = {}
        with open(path) as fh:
            fh.readline()
            for line in fh:
                seed, ep, ret = line.strip().split(",")
                per_seed.setdefault(seed, []).append(float(ret))
        rows[method] = per_seed
    if not rows:
        print(f"error: no returns_*.csv under {args.run}", file=sys.stderr)
        return 2
    series = []
    colors = {"ours": "#1f77b4", "eps": "#ff7f0e"}
    for method, per_seed in rows.items():
        mat = np.stack([np.array(v) for v in per_seed.values()])
        ma = np.stack([harness.moving_average(r, args.window) for r in mat])
        mean_ma = np.nanmean(ma, axis=0)
        series.append((np.arange(1, mat.shape[1] + 1), mean_ma, method,
                       colors.get(method, "#2ca02c")))
    harness.plot_series_svg(args.out, series,
                            title=f"moving-average return (window {args.window})",
                            xlabel="episode", ylabel="return")
    print(f"wrote {args.out}")
    return 0


def cmd_run(args) -> int:
    with open(args.config) as fh:
        config = json.load(fh)
    if args.seed is not None:
        config["seeds"] = [args.seed]
    out = harness.run_experiment(config, out_dir=args.out)
    print(f"experiment artifacts in {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ltlnav",
        description="LTL navigation tasks: automata, exploration bias, "
                    "Q-learning and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile-automaton",
                       help="compile a formula to a Rabin automaton")
    p.add_argument("--formula", required=True,
                   help="formula text or a file containing one")
    p.add_argument("--atoms", default="",
                   help="comma-separated proposition names (default: inferred)")
    p.add_argument("--hoa-out", default="")
    p.add_argument("--dot-out", default="")
    p.set_defaults(fn=cmd_compile_automaton)

    p = sub.add_parser("gen-env", help="generate environments")
    p.add_argument("--group", choices=("A", "B"), required=True)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--task", default="",
                   help="preset name or task JSON fixing the region layout")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_env)

    p = sub.add_parser("gen-dataset", help="build the exploration-bias dataset")
    p.add_argument("--envs", required=True)
    p.add_argument("--grid", type=int, default=12)
    p.add_argument("--M", type=int, default=500, help="starts per environment")
    p.add_argument("--Z", type=int, default=20, help="trials per action")
    p.add_argument("--zeta", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_dataset)

    p = sub.add_parser("train-bias", help="fit the action classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--hidden", default="2048,1024")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_bias)

    p = sub.add_parser("train", help="train a Q-network policy")
    p.add_argument("--task", required=True, help="preset name or task JSON")
    p.add_argument("--envs", required=True)
    p.add_argument("--bias", default="", help="trained bias model file")
    p.add_argument("--no-bias", action="store_true",
                   help="plain epsilon-greedy baseline")
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t-max", type=int, default=500)
    p.add_argument("--optimizer", choices=("sgd", "adam"), default="sgd")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--q-hidden", default="256,256")
    p.add_argument("--schedule-horizon", type=int, default=200_000)
    p.add_argument("--ckpt-every", type=int, default=0)
    p.add_argument("--dump-traces", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="test-time accuracy of a policy")
    p.add_argument("--policy", required=True)
    p.add_argument("--envs", required=True)
    p.add_argument("--n-starts", type=int, default=120)
    p.add_argument("--horizon", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("plot", help="plot return curves from a run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--window", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_plot)

    p = sub.add_parser("run", help="run a full experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="override the config's seed list with one seed")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
