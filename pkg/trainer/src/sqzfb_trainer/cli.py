"""Command line entry points: train, export, eval, plot."""

from __future__ import annotations

import argparse
import sys

import numpy as np
import yaml

from .evaluate import paired_comparison
from .export import export_actor
from .plotting import (
    plot_compare,
    plot_histograms,
    plot_learning_curve,
    plot_omega_fb,
    plot_scatter,
)
from .train import load_train_config, train


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sqzfb-train")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run PPO against the environment server")
    p.add_argument("--config", required=True, help="YAML training configuration")
    p.add_argument("--out", help="override the output directory")

    p = sub.add_parser("export", help="write the portable actor container")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fixtures", help="also write (obs, action) fixture pairs CSV")
    p.add_argument("--n-fixtures", type=int, default=1000)

    p = sub.add_parser("eval", help="paired comparison against the zero-action baseline")
    p.add_argument("--weights", required=True)
    p.add_argument("--env-config", required=True, help="YAML environment settings")
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--seed-base", type=int, default=777)
    p.add_argument("--out", help="write per-seed returns CSV here")

    p = sub.add_parser("plot", help="render figures from experiment CSVs")
    p.add_argument("--kind", required=True,
                   choices=("compare", "hist", "learning", "omega-fb", "scatter"))
    p.add_argument("--out", required=True)
    p.add_argument("inputs", nargs="+")

    args = parser.parse_args(argv)

    if args.command == "train":
        config = load_train_config(args.config)
        if args.out:
            config.out_dir = args.out
        summary = train(config)
        print(yaml.safe_dump(summary, sort_keys=False))
        return 0

    if args.command == "export":
        export_actor(args.checkpoint, args.out, args.fixtures, args.n_fixtures)
        print(args.out)
        return 0

    if args.command == "eval":
        with open(args.env_config) as fh:
            env_config = yaml.safe_load(fh)
        result = paired_comparison(
            env_config, args.seed_base, args.seeds, args.weights
        )
        print(
            f"agent {result['agent_mean']:.2f}  baseline {result['baseline_mean']:.2f}  "
            f"diff {result['mean_diff']:.2f} +- {result['stderr_diff']:.2f} "
            f"({result['significance']:.1f} standard errors)"
        )
        if args.out:
            agent, baseline = result["agent"], result["baseline"]
            with open(args.out, "w", newline="") as fh:
                fh.write("seed_index,agent_return,baseline_return\n")
                for k in range(len(agent)):
                    fh.write(f"{k},{agent[k]!r},{baseline[k]!r}\n")
        return 0 if result["significance"] > 3.0 else 1

    if args.command == "plot":
        if args.kind == "compare":
            plot_compare(args.inputs, args.out)
        elif args.kind == "hist":
            plot_histograms(args.inputs, args.out)
        elif args.kind == "learning":
            plot_learning_curve(args.inputs[0], args.out)
        elif args.kind == "omega-fb":
            plot_omega_fb(args.inputs[0], args.out)
        elif args.kind == "scatter":
            plot_scatter(args.inputs[0], args.out)
        print(args.out)
        return 0

    parser.error(f"unknown command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
