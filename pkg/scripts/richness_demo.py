"""Generalization and stability in poor vs rich environments, printed as a table.

A quick look at the richness effect with a handful of runs per cell.
"""
import argparse

from cogflex.models import REPRESENTATIVE, parse_model
from cogflex.protocol import RunConfig, run_batch
from cogflex.task_env import environment


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=3, choices=(3, 4))
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    cfg = RunConfig(seed=args.seed, n_runs_kept=args.runs, n_runs_launched=2 * args.runs)
    print(f"{'model':<10}{'env':<14}{'kept':>6}{'gen':>8}{'stab':>8}")
    for model in REPRESENTATIVE:
        for richness in ("poor", "rich"):
            env = f"multi{args.n}-{richness}"
            agg = run_batch(parse_model(model, args.n), *environment(env), cfg, strict=False).aggregate
            if agg.kept:
                print(f"{model:<10}{env:<14}{agg.kept:>6}{agg.mean('generalization'):>8.3f}"
                      f"{agg.mean('stability'):>8.3f}")
            else:
                print(f"{model:<10}{env:<14}{0:>6}{'-':>8}{'-':>8}")


if __name__ == "__main__":
    main()
