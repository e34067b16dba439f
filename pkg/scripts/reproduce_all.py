"""Run every reproduction preset into one results tree.

    python3 scripts/reproduce_all.py --runs 10 --out results
"""
import argparse
import logging
import time
from pathlib import Path

from cogflex.harness import FIGURE_IDS, reproduce


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--full", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--only", nargs="*", choices=FIGURE_IDS, help="subset of presets")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    for fig in args.only or FIGURE_IDS:
        t0 = time.time()
        outcome, files = reproduce(fig, args.out / fig, runs=args.runs, full=args.full, seed=args.seed,
                                   jobs=args.jobs)
        short = outcome.shortfalls if outcome else {}
        logging.info("%s done in %.0fs: %s%s", fig, time.time() - t0, ", ".join(f.name for f in files),
                     f" (short: {short})" if short else "")


if __name__ == "__main__":
    main()
