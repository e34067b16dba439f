"""Print the Multi-4 middle-regime catalog grouped by (ASPL, LSPL)."""
import argparse

from cogflex.regime_graph import enumerate_unique_regimes, table_rows


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--tasks", type=int, default=8)
    args = p.parse_args()

    cat = enumerate_unique_regimes(args.n, args.tasks)
    print(f"{'ASPL':>6} {'LSPL':>5} {'count':>5}")
    for aspl, lspl, count in table_rows(cat):
        print(f"{aspl:>6.2f} {lspl:>5} {count:>5}")
    connected = sum(e.connected for e in cat)
    print(f"{len(cat)} unique regimes, {connected} connected")


if __name__ == "__main__":
    main()
