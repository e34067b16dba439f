"""Command line entry point.

Exit codes: 0 success, 1 validation error, 2 too few qualifying runs,
3 filesystem error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .harness import (FIGURE_IDS, KNOWN_ENVIRONMENTS, AnalysisToggles, ConfigError, ExperimentConfig,
                      StoreError, analyze, catalog_text, coerce_run_overrides, desk_run_counts, load_config,
                      master_seed, reproduce, train)
from .models import MODEL_NAMES, SpecError, describe, parse_model
from .protocol import InsufficientRunsError, RunConfig
from .regime_graph import InvalidCountError
from .task_env import read_regime

EXIT_OK, EXIT_VALIDATION, EXIT_INSUFFICIENT, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("cogflex")


class _Parser(argparse.ArgumentParser):
    # usage errors are validation errors; exit code 2 is reserved
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _models(text: str) -> tuple[str, ...]:
    names = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in names if m not in MODEL_NAMES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown model(s) {bad}; choose from {', '.join(MODEL_NAMES)}")
    return names


def _ids(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cogflex", description="Two-step regime experiments on Multi-n task structures.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("enumerate-regimes", help="catalogue the unique regimes of T tasks in Multi-n")
    e.add_argument("--n", type=int, default=4)
    e.add_argument("--tasks", "-t", type=int, default=8, help="tasks per regime (T)")
    e.add_argument("--out", type=Path, help="catalog CSV path (default: print to stdout)")

    d = sub.add_parser("describe-model", help="print a model's layers and sizes")
    d.add_argument("model", choices=MODEL_NAMES)
    d.add_argument("--n", type=int, default=4)

    t = sub.add_parser("train", help="run two-step batches and write a result store")
    t.add_argument("--config", type=Path, help="JSON experiment config; flags below override it")
    t.add_argument("--env", action="append", choices=KNOWN_ENVIRONMENTS, help="environment preset (repeatable)")
    t.add_argument("--models", type=_models, help=f"comma-separated subset of {','.join(MODEL_NAMES)}")
    t.add_argument("--regime1", type=Path, help="first regime as an n x n 0/1 matrix file")
    t.add_argument("--regime2", type=Path, help="second regime file (default: complement of regime1)")
    t.add_argument("--regime-ids", type=_ids, help="restrict the connected sweep to these catalog ids")
    t.add_argument("--runs", type=int, help="kept runs per batch")
    t.add_argument("--launched", type=int, help="runs launched per batch (default: 70/50 of --runs)")
    t.add_argument("--sensitivity", action="store_true", help="compute cue sensitivity on step-1 networks")
    _common(t)

    a = sub.add_parser("analyze", help="write analysis CSVs for an existing result store")
    a.add_argument("store", type=Path)
    a.add_argument("--sensitivity-threshold", type=float, help="step-1 accuracy bar for sensitivity runs")

    r = sub.add_parser("reproduce", help="train and analyse one figure or table preset")
    r.add_argument("figure", choices=FIGURE_IDS)
    r.add_argument("--runs", type=int, default=10, help="kept runs per batch (desk scale, default 10)")
    r.add_argument("--full", action="store_true", help="full scale: 50 kept of 70 launched")
    _common(r)
    return p


def _common(p):
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=int, help="master seed (default: COGFLEX_SEED, then config, then 0)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a run setting, e.g. --set trials_per_task=1000")


def _progress(verbose):
    if not verbose:
        return None

    def report(r):
        log.info("run %d seed %d: step1 %.4f gen %.4f stab %.4f", r.run_id, r.seed, r.step1_accuracy,
                 r.generalization_acc, r.stability_acc)
    return report


def cmd_enumerate(args) -> int:
    text, catalog = catalog_text(args.n, args.tasks)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    connected = sum(e.metrics.connected for e in catalog)
    print(f"{len(catalog)} unique ({connected} connected, {len(catalog) - connected} disconnected)",
          file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def cmd_describe(args) -> int:
    print(describe(parse_model(args.model, args.n)))
    return EXIT_OK


def _train_config(args) -> ExperimentConfig:
    if args.config:
        base = load_config(args.config)
    elif args.env or args.regime1:
        base = None
    else:
        raise ConfigError("train needs --config, --env or --regime1")
    changes: dict = {}
    if args.env:
        changes["environments"] = tuple(args.env)
    if args.models:
        changes["models"] = args.models
    if args.regime_ids:
        changes["regime_ids"] = args.regime_ids
    if args.regime1:
        r1 = read_regime(args.regime1)
        changes.update(n=r1.n, regime1=tuple((t.sensory_cue, t.motor_cue) for t in r1.tasks))
        if args.regime2:
            r2 = read_regime(args.regime2)
            changes["regime2"] = tuple((t.sensory_cue, t.motor_cue) for t in r2.tasks)
    if args.out:
        changes["output_dir"] = str(args.out)
    toggles = base.analysis if base else AnalysisToggles()
    if args.sensitivity:
        toggles = replace(toggles, sensitivity=True)
    changes["analysis"] = toggles
    run = base.run if base else RunConfig()
    run_changes = coerce_run_overrides(args.overrides)
    if args.runs is not None:
        kept, launched = desk_run_counts(args.runs)
        run_changes.setdefault("n_runs_kept", kept)
        run_changes.setdefault("n_runs_launched", args.launched or launched)
    elif args.launched is not None:
        run_changes["n_runs_launched"] = args.launched
    try:
        run = replace(run, **run_changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    changes["run"] = run
    changes["seed"] = master_seed(args.seed, base.seed if base else 0)
    return replace(base, **changes) if base else ExperimentConfig(**changes)


def cmd_train(args) -> int:
    config = _train_config(args)
    outcome = train(config, jobs=args.jobs, progress=_progress(args.verbose))
    for (label, model), res in outcome.results.items():
        agg = res.aggregate
        if agg.kept:
            print(f"{label:<14} {model:<9} kept {agg.kept}/{agg.launched}  "
                  f"generalization {agg.mean('generalization'):.4f}  stability {agg.mean('stability'):.4f}")
        else:
            print(f"{label:<14} {model:<9} kept 0/{agg.launched}")
    print(f"results in {outcome.store.root}")
    if outcome.shortfalls:
        for (label, model), short in outcome.shortfalls.items():
            print(f"insufficient runs: {label}/{model} short by {short}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    return EXIT_OK


def cmd_analyze(args) -> int:
    files = analyze(args.store, args.sensitivity_threshold)
    for name in sorted(files):
        print(args.store / "analysis" / name)
    return EXIT_OK


def cmd_reproduce(args) -> int:
    out = args.out or Path("results") / args.figure
    seed = master_seed(args.seed)
    outcome, files = reproduce(args.figure, out, runs=args.runs, full=args.full, seed=seed, jobs=args.jobs,
                               run_overrides=coerce_run_overrides(args.overrides),
                               progress=_progress(args.verbose))
    for f in files:
        print(f)
    if outcome and outcome.shortfalls:
        for (label, model), short in outcome.shortfalls.items():
            print(f"insufficient runs: {label}/{model} short by {short}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    return EXIT_OK


COMMANDS = {
    "enumerate-regimes": cmd_enumerate,
    "describe-model": cmd_describe,
    "train": cmd_train,
    "analyze": cmd_analyze,
    "reproduce": cmd_reproduce,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except InsufficientRunsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except (StoreError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, SpecError, InvalidCountError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
