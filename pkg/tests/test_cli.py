import itertools
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from cogflex.analysis import distribution_summary, pearson
from cogflex.cli import EXIT_INSUFFICIENT, EXIT_IO, EXIT_OK, EXIT_VALIDATION, main
from cogflex.harness import (ConfigError, ExperimentConfig, ResultStore, StoreError, analyze,
                             coerce_run_overrides, csv_text, desk_run_counts, load_config, load_store,
                             master_seed, parse_task_key, read_csv, task_key)
from cogflex.protocol import RunConfig
from cogflex.regime_graph import enumerate_unique_regimes
from cogflex.task_env import Task

TINY = ["--set", "trials_per_task=60", "--set", "max_epochs=3", "--set", "eval_trials_per_task=50",
        "--set", "keep_threshold=0"]


def same_tree(a, b):
    fa = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    fb = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    return fa == fb and all((a / f).read_bytes() == (b / f).read_bytes() for f in fa)


# --- enumerate-regimes -----------------------------------------------------

def test_enumerate_summary_and_rerun(tmp_path, capsys):
    out = tmp_path / "cat.csv"
    assert main(["enumerate-regimes", "--n", "4", "--tasks", "8", "--out", str(out)]) == EXIT_OK
    assert "32 unique (17 connected, 15 disconnected)" in capsys.readouterr().out
    first = out.read_bytes()
    main(["enumerate-regimes", "--n", "4", "--tasks", "8", "--out", str(out)])
    assert out.read_bytes() == first
    rows = read_csv(out)
    assert len(rows) == 32 and sum(int(r["orbit_size"]) for r in rows) == 12870


def test_enumerate_small_case_matches_brute_force(tmp_path):
    out = tmp_path / "cat.csv"
    main(["enumerate-regimes", "--n", "2", "--tasks", "2", "--out", str(out)])
    rows = read_csv(out)
    # brute force: all 6 two-task regimes fall into a matching orbit (2) and
    # a shared-cue orbit (4)
    orbits = {}
    for a, b in itertools.combinations(range(4), 2):
        shared = a // 2 == b // 2 or a % 2 == b % 2
        orbits[shared] = orbits.get(shared, 0) + 1
    assert sorted(int(r["orbit_size"]) for r in rows) == sorted(orbits.values()) == [2, 4]
    assert all(r["connected"] == "0" for r in rows)


def test_enumerate_stdout(capsys):
    assert main(["enumerate-regimes", "--n", "2", "--tasks", "1"]) == EXIT_OK
    captured = capsys.readouterr()
    assert captured.out.startswith("regime_id,canonical_matrix")
    assert "1 unique" in captured.err


def test_enumerate_bad_count(capsys):
    assert main(["enumerate-regimes", "--n", "4", "--tasks", "17"]) == EXIT_VALIDATION


def test_enumerate_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["enumerate-regimes", "--n", "2", "--tasks", "1", "--out", str(blocker / "c.csv")]) == EXIT_IO


# --- describe / usage -------------------------------------------------------

def test_describe_model(capsys):
    assert main(["describe-model", "Gate_2", "--n", "4"]) == EXIT_OK
    assert "Dense1" in capsys.readouterr().out


def test_usage_errors_exit_1():
    with pytest.raises(SystemExit) as info:
        main(["reproduce", "fig99"])
    assert info.value.code == EXIT_VALIDATION
    with pytest.raises(SystemExit) as info:
        main(["train", "--env", "multi7"])
    assert info.value.code == EXIT_VALIDATION


def test_help_lists_subcommands():
    out = subprocess.run([sys.executable, "-m", "cogflex.cli", "--help"], capture_output=True, text=True).stdout
    for cmd in ("enumerate-regimes", "describe-model", "train", "analyze", "reproduce"):
        assert cmd in out


def test_train_without_source(tmp_path):
    assert main(["train", "--out", str(tmp_path)]) == EXIT_VALIDATION


# --- config ------------------------------------------------------------------

def test_config_rejects_unknown_keys(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"environments": ["multi2"], "colour": "red"}))
    with pytest.raises(ConfigError, match="colour"):
        load_config(p)
    p.write_text(json.dumps({"environments": ["multi2"], "run": {"lr_schedule": 1}}))
    with pytest.raises(ConfigError):
        load_config(p)
    p.write_text(json.dumps({"environments": ["multi2"], "run": {"seed": 3}}))
    with pytest.raises(ConfigError, match="top level"):
        load_config(p)
    assert main(["train", "--config", str(p)]) == EXIT_VALIDATION


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig()
    with pytest.raises(ConfigError):
        ExperimentConfig(environments=("multi2",), models=("Transformer",))
    with pytest.raises(ConfigError):
        ExperimentConfig(n=2, regime1=((0, 0),), regime2=((0, 0),))
    with pytest.raises(ConfigError):
        ExperimentConfig(environments=("multi4-middle-sweep",), regime_ids=(18,))
    with pytest.raises(ConfigError):
        ExperimentConfig(n=2, regime1=((0, 0), (0, 1), (1, 0), (1, 1)))  # empty complement


def test_config_roundtrip_and_hash(tmp_path):
    cfg = ExperimentConfig(environments=("multi3-rich",), models=("MLP_1",), run=RunConfig(max_epochs=7),
                           seed=9, output_dir=str(tmp_path / "a"))
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    again = load_config(p)
    assert again == cfg
    moved = ExperimentConfig.from_dict(cfg.to_dict() | {"output_dir": "elsewhere"})
    assert moved.config_hash() == cfg.config_hash()
    assert ExperimentConfig.from_dict(cfg.to_dict() | {"seed": 10}).config_hash() != cfg.config_hash()


def test_sweep_config_batches():
    cfg = ExperimentConfig(environments=("multi4-middle-sweep",), models=("MLP_1",))
    batches = cfg.batches()
    assert len(batches) == 17
    for b in batches:
        assert len(b.regime1.tasks) == len(b.regime2.tasks) == 8
        assert not b.regime1.task_set() & b.regime2.task_set()


def test_run_overrides_are_typed():
    got = coerce_run_overrides(["max_epochs=5", "lr=0.01", "reset_adam=false", "sampling=balanced"])
    assert got == {"max_epochs": 5, "lr": 0.01, "reset_adam": False, "sampling": "balanced"}
    for bad in (["epochs=5"], ["max_epochs=five"], ["seed=1"], ["reset_adam=maybe"]):
        with pytest.raises(ConfigError):
            coerce_run_overrides(bad)


def test_seed_precedence(monkeypatch):
    monkeypatch.delenv("COGFLEX_SEED", raising=False)
    assert master_seed(None, 4) == 4
    monkeypatch.setenv("COGFLEX_SEED", "17")
    assert master_seed(None, 4) == 17
    assert master_seed(2, 4) == 2
    monkeypatch.setenv("COGFLEX_SEED", "abc")
    with pytest.raises(ConfigError):
        master_seed(None)


def test_desk_ratio():
    assert desk_run_counts(10) == (10, 14)
    assert desk_run_counts(3) == (3, 5)


def test_serialisation_helpers():
    assert task_key(Task(0, 3)) == "S1M4" and parse_task_key("S1M4") == Task(0, 3)
    text = csv_text(["a", "b", "c"], [[0.1, True, math.inf]])
    assert text == "a,b,c\n0.1,1,inf\n"


# --- train / analyze ---------------------------------------------------------

@pytest.fixture(scope="module")
def multi2_store(tmp_path_factory):
    out = tmp_path_factory.mktemp("m2")
    rc = main(["train", "--env", "multi2", "--runs", "3", "--out", str(out), "--seed", "5"] + TINY)
    assert rc == EXIT_OK
    return out


def test_train_writes_one_aggregate_per_model(multi2_store):
    aggs = sorted(multi2_store.glob("multi2/*/aggregate.json"))
    assert [p.parent.name for p in aggs] == ["Concat_2", "Gate_2", "MLP_2"]
    manifest = json.loads((multi2_store / "manifest.json").read_text())
    assert manifest["schema_version"] == 1 and manifest["seed"] == 5
    assert manifest["config_hash"] == ResultStore(multi2_store).read_config().config_hash()
    assert ResultStore(multi2_store).verify() == []


def test_same_seed_same_files(multi2_store, tmp_path):
    out = tmp_path / "again"
    main(["train", "--env", "multi2", "--runs", "3", "--out", str(out), "--seed", "5"] + TINY)
    assert same_tree(multi2_store, out)
    other = tmp_path / "other"
    main(["train", "--env", "multi2", "--runs", "3", "--out", str(other), "--seed", "6"] + TINY)
    assert (other / "multi2/MLP_2/runs.csv").read_bytes() != (multi2_store / "multi2/MLP_2/runs.csv").read_bytes()


def test_env_seed_used_when_flag_absent(tmp_path, monkeypatch):
    monkeypatch.setenv("COGFLEX_SEED", "5")
    out = tmp_path / "env"
    main(["train", "--env", "multi2", "--runs", "3", "--out", str(out)] + TINY)
    assert json.loads((out / "manifest.json").read_text())["seed"] == 5


def test_raw_csv_recomputes_aggregate(multi2_store):
    _, aggs = load_store(multi2_store)
    for (label, model), stored in aggs.items():
        meta = json.loads((multi2_store / label / model / "aggregate.json").read_text())
        for metric in ("generalization", "stability", "step1_accuracy"):
            s = distribution_summary(stored.values(metric))
            for k in ("mean", "std", "min", "max", "median"):
                assert abs(getattr(s, k) - meta["metrics"][metric][k]) < 1e-12


def test_per_task_columns_recombine(multi2_store):
    for row in read_csv(multi2_store / "multi2/Gate_2/runs.csv"):
        gen = [float(v) for k, v in row.items() if k.startswith("gen_")]
        assert len(gen) == 2
        # equal task sampling is not guaranteed, so only bound the aggregate
        assert min(gen) - 1e-12 <= float(row["generalization"]) <= max(gen) + 1e-12


def test_analyze_outputs(multi2_store, capsys):
    assert main(["analyze", str(multi2_store)]) == EXIT_OK
    files = {p.name for p in (multi2_store / "analysis").iterdir()}
    assert {"summary.csv", "curves_summary.csv", "taskwise_first_regime.csv",
            "taskwise_second_regime.csv"} <= files
    assert "correlation.csv" not in files
    summary = read_csv(multi2_store / "analysis/summary.csv")
    assert len(summary) == 3 * 4
    assert ResultStore(multi2_store).verify() == []


def test_train_shortfall_exit_code(tmp_path, capsys):
    args = ["train", "--env", "multi2", "--models", "MLP_1", "--runs", "2", "--out", str(tmp_path),
            "--set", "trials_per_task=20", "--set", "max_epochs=1", "--set", "keep_threshold=1.0"]
    assert main(args) == EXIT_INSUFFICIENT
    assert "insufficient runs" in capsys.readouterr().err
    assert (tmp_path / "multi2/MLP_1/runs.csv").exists()


def test_train_explicit_regime_files(tmp_path):
    r1 = tmp_path / "r1.txt"
    r1.write_text("1 0\n0 1\n")
    out = tmp_path / "out"
    rc = main(["train", "--regime1", str(r1), "--models", "MLP_1", "--runs", "1", "--out", str(out)] + TINY)
    assert rc == EXIT_OK
    meta = json.loads((out / "custom/MLP_1/aggregate.json").read_text())["batch"]
    assert meta["regime1"] == [[0, 0], [1, 1]] and meta["regime2"] == [[0, 1], [1, 0]]


def test_analyze_missing_store(tmp_path):
    assert main(["analyze", str(tmp_path / "nothing")]) == EXIT_IO


def test_analyze_incomplete_store(multi2_store, tmp_path):
    import shutil
    copy = tmp_path / "copy"
    shutil.copytree(multi2_store, copy)
    (copy / "multi2/Gate_2/runs.csv").unlink()
    with pytest.raises(StoreError, match="incomplete"):
        analyze(copy)
    assert main(["analyze", str(copy)]) == EXIT_IO


# --- sweep and reproduce -----------------------------------------------------

@pytest.fixture(scope="module")
def sweep_store(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    rc = main(["train", "--env", "multi4-middle-sweep", "--models", "MLP_1,Gate_1", "--runs", "2",
               "--out", str(out), "--seed", "1"] + TINY)
    assert rc == EXIT_OK
    analyze(out)
    return out


def test_sweep_store_layout(sweep_store):
    labels = sorted(p.name for p in sweep_store.iterdir() if p.name.startswith("regime"))
    assert labels == [f"regime{i:02d}" for i in range(1, 18)]
    assert len(list(sweep_store.glob("regime*/*/aggregate.json"))) == 17 * 2


def test_sweep_analysis_files(sweep_store):
    corr = read_csv(sweep_store / "analysis/correlation.csv")
    assert {(r["model"], r["metric"], r["target"]) for r in corr} == {
        (m, s, t) for m in ("MLP_1", "Gate_1") for s in ("ASPL", "LSPL") for t in ("generalization", "stability")}
    assert len(corr) == 8
    sweep = read_csv(sweep_store / "analysis/sweep.csv")
    assert len(sweep) == 17
    violin = read_csv(sweep_store / "analysis/violin.csv")
    assert len(violin) == 17 * 2 * 2


def test_correlation_matches_manual_pipeline(sweep_store):
    sweep = read_csv(sweep_store / "analysis/sweep.csv")
    corr = {(r["model"], r["metric"], r["target"]): r for r in read_csv(sweep_store / "analysis/correlation.csv")}
    for model in ("MLP_1", "Gate_1"):
        for metric in ("ASPL", "LSPL"):
            x = [float(r[metric.lower()]) for r in sweep]
            for target in ("generalization", "stability"):
                # straight from the per-regime runs files
                y = [np.mean([float(row[target]) for row in
                              read_csv(sweep_store / f"regime{int(r['regime_id']):02d}/{model}/runs.csv")
                              if row["kept"] == "1"]) for r in sweep]
                got = corr[model, metric, target]
                if np.ptp(y) == 0:
                    assert got["r"] == "nan"
                    continue
                r, p = pearson(x, y)
                assert abs(float(got["r"]) - r) < 1e-12 and abs(float(got["p"]) - p) < 1e-12


def test_reproduce_table1(tmp_path, capsys):
    out = tmp_path / "t1"
    assert main(["reproduce", "table1", "--out", str(out)]) == EXIT_OK
    rows = read_csv(out / "table1.csv")
    assert sum(int(r["count"]) for r in rows) == 32
    assert rows[-1] == {"aspl": "inf", "lspl": "inf", "count": "15"}
    assert len(read_csv(out / "catalog.csv")) == len(enumerate_unique_regimes(4, 8))


def test_reproduce_fig7_heatmaps(tmp_path, capsys):
    out = tmp_path / "f7"
    assert main(["reproduce", "fig7", "--runs", "1", "--out", str(out)] + TINY) == EXIT_OK
    printed = capsys.readouterr().out.split()
    assert [p.rsplit("/", 1)[-1] for p in printed] == ["taskwise_first_regime.csv", "taskwise_second_regime.csv"]
    first = read_csv(out / "analysis/taskwise_first_regime.csv")
    assert len(first) == 6 * 8 and {r["model"] for r in first} == {"MLP_1", "MLP_2", "Gate_1", "Gate_2",
                                                                     "Concat_1", "Concat_2"}


def test_reproduce_fig10_regression(tmp_path, capsys):
    out = tmp_path / "f10"
    assert main(["reproduce", "fig10", "--runs", "1", "--out", str(out)] + TINY) == EXIT_OK
    reg = read_csv(out / "analysis/regression.csv")
    assert len(reg) == 6 * 2 and {r["metric"] for r in reg} == {"ASPL"}
    assert {"r", "p", "slope", "intercept"} <= set(reg[0])
    corr = read_csv(out / "analysis/correlation.csv")
    assert reg == [r for r in corr if r["metric"] == "ASPL"]
    assert ResultStore(out).verify() == []
