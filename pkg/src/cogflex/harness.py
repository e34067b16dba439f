"""Experiment configs, the on-disk result store, analysis of a store, and the
per-figure reproduction presets.

Store layout::

    <out>/config.json
    <out>/manifest.json                 schema_version, version, config hash, file digests
    <out>/<batch>/<model>/runs.csv      one row per launched run
    <out>/<batch>/<model>/curves.csv    run_id, step, epoch, accuracy
    <out>/<batch>/<model>/aggregate.json
    <out>/<batch>/<model>/params/run_NNN.json   step-1 and final parameters
    <out>/analysis/*.csv

Every file is a function of the config alone: no timestamps, sorted keys,
floats written with ``repr``.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .analysis import (IncompleteSweepError, Summary, curve_summary, distribution_summary,
                       regime_sweep_report)
from .models import MODEL_NAMES, REPRESENTATIVE, build, parse_model
from .protocol import BatchResult, RunConfig, RunResult, run_batch
from .regime_graph import (catalog_csv_rows, connected_catalog, enumerate_unique_regimes,
                           regime_metrics, table_rows)
from .task_env import (CONNECTIVITY_EXAMPLES, ENVIRONMENTS, Regime, Task, complement_regime,
                       environment)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SWEEP = "multi4-middle-sweep"
KNOWN_ENVIRONMENTS = ENVIRONMENTS + tuple(f"multi4-{k}" for k in CONNECTIVITY_EXAMPLES) + (SWEEP,)
# run-config keys owned by the top level of an experiment config
_RESERVED_RUN_KEYS = {"seed", "sensitivity", "sensitivity_per_stimulus"}


class ConfigError(ValueError):
    pass


class StoreError(OSError):
    pass


# --- config ----------------------------------------------------------------

@dataclass(frozen=True)
class AnalysisToggles:
    sensitivity: bool = False
    per_stimulus: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    """What to train and where to put it.

    Batches come from ``environments`` (preset names, including the
    connected-regime sweep) and, optionally, one explicit regime pair given
    by ``n``, ``regime1`` and ``regime2`` (default: the complement).
    ``regime_ids`` restricts the sweep to a subset of catalog ids.
    """

    environments: tuple[str, ...] = ()
    n: int | None = None
    regime1: tuple[tuple[int, int], ...] | None = None
    regime2: tuple[tuple[int, int], ...] | None = None
    regime_ids: tuple[int, ...] | None = None
    models: tuple[str, ...] = REPRESENTATIVE
    run: RunConfig = field(default_factory=RunConfig)
    output_dir: str = "results"
    seed: int = 0
    analysis: AnalysisToggles = field(default_factory=AnalysisToggles)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.environments and self.regime1 is None:
            raise ConfigError("config needs at least one environment or an explicit regime1")
        for env in self.environments:
            if env not in KNOWN_ENVIRONMENTS:
                raise ConfigError(f"unknown environment {env!r}; known: {', '.join(KNOWN_ENVIRONMENTS)}")
        if self.regime1 is not None and self.n is None:
            raise ConfigError("explicit regimes need n")
        if self.regime2 is not None and self.regime1 is None:
            raise ConfigError("regime2 given without regime1")
        if not self.models:
            raise ConfigError("no models configured")
        for m in self.models:
            if m not in MODEL_NAMES:
                raise ConfigError(f"unknown model {m!r}; expected one of {MODEL_NAMES}")
        if self.regime_ids is not None:
            valid = {e.regime_id for e in connected_catalog()}
            bad = sorted(set(self.regime_ids) - valid)
            if bad:
                raise ConfigError(f"regime ids {bad} are not in the connected catalog (1..{len(valid)})")
        try:
            self.batches()
        except (ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def effective_run(self) -> RunConfig:
        return replace(self.run, seed=self.seed, sensitivity=self.analysis.sensitivity,
                       sensitivity_per_stimulus=self.analysis.per_stimulus)

    def batches(self) -> list["Batch"]:
        out = []
        for env in self.environments:
            if env == SWEEP:
                ids = set(self.regime_ids) if self.regime_ids is not None else None
                for e in connected_catalog():
                    if ids is None or e.regime_id in ids:
                        r1 = e.canonical.regime()
                        out.append(Batch(f"regime{e.regime_id:02d}", r1, complement_regime(r1.structure, r1),
                                         e.regime_id))
            else:
                r1, r2 = environment(env)
                out.append(Batch(env, r1, r2))
        if self.regime1 is not None:
            r1 = Regime.from_pairs(self.n, self.regime1)
            r2 = Regime.from_pairs(self.n, self.regime2) if self.regime2 is not None \
                else complement_regime(r1.structure, r1)
            out.append(Batch("custom", r1, r2))
        labels = [b.label for b in out]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate batches in config: {labels}")
        for b in out:
            if b.regime1.task_set() & b.regime2.task_set():
                raise ConfigError(f"{b.label}: regimes overlap")
            if not b.regime2.tasks:
                raise ConfigError(f"{b.label}: second regime is empty")
        return out

    def to_dict(self, include_output: bool = True) -> dict:
        run = self.run.to_dict()
        for k in _RESERVED_RUN_KEYS:
            run.pop(k)
        return {
            "environments": list(self.environments),
            "n": self.n,
            "regime1": [list(p) for p in self.regime1] if self.regime1 is not None else None,
            "regime2": [list(p) for p in self.regime2] if self.regime2 is not None else None,
            "regime_ids": list(self.regime_ids) if self.regime_ids is not None else None,
            "models": list(self.models),
            "run": run,
            "seed": self.seed,
            "analysis": asdict(self.analysis),
        } | ({"output_dir": self.output_dir} if include_output else {})

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        run = dict(d.pop("run", None) or {})
        clash = _RESERVED_RUN_KEYS & set(run)
        if clash:
            raise ConfigError(f"run keys {sorted(clash)} belong at the top level (seed, analysis)")
        try:
            d["run"] = RunConfig.from_dict(run)
            toggles = d.pop("analysis", None) or {}
            unknown = set(toggles) - {f.name for f in fields(AnalysisToggles)}
            if unknown:
                raise ConfigError(f"unknown analysis keys: {sorted(unknown)}")
            d["analysis"] = AnalysisToggles(**toggles)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        for key in ("environments", "models", "regime_ids"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        for key in ("regime1", "regime2"):
            if d.get(key) is not None:
                d[key] = tuple(tuple(int(v) for v in p) for p in d[key])
        return cls(**d)

    def config_hash(self) -> str:
        # where results go is not part of what they are
        return hashlib.sha256(canonical_json(self.to_dict(include_output=False)).encode()).hexdigest()


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return ExperimentConfig.from_dict(data)


def coerce_run_overrides(pairs: Iterable[str]) -> dict:
    """Parse ``key=value`` strings into typed RunConfig overrides."""
    types = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    for item in pairs:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or key not in types:
            raise ConfigError(f"bad run override {item!r}; keys: {sorted(types)}")
        if key in _RESERVED_RUN_KEYS:
            raise ConfigError(f"{key} is set through its own flag")
        kind = types[key]
        try:
            if kind in ("bool", bool):
                if raw.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(raw)
                out[key] = raw.lower() in ("true", "1")
            elif kind in ("int", int):
                out[key] = int(raw)
            elif kind in ("float", float):
                out[key] = float(raw)
            else:
                out[key] = raw
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse {raw!r}") from exc
    return out


@dataclass(frozen=True)
class Batch:
    label: str
    regime1: Regime
    regime2: Regime
    regime_id: int | None = None

    def describe(self) -> dict:
        m = regime_metrics(self.regime1)
        return {
            "label": self.label,
            "n": self.regime1.n,
            "regime_id": self.regime_id,
            "regime1": [[t.sensory_cue, t.motor_cue] for t in self.regime1.tasks],
            "regime2": [[t.sensory_cue, t.motor_cue] for t in self.regime2.tasks],
            "connected": m.connected,
            "aspl": _num(m.aspl),
            "lspl": _num(m.lspl),
        }


# --- serialisation helpers -------------------------------------------------

def _num(x: float):
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return x


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return _num(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n"


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "inf" if math.isinf(v) else "nan" if math.isnan(v) else repr(v)
    return v


def task_key(task: Task) -> str:
    return f"S{task.sensory_cue + 1}M{task.motor_cue + 1}"


def parse_task_key(key: str) -> Task:
    s, m = key[1:].split("M")
    return Task(int(s) - 1, int(m) - 1)


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- result store ----------------------------------------------------------

class ResultStore:
    """Writes go to memory first and hit the disk in one pass at ``commit``."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._pending: dict[str, str] = {}

    def put(self, rel: str, text: str) -> None:
        self._pending[rel] = text

    def commit(self, config: ExperimentConfig | None, extra: dict | None = None, fresh: bool = False) -> Path:
        """Flush pending files and rewrite the manifest.

        ``fresh`` starts a new manifest; otherwise existing entries are kept
        and the new files are added.
        """
        try:
            manifest = self._manifest(config, extra, fresh)
            for rel, text in sorted(self._pending.items()):
                path = self.root / rel
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(text)
            (self.root / "manifest.json").write_text(canonical_json(manifest))
        except OSError as exc:
            raise StoreError(f"cannot write results under {self.root}: {exc}") from exc
        self._pending.clear()
        return self.root / "manifest.json"

    def _manifest(self, config, extra, fresh) -> dict:
        path = self.root / "manifest.json"
        out = {} if fresh or not path.exists() else json.loads(path.read_text())
        files = dict(out.get("files", {}))
        for rel, text in self._pending.items():
            files[rel] = hashlib.sha256(text.encode()).hexdigest()
        out.update(schema_version=SCHEMA_VERSION, version=__version__, files=dict(sorted(files.items())))
        out.setdefault("config_hash", None)
        out.setdefault("seed", None)
        if config is not None:
            out["config_hash"] = config.config_hash()
            out["seed"] = config.seed
        out.update(extra or {})
        return out

    def read_manifest(self) -> dict:
        try:
            return json.loads((self.root / "manifest.json").read_text())
        except FileNotFoundError as exc:
            raise StoreError(f"{self.root} has no manifest.json; not a result store") from exc

    def read_config(self) -> ExperimentConfig:
        path = self.root / "config.json"
        if not path.exists():
            raise StoreError(f"{self.root} has no config.json")
        return replace(load_config(path), output_dir=str(self.root))

    def verify(self) -> list[str]:
        """Relative paths whose digest no longer matches the manifest."""
        bad = []
        for rel, digest in self.read_manifest()["files"].items():
            path = self.root / rel
            if not path.exists() or hashlib.sha256(path.read_bytes()).hexdigest() != digest:
                bad.append(rel)
        return bad


def run_rows(runs: Sequence[RunResult], batch: Batch) -> tuple[list[str], list[list]]:
    gen_tasks = list(batch.regime2.tasks)
    stab_tasks = list(batch.regime1.tasks)
    sens_keys = sorted({k for r in runs for k in (r.sensitivity or {})})
    header = ["run_id", "seed", "kept", "step1_accuracy", "step2_accuracy", "epochs_step1",
              "epochs_step2", "generalization", "stability"]
    header += [f"gen_{task_key(t)}" for t in gen_tasks]
    header += [f"stab_{task_key(t)}" for t in stab_tasks]
    header += [f"sens_{tap}_{cue}" for tap, cue in sens_keys]
    rows = []
    for r in runs:
        row = [r.run_id, r.seed, r.kept, r.step1_accuracy, r.step2_accuracy,
               len(r.learning_curve_step1), len(r.learning_curve_step2),
               r.generalization_acc, r.stability_acc]
        row += [r.per_task_generalization[t] for t in gen_tasks]
        row += [r.per_task_stability[t] for t in stab_tasks]
        row += [(r.sensitivity or {}).get(k, math.nan) for k in sens_keys]
        rows.append(row)
    return header, rows


def curve_rows(runs: Sequence[RunResult]) -> list[list]:
    rows = []
    for r in runs:
        for step, curve in ((1, r.learning_curve_step1), (2, r.learning_curve_step2)):
            rows += [[r.run_id, step, e + 1, a] for e, a in enumerate(curve)]
    return rows


def store_batch(store: ResultStore, batch: Batch, model: str, result: BatchResult) -> None:
    base = f"{batch.label}/{model}"
    header, rows = run_rows(result.runs, batch)
    store.put(f"{base}/runs.csv", csv_text(header, rows))
    store.put(f"{base}/curves.csv", csv_text(["run_id", "step", "epoch", "accuracy"], curve_rows(result.runs)))
    agg = result.aggregate.to_dict()
    agg["batch"] = batch.describe()
    store.put(f"{base}/aggregate.json", canonical_json(agg))
    spec = parse_model(model, batch.regime1.n)
    net = build(spec)
    for r in result.runs:
        snaps = {}
        for key, flat in (("step1", r.step1_params), ("final", r.final_params)):
            net.set_params(flat)
            snaps[key] = net.snapshot()
        store.put(f"{base}/params/run_{r.run_id:03d}.json", json.dumps(snaps, sort_keys=True) + "\n")


@dataclass
class TrainOutcome:
    store: ResultStore
    results: dict[tuple[str, str], BatchResult]

    @property
    def shortfalls(self) -> dict[tuple[str, str], int]:
        return {k: r.aggregate.shortfall for k, r in self.results.items() if r.aggregate.shortfall}


def train(config: ExperimentConfig, jobs: int = 1, progress=None) -> TrainOutcome:
    """Run every (batch, model) pair and persist the outputs.

    Batches that miss their kept-run quota are still written; the caller
    decides what a shortfall means.
    """
    cfg = config.effective_run
    store = ResultStore(config.output_dir)
    store.put("config.json", canonical_json(config.to_dict(include_output=False)))
    results = {}
    for batch in config.batches():
        for model in config.models:
            spec = parse_model(model, batch.regime1.n)
            log.info("training %s on %s", model, batch.label)
            res = run_batch(spec, batch.regime1, batch.regime2, cfg, jobs=jobs, strict=False, progress=progress)
            if res.aggregate.shortfall:
                log.warning("%s/%s: %d of %d required runs qualified", batch.label, model,
                            res.aggregate.kept, res.aggregate.required)
            results[batch.label, model] = res
            store_batch(store, batch, model, res)
    store.commit(config, fresh=True)
    return TrainOutcome(store, results)


# --- analysis of a store ---------------------------------------------------

@dataclass
class StoredAggregate:
    """Aggregate metrics recomputed from a persisted runs.csv."""

    model: str
    batch: dict
    kept_rows: list[dict]
    all_rows: list[dict]

    def values(self, metric: str) -> list[float]:
        return [float(r[metric]) for r in self.kept_rows]

    def mean(self, metric: str) -> float:
        return float(np.mean(self.values(metric)))

    def summary(self, metric: str) -> Summary:
        return distribution_summary(self.values(metric))


def load_store(root: str | Path) -> tuple[ExperimentConfig, dict[tuple[str, str], StoredAggregate]]:
    store = ResultStore(root)
    store.read_manifest()
    config = store.read_config()
    out = {}
    for batch in config.batches():
        for model in config.models:
            base = store.root / batch.label / model
            runs_path, agg_path = base / "runs.csv", base / "aggregate.json"
            if not runs_path.exists() or not agg_path.exists():
                raise StoreError(f"incomplete store: missing {base.relative_to(store.root)}")
            rows = read_csv(runs_path)
            meta = json.loads(agg_path.read_text())["batch"]
            out[batch.label, model] = StoredAggregate(model, meta, [r for r in rows if r["kept"] == "1"], rows)
    return config, out


def _mean_std(xs: Sequence[float]) -> tuple[float, float]:
    s = distribution_summary(xs)
    return s.mean, s.std


ANALYSIS_FILES = ("summary.csv", "curves_summary.csv", "taskwise_first_regime.csv",
                  "taskwise_second_regime.csv", "sensitivity.csv", "correlation.csv",
                  "sweep.csv", "violin.csv")


def analyze(root: str | Path, sensitivity_threshold: float | None = None) -> dict[str, str]:
    """Write the analysis CSVs for a store; returns ``{file name: text}``.

    Files whose inputs are absent (no sensitivity columns, fewer than three
    sweep regimes) are skipped.
    """
    root = Path(root)
    config, aggs = load_store(root)
    thr = config.run.sensitivity_threshold if sensitivity_threshold is None else sensitivity_threshold
    out: dict[str, str] = {}
    kept_any = {k: a for k, a in aggs.items() if a.kept_rows}

    rows = []
    for (label, model), a in kept_any.items():
        for metric in ("generalization", "stability", "step1_accuracy", "step2_accuracy"):
            s = a.summary(metric)
            rows.append([model, label, metric, s.mean, s.std, s.min, s.max, s.q1, s.median, s.q3, s.n])
    out["summary.csv"] = csv_text(["model", "environment", "metric", "mean", "std", "min", "max",
                                   "q1", "median", "q3", "n"], rows)

    rows = []
    for (label, model), a in kept_any.items():
        kept_ids = {r["run_id"] for r in a.kept_rows}
        curves: dict[tuple[str, int], list[float]] = {}
        for r in read_csv(root / label / model / "curves.csv"):
            if r["run_id"] in kept_ids:
                curves.setdefault((r["run_id"], int(r["step"])), []).append(float(r["accuracy"]))
        for step in (1, 2):
            cs = [c for (rid, st), c in sorted(curves.items()) if st == step]
            if cs:
                mean, std = curve_summary(cs)
                rows += [[model, label, step, e + 1, m, s] for e, (m, s) in enumerate(zip(mean, std))]
    out["curves_summary.csv"] = csv_text(["model", "environment", "step", "epoch", "mean", "std"], rows)

    for fname, prefix in (("taskwise_first_regime.csv", "stab_"), ("taskwise_second_regime.csv", "gen_")):
        rows = []
        for (label, model), a in kept_any.items():
            for col in a.kept_rows[0]:
                if col.startswith(prefix):
                    t = parse_task_key(col[len(prefix):])
                    mean, std = _mean_std([float(r[col]) for r in a.kept_rows])
                    rows.append([model, label, f"S{t.sensory_cue + 1}", f"M{t.motor_cue + 1}", mean, std])
        out[fname] = csv_text(["model", "environment", "sensory_cue", "motor_cue", "accuracy", "std"], rows)

    rows = []
    for (label, model), a in aggs.items():
        cols = [c for c in (a.all_rows[0] if a.all_rows else {}) if c.startswith("sens_")]
        qualified = [r for r in a.all_rows if float(r["step1_accuracy"]) >= thr]
        for col in cols:
            tap, cue = col[len("sens_"):].rsplit("_", 1)
            xs = [float(r[col]) for r in qualified if not math.isnan(float(r[col]))]
            if xs:
                mean, std = _mean_std(xs)
                rows.append([model, label, tap, cue, mean, std, len(xs)])
    if rows:
        out["sensitivity.csv"] = csv_text(["model", "environment", "tap", "cue_type", "mean_cos", "std", "n"], rows)

    sweep_labels = [b.label for b in config.batches() if b.regime_id is not None]
    if len(sweep_labels) >= 3:
        by_id = {e.regime_id: e for e in connected_catalog()}
        present = sorted(int(aggs[l, config.models[0]].batch["regime_id"]) for l in sweep_labels)
        catalog = [by_id[i] for i in sorted(by_id) if i in present]
        results, per_run = {}, {}
        for model in config.models:
            results[model] = {}
            per_run[model] = {}
            for label in sweep_labels:
                a = aggs[label, model]
                if a.kept_rows:
                    rid = int(a.batch["regime_id"])
                    results[model][rid] = a
                    per_run[model][rid] = [(float(r["generalization"]), float(r["stability"])) for r in a.kept_rows]
        try:
            report = regime_sweep_report(results, catalog, per_run)
        except IncompleteSweepError as exc:
            raise StoreError(f"incomplete store: {exc}") from exc
        out["correlation.csv"] = csv_text(
            ["model", "metric", "target", "r", "p", "slope", "intercept"],
            [[c.model, c.metric, c.target, c.r, c.p, c.slope, c.intercept] for c in report.correlations])
        header = list(report.rows[0])
        out["sweep.csv"] = csv_text(header, [[row[h] for h in header] for row in report.rows])
        vh = ["model", "regime_id", "aspl", "run", "generalization", "stability"]
        out["violin.csv"] = csv_text(vh, [[v[h] for h in vh] for v in report.violin])

    store = ResultStore(root)
    for name, text in out.items():
        store.put(f"analysis/{name}", text)
    store.commit(None)
    return out


# --- enumeration -----------------------------------------------------------

def catalog_text(n: int, t: int) -> tuple[str, list]:
    catalog = enumerate_unique_regimes(n, t)
    rows = catalog_csv_rows(catalog)
    header = list(rows[0]) if rows else ["regime_id", "canonical_matrix", "connected", "aspl", "lspl", "orbit_size"]
    return csv_text(header, [[r[h] for h in header] for r in rows]), catalog


def table1_text(catalog) -> str:
    rows = [[a, l, c] for a, l, c in table_rows(catalog)]
    return csv_text(["aspl", "lspl", "count"], rows)


# --- reproduction presets --------------------------------------------------

@dataclass(frozen=True)
class FigurePreset:
    environments: tuple[str, ...]
    models: tuple[str, ...]
    outputs: tuple[str, ...]
    sensitivity: bool = False


FIGURES: dict[str, FigurePreset] = {
    "fig2": FigurePreset(("multi2",), REPRESENTATIVE, ("curves_summary.csv",)),
    "fig3": FigurePreset(("multi2", "multi3-poor", "multi3-rich"), REPRESENTATIVE, ("summary.csv",)),
    "fig5": FigurePreset(("multi4-middle",), REPRESENTATIVE, ("curves_summary.csv",)),
    "fig6": FigurePreset(("multi4-poor", "multi4-middle", "multi4-rich", "multi4-ctd1", "multi4-ctd2",
                          "multi4-dtd1", "multi4-dtd2"), REPRESENTATIVE, ("summary.csv",)),
    "fig7": FigurePreset(("multi4-middle",), MODEL_NAMES,
                         ("taskwise_first_regime.csv", "taskwise_second_regime.csv")),
    "fig8": FigurePreset((SWEEP,), REPRESENTATIVE, ("sweep.csv",)),
    "fig9": FigurePreset((SWEEP,), REPRESENTATIVE, ("violin.csv",)),
    "fig10": FigurePreset((SWEEP,), MODEL_NAMES, ("regression.csv",)),
    "fig11": FigurePreset((SWEEP,), MODEL_NAMES, ("regression.csv",)),
    "fig12": FigurePreset(("multi4-poor", "multi4-middle", "multi4-rich"), REPRESENTATIVE,
                          ("sensitivity.csv",), sensitivity=True),
    "fig13": FigurePreset(("multi4-ctd1", "multi4-ctd2", "multi4-dtd1", "multi4-dtd2"), REPRESENTATIVE,
                          ("sensitivity.csv",), sensitivity=True),
}
FIGURE_IDS = tuple(FIGURES) + ("table1",)


def desk_run_counts(runs: int) -> tuple[int, int]:
    """(kept, launched) keeping the 50-of-70 launch ratio."""
    return runs, math.ceil(runs * 70 / 50)


def figure_config(fig: str, out: str | Path, runs: int = 10, full: bool = False, seed: int = 0,
                  run_overrides: dict | None = None) -> ExperimentConfig:
    if fig not in FIGURES:
        raise ConfigError(f"unknown figure {fig!r}; expected one of {FIGURE_IDS}")
    p = FIGURES[fig]
    kept, launched = (50, 70) if full else desk_run_counts(runs)
    run = RunConfig(n_runs_kept=kept, n_runs_launched=launched)
    if run_overrides:
        try:
            run = replace(run, **run_overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return ExperimentConfig(environments=p.environments, models=p.models, run=run, output_dir=str(out),
                            seed=seed, analysis=AnalysisToggles(sensitivity=p.sensitivity))


def reproduce(fig: str, out: str | Path, runs: int = 10, full: bool = False, seed: int = 0, jobs: int = 1,
              run_overrides: dict | None = None, progress=None) -> tuple[TrainOutcome | None, list[Path]]:
    """Train and analyse one figure's preset; returns the plot-ready files."""
    out = Path(out)
    if fig == "table1":
        text, catalog = catalog_text(4, 8)
        store = ResultStore(out)
        store.put("catalog.csv", text)
        store.put("table1.csv", table1_text(catalog))
        store.commit(None, {"figure": "table1"}, fresh=True)
        return None, [out / "catalog.csv", out / "table1.csv"]
    config = figure_config(fig, out, runs, full, seed, run_overrides)
    outcome = train(config, jobs=jobs, progress=progress)
    files = analyze(out)
    emitted = []
    for name in FIGURES[fig].outputs:
        if name == "regression.csv":
            metric = "ASPL" if fig == "fig10" else "LSPL"
            rows = read_csv_text(files["correlation.csv"])
            text = csv_text(list(rows[0]), [list(r.values()) for r in rows if r["metric"] == metric])
            store = ResultStore(out)
            store.put("analysis/regression.csv", text)
            store.commit(None)
        elif name not in files:
            raise StoreError(f"{fig}: analysis produced no {name}")
        emitted.append(out / "analysis" / name)
    store = ResultStore(out)
    store.commit(None, {"figure": fig})
    return outcome, emitted


def read_csv_text(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def master_seed(explicit: int | None, config_seed: int = 0) -> int:
    """Precedence: explicit flag, then COGFLEX_SEED, then the config value."""
    if explicit is not None:
        return explicit
    env = os.environ.get("COGFLEX_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"COGFLEX_SEED must be an integer, got {env!r}") from exc
    return config_seed
