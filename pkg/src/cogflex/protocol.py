"""Two-step regime protocol: train on the first regime, test generalization
on the second, train on the second, test stability on the first.

Every run is a pure function of (model spec, regimes, config, run seed).
Per-run seeds are split off a master seed by run index, so batches give the
same numbers however runs are scheduled.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable

import numpy as np

from .analysis import Summary, cue_pairs, cue_sensitivity, distribution_summary
from .models import ModelSpec, build
from .nn_core import AdamState, Network, adam_step
from .task_env import Regime, Task, TrialSet, generate_trials


class DivergenceError(RuntimeError):
    pass


class ProtocolError(ValueError):
    pass


class InsufficientRunsError(RuntimeError):
    def __init__(self, kept: int, required: int, launched: int):
        super().__init__(f"only {kept} of {launched} runs qualified, {required} required "
                         f"(shortfall {required - kept})")
        self.kept, self.required, self.launched = kept, required, launched


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    batch_size: int = 32
    trials_per_task: int = 5000
    max_epochs: int = 500
    early_stop_streak: int = 4
    n_runs_launched: int = 70
    n_runs_kept: int = 50
    keep_threshold: float = 0.99
    eval_trials_per_task: int = 1000
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    reset_adam: bool = True
    sampling: str = "uniform"
    sensitivity: bool = False
    sensitivity_threshold: float = 0.98
    sensitivity_repeats: int = 1
    sensitivity_noise: float = 0.0
    sensitivity_per_stimulus: bool = False
    allow_overlap: bool = False

    def __post_init__(self):
        if self.n_runs_kept > self.n_runs_launched:
            raise ValueError("n_runs_kept cannot exceed n_runs_launched")
        if not 0 <= self.keep_threshold <= 1:
            raise ValueError("keep_threshold must lie in [0, 1]")
        if self.batch_size < 1 or self.trials_per_task < 1 or self.max_epochs < 1:
            raise ValueError("batch_size, trials_per_task and max_epochs must be >= 1")
        if self.early_stop_streak < 1:
            raise ValueError("early_stop_streak must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown run config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def run_seed(master_seed: int, run_index: int) -> int:
    return int(np.random.SeedSequence([master_seed, run_index]).generate_state(1)[0])


@dataclass
class TrainingLog:
    accuracy: list[float] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def epochs(self) -> int:
        return len(self.accuracy)

    @property
    def final_accuracy(self) -> float:
        return self.accuracy[-1] if self.accuracy else 0.0


def fit(net: Network, trials: TrialSet, cfg: RunConfig, rng: np.random.Generator,
        adam: AdamState | None = None, context: str = "") -> TrainingLog:
    """Minibatch Adam over ``trials`` until the early-stop streak or max_epochs.

    Epoch accuracy counts argmax-correct predictions made during the epoch,
    before each batch's update.
    """
    adam = adam or AdamState.for_network(net, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    log = TrainingLog()
    n = len(trials)
    bs = cfg.batch_size
    params, grad = net.params, net.grad
    streak = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        xs = trials.inputs[order]
        ys = trials.labels[order]
        correct = 0
        total_loss = 0.0
        for start in range(0, n, bs):
            xb = xs[start:start + bs]
            loss, c = net._backward(xb, ys[start:start + bs])
            if not math.isfinite(loss):
                raise DivergenceError(f"{context} non-finite loss at epoch {epoch + 1}")
            adam_step(adam, params, grad)
            correct += c
            total_loss += loss * len(xb)
        acc = correct / n
        log.accuracy.append(acc)
        log.loss.append(total_loss / n)
        streak = streak + 1 if acc == 1.0 else 0
        if streak >= cfg.early_stop_streak:
            log.converged = True
            break
    return log


def train_regime(net: Network, regime: Regime, cfg: RunConfig, rng: np.random.Generator,
                 adam: AdamState | None = None, context: str = "") -> TrainingLog:
    if regime.n * 6 != net.input_size:
        raise ProtocolError(f"network input {net.input_size} does not fit Multi-{regime.n}")
    trials = generate_trials(regime, cfg.trials_per_task, rng, cfg.sampling)
    return fit(net, trials, cfg, rng, adam, context)


@dataclass(frozen=True)
class Evaluation:
    accuracy: float
    per_task: dict[Task, float]
    counts: dict[Task, int]


def evaluate(net: Network, regime: Regime, trials_per_task: int, rng: np.random.Generator) -> Evaluation:
    """Feedback-free accuracy on fresh trials; parameters are untouched."""
    trials = generate_trials(regime, trials_per_task, rng)
    hits = net.predict(trials.inputs) == trials.labels
    per_task, counts = {}, {}
    for i, task in enumerate(regime.tasks):
        sel = trials.task_ids == i
        counts[task] = int(sel.sum())
        per_task[task] = float(hits[sel].mean())
    return Evaluation(float(hits.mean()), per_task, counts)


@dataclass
class RunResult:
    run_id: int
    seed: int
    model: str
    learning_curve_step1: list[float]
    learning_curve_step2: list[float]
    generalization_acc: float
    stability_acc: float
    per_task_generalization: dict[Task, float]
    per_task_stability: dict[Task, float]
    step1_params: np.ndarray
    final_params: np.ndarray
    sensitivity: dict[tuple[str, str], float] | None = None
    kept: bool = False

    @property
    def step1_accuracy(self) -> float:
        return self.learning_curve_step1[-1]

    @property
    def step2_accuracy(self) -> float:
        return self.learning_curve_step2[-1]


def two_step_experiment(spec: ModelSpec, regime1: Regime, regime2: Regime, cfg: RunConfig,
                        seed: int | None = None, run_id: int = 0) -> RunResult:
    if regime1.structure != regime2.structure or regime1.n != spec.n:
        raise ProtocolError("regimes and model must share one task structure")
    if not cfg.allow_overlap and regime1.task_set() & regime2.task_set():
        raise ProtocolError("first and second regime overlap")
    seed = cfg.seed if seed is None else seed
    init_ss, train1_ss, gen_ss, train2_ss, stab_ss = np.random.SeedSequence(seed).spawn(5)
    net = build(spec, np.random.default_rng(init_ss))
    ctx = f"[{spec.name} seed={seed}]"

    adam = AdamState.for_network(net, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    log1 = train_regime(net, regime1, cfg, np.random.default_rng(train1_ss), adam, ctx + " step 1")
    step1_params = net.params.copy()
    sens = None
    if cfg.sensitivity and log1.final_accuracy >= cfg.sensitivity_threshold:
        pairs = cue_pairs(regime1.structure, regime1)
        profile = cue_sensitivity(net, pairs, repeats=cfg.sensitivity_repeats,
                                  noise=cfg.sensitivity_noise, rng=np.random.default_rng(seed),
                                  per_stimulus=cfg.sensitivity_per_stimulus)
        sens = dict(profile.values)
    gen = evaluate(net, regime2, cfg.eval_trials_per_task, np.random.default_rng(gen_ss))

    if cfg.reset_adam:
        adam = AdamState.for_network(net, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    log2 = train_regime(net, regime2, cfg, np.random.default_rng(train2_ss), adam, ctx + " step 2")
    stab = evaluate(net, regime1, cfg.eval_trials_per_task, np.random.default_rng(stab_ss))

    return RunResult(
        run_id=run_id, seed=seed, model=spec.name,
        learning_curve_step1=log1.accuracy, learning_curve_step2=log2.accuracy,
        generalization_acc=gen.accuracy, stability_acc=stab.accuracy,
        per_task_generalization=gen.per_task, per_task_stability=stab.per_task,
        step1_params=step1_params, final_params=net.params.copy(), sensitivity=sens,
    )


METRICS = ("generalization", "stability", "step1_accuracy", "step2_accuracy", "epochs_step1", "epochs_step2")


def run_metrics(r: RunResult) -> dict[str, float]:
    return {
        "generalization": r.generalization_acc,
        "stability": r.stability_acc,
        "step1_accuracy": r.step1_accuracy,
        "step2_accuracy": r.step2_accuracy,
        "epochs_step1": float(len(r.learning_curve_step1)),
        "epochs_step2": float(len(r.learning_curve_step2)),
    }


@dataclass
class AggregateResult:
    model: str
    summaries: dict[str, Summary]
    kept: int
    launched: int
    discarded: int
    required: int
    sensitivity: dict[tuple[str, str], Summary] = field(default_factory=dict)

    @property
    def shortfall(self) -> int:
        return max(self.required - self.kept, 0)

    def mean(self, metric: str) -> float:
        return self.summaries[metric].mean

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "kept": self.kept,
            "launched": self.launched,
            "discarded": self.discarded,
            "required": self.required,
            "metrics": {k: asdict(v) for k, v in self.summaries.items()},
            "sensitivity": [
                {"tap": tap, "cue_type": cue, **asdict(s)}
                for (tap, cue), s in sorted(self.sensitivity.items())
            ],
        }


@dataclass
class BatchResult:
    aggregate: AggregateResult
    runs: list[RunResult]

    @property
    def kept_runs(self) -> list[RunResult]:
        return [r for r in self.runs if r.kept]


def aggregate_runs(model: str, runs: list[RunResult], required: int) -> AggregateResult:
    kept = [r for r in runs if r.kept]
    summaries = {}
    if kept:
        per_metric = {m: [run_metrics(r)[m] for r in kept] for m in METRICS}
        summaries = {m: distribution_summary(v) for m, v in per_metric.items()}
    sens_values: dict[tuple[str, str], list[float]] = {}
    # sensitivity has its own accuracy bar, so every run that carries it counts
    for r in runs:
        for key, v in (r.sensitivity or {}).items():
            if not math.isnan(v):
                sens_values.setdefault(key, []).append(v)
    sens = {k: distribution_summary(v) for k, v in sens_values.items()}
    return AggregateResult(model, summaries, len(kept), len(runs), len(runs) - len(kept), required, sens)


def _run_job(args):
    spec, r1, r2, cfg, seed, run_id = args
    return two_step_experiment(spec, r1, r2, cfg, seed=seed, run_id=run_id)


def run_batch(spec: ModelSpec, regime1: Regime, regime2: Regime, cfg: RunConfig,
              jobs: int = 1, strict: bool = True,
              progress: Callable[[RunResult], None] | None = None) -> BatchResult:
    """Seeded runs in launch order until ``n_runs_kept`` qualify.

    A run qualifies when its final step-1 training accuracy reaches
    ``keep_threshold``. Runs are launched lazily; the returned list stops at
    the last run needed, so the output does not depend on ``jobs``.
    """
    runs: list[RunResult] = []
    kept = 0
    index = 0
    pool = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        while kept < cfg.n_runs_kept and index < cfg.n_runs_launched:
            chunk = range(index, min(index + max(jobs, 1), cfg.n_runs_launched))
            args = [(spec, regime1, regime2, cfg, run_seed(cfg.seed, i), i) for i in chunk]
            results = list(pool.map(_run_job, args)) if pool else [_run_job(a) for a in args]
            for r in results:
                if kept >= cfg.n_runs_kept:
                    break
                r.kept = r.step1_accuracy >= cfg.keep_threshold
                kept += r.kept
                runs.append(r)
                if progress:
                    progress(r)
            index = chunk.stop
    finally:
        if pool:
            pool.shutdown()
    agg = aggregate_runs(spec.name, runs, cfg.n_runs_kept)
    if strict and kept < cfg.n_runs_kept:
        raise InsufficientRunsError(kept, cfg.n_runs_kept, len(runs))
    return BatchResult(agg, runs)


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
