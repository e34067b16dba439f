"""Post-hoc analyses: layer-wise cue sensitivity, Pearson correlation and
regression against regime connectivity, and distribution summaries."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .task_env import Regime, Task, TaskStructure, exhaustive_trials

log = logging.getLogger(__name__)

CUE_TYPES = ("sensory", "motor")


class UndefinedCosineError(ValueError):
    pass


class DegenerateInputError(ValueError):
    pass


class EmptySeriesError(ValueError):
    pass


class IncompleteSweepError(ValueError):
    pass


# --- summaries -------------------------------------------------------------

@dataclass(frozen=True)
class Summary:
    mean: float
    std: float
    min: float
    max: float
    q1: float
    median: float
    q3: float
    n: int


def distribution_summary(values: Sequence[float], ddof: int = 1) -> Summary:
    """Mean, std, range and linearly interpolated quartiles.

    ``ddof=1`` gives the sample standard deviation; a single value has
    std 0.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise EmptySeriesError("cannot summarise an empty series")
    std = float(x.std(ddof=ddof)) if x.size > ddof else 0.0
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75])
    return Summary(float(x.mean()), std, float(x.min()), float(x.max()),
                   float(q1), float(med), float(q3), int(x.size))


def curve_summary(curves: Sequence[Sequence[float]]) -> tuple[np.ndarray, np.ndarray]:
    """Per-epoch mean and std of learning curves of unequal length.

    Curves that stopped early are held at their last value.
    """
    if not curves:
        raise EmptySeriesError("no curves")
    length = max(len(c) for c in curves)
    mat = np.array([list(c) + [c[-1]] * (length - len(c)) for c in curves])
    std = mat.std(axis=0, ddof=1) if len(curves) > 1 else np.zeros(length)
    return mat.mean(axis=0), std


# --- cue sensitivity -------------------------------------------------------

@dataclass(frozen=True)
class CuePair:
    trained_task: Task
    untrained_task: Task
    changed_cue: str

    def __post_init__(self):
        t, u = self.trained_task, self.untrained_task
        same_s, same_m = t.sensory_cue == u.sensory_cue, t.motor_cue == u.motor_cue
        expected = "sensory" if same_m and not same_s else "motor" if same_s and not same_m else None
        if self.changed_cue != expected:
            raise ValueError(f"{t} and {u} do not differ in exactly the {self.changed_cue} cue")


def cue_pairs(structure: TaskStructure, first_regime: Regime) -> list[CuePair]:
    """Trained/untrained task pairs that differ in exactly one cue."""
    trained = first_regime.task_set()
    out = []
    for t in first_regime.tasks:
        for u in structure.all_tasks():
            if u in trained:
                continue
            if t.motor_cue == u.motor_cue and t.sensory_cue != u.sensory_cue:
                out.append(CuePair(t, u, "sensory"))
            elif t.sensory_cue == u.sensory_cue and t.motor_cue != u.motor_cue:
                out.append(CuePair(t, u, "motor"))
    return out


@dataclass
class SensitivityProfile:
    """Mean cosine per (tap, cue type); NaN where no pair of that type exists."""

    values: dict[tuple[str, str], float]
    pair_counts: dict[str, int]
    spread: dict[tuple[str, str], float] = field(default_factory=dict)

    def __getitem__(self, key: tuple[str, str]) -> float:
        return self.values[key]

    @property
    def taps(self) -> list[str]:
        return sorted({tap for tap, _ in self.values})


def cosine(u: np.ndarray, v: np.ndarray, label: str = "") -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise UndefinedCosineError(f"zero-norm activation vector at tap {label or '?'}")
    c = float(np.dot(u, v) / (nu * nv))
    return min(1.0, max(-1.0, c))


def task_activations(net, structure: TaskStructure, task: Task, repeats: int = 1,
                     noise: float = 0.0, rng: np.random.Generator | None = None) -> dict[str, np.ndarray]:
    """Per-stimulus activations of every tap, averaged over presentations.

    Returns ``{tap: (2^n, width)}``. Presentations only differ when
    ``noise`` > 0 (Gaussian input noise).
    """
    x = exhaustive_trials(structure, [task]).inputs
    acc: dict[str, np.ndarray] = {}
    for _ in range(repeats):
        xi = x + noise * rng.standard_normal(x.shape) if noise > 0 else x
        _, taps = net.forward(xi, return_taps=True)
        for k, v in taps.items():
            acc[k] = acc[k] + v if k in acc else v.copy()
    return {k: v / repeats for k, v in acc.items()}


def cue_sensitivity(net, pairs: Sequence[CuePair], repeats: int = 1, noise: float = 0.0,
                    rng: np.random.Generator | None = None, per_stimulus: bool = False,
                    structure: TaskStructure | None = None) -> SensitivityProfile:
    """Cosine between a layer's mean activations under two tasks.

    By default the activations are first averaged over stimuli and the
    cosine is taken of the two means; ``per_stimulus=True`` instead
    averages per-stimulus cosines. Results are averaged over pairs,
    separately for sensory and motor cue changes.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if noise > 0 and rng is None:
        rng = np.random.default_rng(0)
    n = (net.input_size // 6)
    structure = structure or TaskStructure(n)
    cache: dict[Task, dict[str, np.ndarray]] = {}

    def acts(task):
        if task not in cache:
            cache[task] = task_activations(net, structure, task, repeats, noise, rng)
        return cache[task]

    sums = {(tap, c): [] for tap in net.taps for c in CUE_TYPES}
    counts = {c: 0 for c in CUE_TYPES}
    for pair in pairs:
        counts[pair.changed_cue] += 1
        a1, a2 = acts(pair.trained_task), acts(pair.untrained_task)
        for tap in net.taps:
            if per_stimulus:
                val = float(np.mean([cosine(u, v, tap) for u, v in zip(a1[tap], a2[tap])]))
            else:
                val = cosine(a1[tap].mean(axis=0), a2[tap].mean(axis=0), tap)
            if val < 0:
                log.info("negative cosine %.3f at %s", val, tap)
            sums[tap, pair.changed_cue].append(val)
    values = {k: (float(np.mean(v)) if v else math.nan) for k, v in sums.items()}
    return SensitivityProfile(values, counts)


def aggregate_profiles(profiles: Sequence[SensitivityProfile]) -> SensitivityProfile:
    keys = sorted({k for p in profiles for k in p.values})
    values, spread = {}, {}
    for k in keys:
        xs = [p.values[k] for p in profiles if not math.isnan(p.values.get(k, math.nan))]
        values[k] = float(np.mean(xs)) if xs else math.nan
        spread[k] = float(np.std(xs, ddof=1)) if len(xs) > 1 else 0.0
    counts = {c: sum(p.pair_counts.get(c, 0) for p in profiles) for c in CUE_TYPES}
    return SensitivityProfile(values, counts, spread)


# --- correlation -----------------------------------------------------------

def _betacf(a: float, b: float, x: float, max_iter: int = 500, tol: float = 1e-15) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float, y: float | None = None) -> float:
    """Regularised incomplete beta function I_x(a, b).

    ``y`` may carry 1 - x when the caller knows it more precisely than
    the subtraction would give.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    y = 1.0 - x if y is None else y
    if x == 0.0 or y == 0.0:
        return float(y == 0.0)
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log(y))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, y) / b


def t_two_sided_p(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    t2 = t * t
    return betainc(df / 2.0, 0.5, df / (df + t2), t2 / (df + t2))


def pearson(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Pearson r and its two-sided p-value (Student t with k-2 df)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be equal-length 1-D series")
    k = len(x)
    if k < 3:
        raise DegenerateInputError("need at least 3 points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise DegenerateInputError("zero variance input")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = min(1.0, max(-1.0, r))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((k - 2) / (1.0 - r * r))
    return r, t_two_sided_p(t, k - 2)


def linear_regression(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Least-squares (slope, intercept)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx = x - x.mean()
    sxx = float(dx @ dx)
    if sxx == 0:
        raise DegenerateInputError("zero variance in x")
    slope = float(dx @ (y - y.mean())) / sxx
    return slope, float(y.mean() - slope * x.mean())


@dataclass(frozen=True)
class CorrelationReport:
    model: str
    metric: str
    target: str
    r: float
    p: float
    slope: float
    intercept: float


@dataclass
class SweepReport:
    rows: list[dict]
    correlations: list[CorrelationReport]
    violin: list[dict]

    def correlation(self, model: str, metric: str, target: str) -> CorrelationReport:
        for c in self.correlations:
            if (c.model, c.metric, c.target) == (model, metric, target):
                return c
        raise KeyError((model, metric, target))


def regime_sweep_report(results: Mapping[str, Mapping[int, object]], catalog: Sequence,
                        per_run: Mapping[str, Mapping[int, Sequence[tuple[float, float]]]] | None = None) -> SweepReport:
    """Accuracy table ordered like ``catalog`` plus ASPL/LSPL correlations.

    ``results[model][regime_id]`` is an aggregate with ``mean(metric)``;
    ``per_run[model][regime_id]`` optionally lists (generalization,
    stability) per kept run for violin data.
    """
    ids = [e.regime_id for e in catalog]
    missing = {m: [i for i in ids if i not in res] for m, res in results.items()}
    missing = {m: v for m, v in missing.items() if v}
    if missing:
        raise IncompleteSweepError(f"missing regimes per model: {missing}")

    groups, rows = [], []
    last = None
    for e in catalog:
        if e.metrics.aspl != last:
            groups.append(e.regime_id)
            last = e.metrics.aspl
        row = {"row": len(rows) + 1, "regime_id": e.regime_id, "aspl": e.metrics.aspl,
               "lspl": e.metrics.lspl, "aspl_group": len(groups)}
        for model, res in results.items():
            agg = res[e.regime_id]
            row[f"{model}_generalization"] = agg.mean("generalization")
            row[f"{model}_stability"] = agg.mean("stability")
        rows.append(row)

    correlations = []
    metric_x = {"ASPL": [e.metrics.aspl for e in catalog], "LSPL": [e.metrics.lspl for e in catalog]}
    for model, res in results.items():
        for target in ("generalization", "stability"):
            ys = [res[i].mean(target) for i in ids]
            for metric, xs in metric_x.items():
                try:
                    r, p = pearson(xs, ys)
                    slope, intercept = linear_regression(xs, ys)
                except DegenerateInputError:
                    r = p = slope = intercept = math.nan
                correlations.append(CorrelationReport(model, metric, target, r, p, slope, intercept))

    violin = []
    for model, by_regime in (per_run or {}).items():
        for e in catalog:
            for k, (g, s) in enumerate(by_regime.get(e.regime_id, ())):
                violin.append({"model": model, "regime_id": e.regime_id, "aspl": e.metrics.aspl,
                               "run": k, "generalization": g, "stability": s})
    return SweepReport(rows, correlations, violin)
