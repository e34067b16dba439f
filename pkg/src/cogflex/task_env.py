"""Multi-n task structures, input encodings and trial synthesis.

A Multi-n structure has n sensory dimensions and n motor dimensions, each
with two values. A task pairs one sensory cue with one motor cue; the cued
stimulus value picks the response side and the motor cue picks the effector.

Input vectors are laid out as ``[sensory cue | motor cue | stimulus]``, each
block of length 2n, and targets are one-hot over 2n responses.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np


class InvalidTaskError(ValueError):
    pass


class InvalidStimulusError(ValueError):
    pass


class EmptyRegimeError(ValueError):
    pass


class RegimeCoverageError(ValueError):
    pass


@dataclass(frozen=True)
class TaskStructure:
    n: int
    values_per_dimension: int = field(default=2, init=False)

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")

    @property
    def n_tasks(self) -> int:
        return self.n * self.n

    @property
    def n_stimuli(self) -> int:
        return 2 ** self.n

    @property
    def input_size(self) -> int:
        return 6 * self.n

    @property
    def cue_size(self) -> int:
        return 4 * self.n

    @property
    def output_size(self) -> int:
        return 2 * self.n

    @property
    def chance(self) -> float:
        return 1.0 / (2 * self.n)

    def all_tasks(self) -> tuple["Task", ...]:
        return tuple(Task(s, m) for s in range(self.n) for m in range(self.n))

    def all_stimuli(self) -> tuple["Stimulus", ...]:
        return tuple(Stimulus(v) for v in product((0, 1), repeat=self.n))


@dataclass(frozen=True, order=True)
class Task:
    sensory_cue: int
    motor_cue: int

    def validate(self, n: int) -> None:
        if not (0 <= self.sensory_cue < n and 0 <= self.motor_cue < n):
            raise InvalidTaskError(f"{self} is not a task of Multi-{n}")

    def __str__(self) -> str:
        return f"(S{self.sensory_cue + 1},M{self.motor_cue + 1})"


@dataclass(frozen=True)
class Stimulus:
    values: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        if any(v not in (0, 1) for v in self.values):
            raise InvalidStimulusError(f"stimulus values must be 0/1: {self.values}")

    @property
    def n(self) -> int:
        return len(self.values)

    @classmethod
    def from_index(cls, index: int, n: int) -> "Stimulus":
        # bit d (most significant first) is the value of dimension d
        return cls(tuple((index >> (n - 1 - d)) & 1 for d in range(n)))

    @property
    def index(self) -> int:
        out = 0
        for v in self.values:
            out = (out << 1) | v
        return out


@dataclass(frozen=True)
class Regime:
    structure: TaskStructure
    tasks: tuple[Task, ...]

    def __post_init__(self):
        tasks = tuple(self.tasks)
        for t in tasks:
            t.validate(self.structure.n)
        if len(set(tasks)) != len(tasks):
            raise ValueError("regime tasks must be unique")
        object.__setattr__(self, "tasks", tasks)

    @property
    def n(self) -> int:
        return self.structure.n

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self) -> Iterator[Task]:
        return iter(self.tasks)

    def __contains__(self, task: object) -> bool:
        return task in self.tasks

    def task_set(self) -> frozenset[Task]:
        return frozenset(self.tasks)

    def to_matrix(self) -> np.ndarray:
        """n x n biadjacency matrix, rows = sensory cue, columns = motor cue."""
        mat = np.zeros((self.n, self.n), dtype=np.int8)
        for t in self.tasks:
            mat[t.sensory_cue, t.motor_cue] = 1
        return mat

    @classmethod
    def from_matrix(cls, matrix) -> "Regime":
        mat = np.asarray(matrix)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"regime matrix must be square, got shape {mat.shape}")
        if not np.isin(mat, (0, 1)).all():
            raise ValueError("regime matrix entries must be 0 or 1")
        n = mat.shape[0]
        tasks = tuple(Task(int(s), int(m)) for s, m in zip(*np.nonzero(mat)))
        return cls(TaskStructure(n), tasks)

    @classmethod
    def from_pairs(cls, n: int, pairs: Iterable[tuple[int, int]]) -> "Regime":
        return cls(TaskStructure(n), tuple(Task(s, m) for s, m in pairs))

    def covers_all_cues(self) -> bool:
        sens = {t.sensory_cue for t in self.tasks}
        mot = {t.motor_cue for t in self.tasks}
        return len(sens) == self.n and len(mot) == self.n

    def __str__(self) -> str:
        return "{" + ", ".join(str(t) for t in self.tasks) + "}"


def encode_cues(task: Task, n: int) -> np.ndarray:
    task.validate(n)
    out = np.zeros(4 * n)
    out[2 * task.sensory_cue: 2 * task.sensory_cue + 2] = 1.0
    out[2 * n + 2 * task.motor_cue: 2 * n + 2 * task.motor_cue + 2] = 1.0
    return out


def encode_stimulus(stimulus: Stimulus) -> np.ndarray:
    out = np.zeros(2 * stimulus.n)
    for d, v in enumerate(stimulus.values):
        out[2 * d + v] = 1.0
    return out


def target_index(task: Task, stimulus: Stimulus) -> int:
    # response side 0 ("left") for value 0 of the cued dimension
    return 2 * task.motor_cue + stimulus.values[task.sensory_cue]


def target_response(task: Task, stimulus: Stimulus) -> np.ndarray:
    task.validate(stimulus.n)
    out = np.zeros(2 * stimulus.n)
    out[target_index(task, stimulus)] = 1.0
    return out


@dataclass(frozen=True)
class Trial:
    task: Task
    stimulus: Stimulus
    input: np.ndarray
    target: np.ndarray


def _stimulus_table(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Encoded stimuli (2^n x 2n) and their raw values (2^n x n)."""
    values = np.array(list(product((0, 1), repeat=n)), dtype=np.int64)
    codes = np.zeros((len(values), 2 * n))
    rows = np.arange(len(values))
    for d in range(n):
        codes[rows, 2 * d + values[:, d]] = 1.0
    return codes, values


@dataclass(frozen=True)
class TrialSet:
    """Column-oriented batch of trials.

    ``inputs`` is (N, 6n), ``labels`` the hot index of each target,
    ``task_ids`` indexes into ``tasks`` and ``stimulus_ids`` is the stimulus
    index (dimension 0 is the most significant bit).
    """

    structure: TaskStructure
    tasks: tuple[Task, ...]
    inputs: np.ndarray
    labels: np.ndarray
    task_ids: np.ndarray
    stimulus_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def targets(self) -> np.ndarray:
        return np.eye(self.structure.output_size)[self.labels]

    def __getitem__(self, i: int) -> Trial:
        n = self.structure.n
        return Trial(
            task=self.tasks[self.task_ids[i]],
            stimulus=Stimulus.from_index(int(self.stimulus_ids[i]), n),
            input=self.inputs[i].copy(),
            target=np.eye(2 * n)[self.labels[i]],
        )

    def __iter__(self) -> Iterator[Trial]:
        return (self[i] for i in range(len(self)))


def build_trial_set(structure: TaskStructure, tasks: Sequence[Task],
                    task_ids: np.ndarray, stimulus_ids: np.ndarray) -> TrialSet:
    n = structure.n
    stim_codes, stim_values = _stimulus_table(n)
    cue_codes = np.stack([encode_cues(t, n) for t in tasks]) if tasks else np.zeros((0, 4 * n))
    task_ids = np.asarray(task_ids, dtype=np.int64)
    stimulus_ids = np.asarray(stimulus_ids, dtype=np.int64)
    inputs = np.concatenate([cue_codes[task_ids], stim_codes[stimulus_ids]], axis=1)
    sens = np.array([t.sensory_cue for t in tasks], dtype=np.int64)
    mot = np.array([t.motor_cue for t in tasks], dtype=np.int64)
    labels = 2 * mot[task_ids] + stim_values[stimulus_ids, sens[task_ids]] if len(task_ids) else np.zeros(0, np.int64)
    return TrialSet(structure, tuple(tasks), inputs, labels, task_ids, stimulus_ids)


def generate_trials(regime: Regime, trials_per_task: int, rng: np.random.Generator,
                    sampling: str = "uniform") -> TrialSet:
    """Shuffled trials for every task of ``regime``.

    ``sampling="uniform"`` draws each trial's stimulus i.i.d. uniformly;
    ``"balanced"`` cycles through all stimuli as evenly as the count allows
    before shuffling.
    """
    if len(regime) == 0:
        raise EmptyRegimeError("cannot generate trials for an empty regime")
    if trials_per_task < 1:
        raise ValueError("trials_per_task must be >= 1")
    k = len(regime)
    n_stim = regime.structure.n_stimuli
    task_ids = np.repeat(np.arange(k), trials_per_task)
    if sampling == "uniform":
        stimulus_ids = rng.integers(0, n_stim, size=k * trials_per_task)
    elif sampling == "balanced":
        block = np.arange(trials_per_task) % n_stim
        stimulus_ids = np.concatenate([rng.permutation(block) for _ in range(k)])
    else:
        raise ValueError(f"unknown sampling scheme {sampling!r}")
    order = rng.permutation(k * trials_per_task)
    return build_trial_set(regime.structure, regime.tasks, task_ids[order], stimulus_ids[order])


def exhaustive_trials(structure: TaskStructure, tasks: Sequence[Task]) -> TrialSet:
    """Every (task, stimulus) combination once, task-major order."""
    k, s = len(tasks), structure.n_stimuli
    return build_trial_set(structure, tasks, np.repeat(np.arange(k), s), np.tile(np.arange(s), k))


def complement_regime(structure: TaskStructure, first: Regime) -> Regime:
    taken = first.task_set()
    return Regime(structure, tuple(t for t in structure.all_tasks() if t not in taken))


# Built-in environments: rows are sensory cues, columns motor cues.
def _shift(n: int, k: int) -> list[tuple[int, int]]:
    return [(i, (i + k) % n) for i in range(n)]


def _presets() -> dict[str, tuple[list, list, int]]:
    return {
        "multi2": ([(0, 0), (1, 1)], [(0, 1), (1, 0)], 2),
        "multi3-poor": (_shift(3, 0), _shift(3, 1), 3),
        "multi3-rich": (_shift(3, 0) + _shift(3, 2), _shift(3, 1), 3),
        "multi4-poor": (_shift(4, 0), _shift(4, 1), 4),
        "multi4-middle": (_shift(4, 0) + _shift(4, 3), _shift(4, 1), 4),
        "multi4-rich": (_shift(4, 0) + _shift(4, 2) + _shift(4, 3), _shift(4, 1), 4),
    }


ENVIRONMENTS = tuple(_presets())

# Example middle-environment first regimes: two connected, two disconnected.
# Second regimes are the complements.
_CONNECTIVITY = {
    "ctd1": [(0, 3), (1, 3), (2, 2), (2, 3), (3, 0), (3, 1), (3, 2), (3, 3)],
    "ctd2": _shift(4, 0) + _shift(4, 3),
    "dtd1": [(s, m) for s in range(4) for m in (0, 1)],
    "dtd2": [(0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3)],
}
CONNECTIVITY_EXAMPLES = tuple(_CONNECTIVITY)


def environment(name: str) -> tuple[Regime, Regime]:
    """First and second regime of a named environment preset.

    Besides the richness presets, ``multi4-ctd1``/``ctd2``/``dtd1``/``dtd2``
    name the connected/disconnected middle examples (second regime =
    complement).
    """
    presets = _presets()
    if name in presets:
        first, second, n = presets[name]
        r1, r2 = Regime.from_pairs(n, first), Regime.from_pairs(n, second)
        if n in (2, 3) and not (r1.covers_all_cues() and r2.covers_all_cues()):
            raise RegimeCoverageError(f"{name}: every cue must appear in each regime")
        return r1, r2
    if name.startswith("multi4-") and name[7:] in _CONNECTIVITY:
        r1 = Regime.from_pairs(4, _CONNECTIVITY[name[7:]])
        return r1, complement_regime(r1.structure, r1)
    raise KeyError(f"unknown environment {name!r}; known: {ENVIRONMENTS + tuple('multi4-' + k for k in _CONNECTIVITY)}")


def check_coverage(first: Regime, second: Regime) -> None:
    """Multi-2/Multi-3 environments require every cue in each regime."""
    if first.n in (2, 3):
        for label, r in (("first", first), ("second", second)):
            if not r.covers_all_cues():
                raise RegimeCoverageError(f"{label} regime {r} leaves a cue unused")


def read_regime(path: str | Path) -> Regime:
    rows = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
    try:
        mat = np.array([[int(x) for x in row] for row in rows])
    except ValueError as exc:
        raise ValueError(f"{path}: regime file must hold a 0/1 matrix") from exc
    return Regime.from_matrix(mat)


def write_regime(regime: Regime, path: str | Path) -> None:
    mat = regime.to_matrix()
    Path(path).write_text("\n".join(" ".join(str(int(v)) for v in row) for row in mat) + "\n")
