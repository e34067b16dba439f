"""Bipartite cue graphs of regimes, path-length connectivity, and
enumeration of regimes up to relabelling of cues.

Regimes are compared through their n x n biadjacency matrix. Two regimes
are equivalent when one maps to the other by permuting rows (sensory cues),
permuting columns (motor cues) and optionally transposing. The canonical
representative is the orbit element whose row-major bit string is
lexicographically smallest.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations, permutations

import numpy as np

from .task_env import EmptyRegimeError, Regime, TaskStructure

INF = math.inf


class InvalidCountError(ValueError):
    pass


@dataclass(frozen=True)
class CueGraph:
    """Vertices 0..n-1 are sensory cues, n..2n-1 motor cues."""

    n: int
    adjacency: np.ndarray

    @property
    def n_vertices(self) -> int:
        return 2 * self.n

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum()) // 2

    def neighbours(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[v])


@dataclass(frozen=True)
class ConnectivityMetrics:
    connected: bool
    aspl: float
    lspl: float
    # exact shortest-path total and pair count; None when disconnected
    path_sum: int | None = None
    n_pairs: int | None = None

    @property
    def aspl_fraction(self) -> Fraction | None:
        if self.path_sum is None:
            return None
        return Fraction(self.path_sum, self.n_pairs)


def build_graph(regime: Regime) -> CueGraph:
    if len(regime) == 0:
        raise EmptyRegimeError("an empty regime has no cue graph")
    n = regime.n
    adj = np.zeros((2 * n, 2 * n), dtype=bool)
    for t in regime.tasks:
        adj[t.sensory_cue, n + t.motor_cue] = True
        adj[n + t.motor_cue, t.sensory_cue] = True
    return CueGraph(n, adj)


def bfs_distances(graph: CueGraph, source: int) -> np.ndarray:
    """Hop distance from ``source``; -1 marks unreachable vertices."""
    dist = np.full(graph.n_vertices, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for w in graph.neighbours(u):
            if dist[w] < 0:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def all_pairs_distances(graph: CueGraph) -> np.ndarray:
    return np.stack([bfs_distances(graph, v) for v in range(graph.n_vertices)])


def connectivity_metrics(graph: CueGraph) -> ConnectivityMetrics:
    """ASPL/LSPL over all unordered pairs of distinct cue vertices.

    Any unreachable pair (including isolated cues) makes the regime
    disconnected, and both metrics are infinite.
    """
    dist = all_pairs_distances(graph)
    iu = np.triu_indices(graph.n_vertices, k=1)
    pair_d = dist[iu]
    if len(pair_d) == 0 or (pair_d < 0).any():
        return ConnectivityMetrics(False, INF, INF)
    total = int(pair_d.sum())
    return ConnectivityMetrics(True, total / len(pair_d), int(pair_d.max()), total, len(pair_d))


def regime_metrics(regime: Regime) -> ConnectivityMetrics:
    return connectivity_metrics(build_graph(regime))


# --- symmetry group ------------------------------------------------------

@lru_cache(maxsize=None)
def _group_images(n: int) -> np.ndarray:
    """(G, n*n) array: image g sends flat position p to images[g, p].

    G = 2 * (n!)^2, covering row perms x column perms x {identity, transpose}.
    """
    idx = np.arange(n * n).reshape(n, n)
    out = []
    for transpose in (False, True):
        base = idx.T if transpose else idx
        for rp in permutations(range(n)):
            for cp in permutations(range(n)):
                # entry at (i, j) of the result comes from base[rp[i], cp[j]]
                src = base[np.ix_(rp, cp)].ravel()
                dest = np.empty(n * n, dtype=np.int64)
                dest[src] = np.arange(n * n)
                out.append(dest)
    return np.array(out)


@lru_cache(maxsize=None)
def _code_weights(n: int) -> np.ndarray:
    """(n*n, G) integer weights so that flat_bits @ W gives every image's code.

    The code reads the image row-major with the first entry as the most
    significant bit, so smaller codes are lexicographically smaller.
    """
    dest = _group_images(n)
    place = (1 << (n * n - 1 - dest)).astype(np.int64)
    return place.T.copy()


def group_size(n: int) -> int:
    return 2 * math.factorial(n) ** 2


def matrix_code(matrix: np.ndarray) -> int:
    bits = np.asarray(matrix, dtype=np.int64).ravel()
    code = 0
    for b in bits:
        code = (code << 1) | int(b)
    return code


def code_matrix(code: int, n: int) -> np.ndarray:
    bits = [(code >> (n * n - 1 - p)) & 1 for p in range(n * n)]
    return np.array(bits, dtype=np.int8).reshape(n, n)


def orbit_codes(matrix: np.ndarray) -> np.ndarray:
    mat = np.asarray(matrix, dtype=np.int64)
    n = mat.shape[0]
    return mat.ravel() @ _code_weights(n)


@dataclass(frozen=True)
class CanonicalRegime:
    canonical_matrix: np.ndarray
    orbit_size: int

    @property
    def n(self) -> int:
        return self.canonical_matrix.shape[0]

    @property
    def code(self) -> int:
        return matrix_code(self.canonical_matrix)

    def bitstring(self) -> str:
        return "".join(str(int(b)) for b in self.canonical_matrix.ravel())

    def regime(self) -> Regime:
        return Regime.from_matrix(self.canonical_matrix)


def canonicalize(regime: Regime | np.ndarray) -> CanonicalRegime:
    mat = regime.to_matrix() if isinstance(regime, Regime) else np.asarray(regime)
    codes = orbit_codes(mat)
    n = mat.shape[0]
    return CanonicalRegime(code_matrix(int(codes.min()), n), int(len(np.unique(codes))))


@dataclass(frozen=True)
class CatalogEntry:
    regime_id: int
    canonical: CanonicalRegime
    metrics: ConnectivityMetrics

    @property
    def connected(self) -> bool:
        return self.metrics.connected

    def regime(self) -> Regime:
        return self.canonical.regime()


def _subset_matrices(n: int, t: int, chunk: int = 4096):
    for block in _chunks(combinations(range(n * n), t), chunk):
        flats = np.zeros((len(block), n * n), dtype=np.int64)
        rows = np.repeat(np.arange(len(block)), t)
        flats[rows, np.array(block).ravel()] = 1
        yield flats


def _chunks(it, size):
    buf = []
    for x in it:
        buf.append(x)
        if len(buf) == size:
            yield buf
            buf = []
    if buf:
        yield buf


def canonical_counts(n: int, t: int) -> dict[int, int]:
    """Canonical code -> number of task subsets in its orbit (brute force)."""
    if not 1 <= t <= n * n:
        raise InvalidCountError(f"T must lie in [1, {n * n}], got {t}")
    weights = _code_weights(n)
    counts: dict[int, int] = {}
    for flats in _subset_matrices(n, t):
        mins = (flats @ weights).min(axis=1)
        codes, freq = np.unique(mins, return_counts=True)
        for c, f in zip(codes.tolist(), freq.tolist()):
            counts[c] = counts.get(c, 0) + f
    return counts


def _sort_key(metrics: ConnectivityMetrics, code: int):
    return (metrics.aspl, metrics.lspl, code)


def enumerate_unique_regimes(n: int, t: int) -> list[CatalogEntry]:
    """All regimes of ``t`` tasks in Multi-n up to cue relabelling.

    Sorted by increasing (ASPL, LSPL), disconnected regimes last, ties broken
    by canonical code. ``regime_id`` is the 1-based position in that order.
    """
    return list(_catalog(n, t))


@lru_cache(maxsize=8)
def _catalog(n: int, t: int) -> tuple[CatalogEntry, ...]:
    counts = canonical_counts(n, t)
    rows = []
    for code, size in counts.items():
        mat = code_matrix(code, n)
        mat.setflags(write=False)  # entries are shared through the cache
        metrics = regime_metrics(Regime.from_matrix(mat))
        rows.append((_sort_key(metrics, code), CanonicalRegime(mat, size), metrics))
    rows.sort(key=lambda r: r[0])
    return tuple(CatalogEntry(i + 1, canon, m) for i, (_, canon, m) in enumerate(rows))


def connected_catalog(n: int = 4, t: int = 8) -> list[CatalogEntry]:
    return [e for e in enumerate_unique_regimes(n, t) if e.connected]


def table_rows(catalog: list[CatalogEntry]) -> list[tuple[float, float, int]]:
    """(ASPL, LSPL, count) rows grouped like a summary table."""
    grouped: dict[tuple[float, float], int] = {}
    for e in catalog:
        key = (e.metrics.aspl, e.metrics.lspl)
        grouped[key] = grouped.get(key, 0) + 1
    return [(a, l, c) for (a, l), c in sorted(grouped.items())]


def catalog_csv_rows(catalog: list[CatalogEntry]) -> list[dict]:
    out = []
    for e in catalog:
        m = e.metrics
        out.append({
            "regime_id": e.regime_id,
            "canonical_matrix": e.canonical.bitstring(),
            "connected": int(m.connected),
            "aspl": "inf" if not m.connected else repr(m.aspl),
            "lspl": "inf" if not m.connected else str(int(m.lspl)),
            "orbit_size": e.canonical.orbit_size,
        })
    return out


def structure_of(entry: CatalogEntry) -> TaskStructure:
    return TaskStructure(entry.canonical.n)
