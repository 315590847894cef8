"""Graph-aware trajectory distances (weighted edit, DTW) and transition mining."""

from __future__ import annotations

import math
import threading
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from .model import HOLOCAUST_KINDS, LocationGraph, LocationKind, Trajectory

GAP = None


class UnknownLocation(KeyError):
    pass


class EmptyTrajectory(ValueError):
    pass


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class DistanceConfig:
    """Point-wise distance settings.

    ``d_max`` of None means the diameter of the largest connected component.
    ``unit_substitution`` makes every mismatch cost exactly 1.
    """

    graph_cap: float = math.inf
    type_penalty: float = 0.5
    d_max: float | None = None
    unit_substitution: bool = False

    def __post_init__(self):
        if not self.graph_cap > 0:
            raise ValueError("graph_cap must be positive")
        if not (self.type_penalty >= 0 and math.isfinite(self.type_penalty)):
            raise ValueError("type_penalty must be a finite non-negative number")
        if self.d_max is not None and not (self.d_max > 0 and math.isfinite(self.d_max)):
            raise ValueError("d_max must be a finite positive number")


@dataclass(frozen=True)
class TrajectoryAlignment:
    pairs: tuple[tuple[int | None, int | None], ...]
    cost: float


@dataclass(frozen=True)
class TransitionCount:
    source: str
    target: str
    document_count: int


class GraphDistance:
    """Undirected hop distances over a map, memoized per source node."""

    def __init__(self, graph: LocationGraph, cfg: DistanceConfig | None = None):
        self.cfg = cfg or DistanceConfig()
        self.graph = graph
        self.types = {n.name: n.loc_type for n in graph.nodes}
        self._g = nx.Graph()
        self._g.add_nodes_from(self.types)
        self._g.add_edges_from((e.source, e.target) for e in graph.edges)
        self._hops: dict[str, dict[str, int]] = {}
        self._pairs: dict[tuple[str, str], float] = {}
        self._lock = threading.Lock()
        self.d_max = self.cfg.d_max if self.cfg.d_max is not None else self._largest_diameter()

    def _largest_diameter(self) -> float:
        if self._g.number_of_nodes() == 0:
            return 1.0
        comp = max(nx.connected_components(self._g), key=lambda c: (len(c), sorted(c)))
        diameter = nx.diameter(self._g.subgraph(comp)) if len(comp) > 1 else 0
        return float(max(diameter, 1))

    def hops(self, a: str, b: str) -> float:
        for name in (a, b):
            if name not in self.types:
                raise UnknownLocation(name)
        table = self._hops.get(a)
        if table is None:
            table = dict(nx.single_source_shortest_path_length(self._g, a))
            with self._lock:
                table = self._hops.setdefault(a, table)
        return float(table[b]) if b in table else self.cfg.graph_cap

    def __call__(self, a: str, b: str) -> float:
        """Scaled hop distance capped at 1, plus the type penalty on a kind mismatch."""
        cached = self._pairs.get((a, b))
        if cached is not None:
            return cached
        if a == b:
            if a not in self.types:
                raise UnknownLocation(a)
            d = 0.0
        else:
            d = min(1.0, self.hops(a, b) / self.d_max)
            if self.types[a].kind is not self.types[b].kind:
                d += self.cfg.type_penalty
        self._pairs[(a, b)] = d
        return d

    def substitution(self, a: str, b: str) -> float:
        if self.cfg.unit_substitution:
            return 0.0 if a == b else 1.0
        return self(a, b) / (1.0 + self.cfg.type_penalty)


def pointwise_distance(a: str, b: str, graph: LocationGraph, cfg: DistanceConfig | None = None) -> float:
    return GraphDistance(graph, cfg)(a, b)


def _names(t: Trajectory | Sequence[str]) -> list[str]:
    return t.locations if isinstance(t, Trajectory) else list(t)


def weighted_edit_distance(
    a: Trajectory | Sequence[str],
    b: Trajectory | Sequence[str],
    graph: LocationGraph | GraphDistance,
    cfg: DistanceConfig | None = None,
) -> tuple[float, TrajectoryAlignment]:
    """Edit distance with graph-scaled substitution and unit insert/delete.

    The backtrace prefers substitution, then deletion, then insertion.
    """
    dist = graph if isinstance(graph, GraphDistance) else GraphDistance(graph, cfg)
    xs, ys = _names(a), _names(b)
    for name in set(xs) | set(ys):
        if name not in dist.types:
            raise UnknownLocation(name)
    n, m = len(xs), len(ys)
    D = np.zeros((n + 1, m + 1))
    D[:, 0] = np.arange(n + 1)
    D[0, :] = np.arange(m + 1)
    sub = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            sub[i, j] = dist.substitution(xs[i], ys[j])
            D[i + 1, j + 1] = min(D[i, j] + sub[i, j], D[i, j + 1] + 1.0, D[i + 1, j] + 1.0)
    pairs = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and math.isclose(D[i, j], D[i - 1, j - 1] + sub[i - 1, j - 1], abs_tol=1e-12):
            pairs.append((i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and math.isclose(D[i, j], D[i - 1, j] + 1.0, abs_tol=1e-12):
            pairs.append((i - 1, GAP))
            i -= 1
        else:
            pairs.append((GAP, j - 1))
            j -= 1
    cost = float(D[n, m])
    return cost, TrajectoryAlignment(tuple(reversed(pairs)), cost)


def dtw_distance(
    a: Trajectory | Sequence[str],
    b: Trajectory | Sequence[str],
    graph: LocationGraph | GraphDistance,
    cfg: DistanceConfig | None = None,
) -> tuple[float, TrajectoryAlignment]:
    """Classic DTW over the point-wise distance; returns cost and warping path."""
    dist = graph if isinstance(graph, GraphDistance) else GraphDistance(graph, cfg)
    xs, ys = _names(a), _names(b)
    if not xs or not ys:
        raise EmptyTrajectory("DTW needs two non-empty trajectories")
    n, m = len(xs), len(ys)
    inf = math.inf
    C = [[0.0] + [inf] * m]
    for x in xs:
        prev = C[-1]
        cur = [inf]
        left = inf
        for j, y in enumerate(ys):
            best = prev[j]
            if prev[j + 1] < best:
                best = prev[j + 1]
            if left < best:
                best = left
            left = dist(x, y) + best
            cur.append(left)
        C.append(cur)
    path = [(n - 1, m - 1)]
    i, j = n, m
    while (i, j) != (1, 1):
        steps = [(C[i - 1][j - 1], i - 1, j - 1), (C[i - 1][j], i - 1, j), (C[i][j - 1], i, j - 1)]
        _, i, j = min(steps, key=lambda s: s[0])
        path.append((i - 1, j - 1))
    cost = float(C[n][m])
    return cost, TrajectoryAlignment(tuple(reversed(path)), cost)


def alignment_cost(
    alignment: TrajectoryAlignment,
    a: Sequence[str],
    b: Sequence[str],
    dist: GraphDistance,
    measure: str = "weighted_edit",
) -> float:
    """Recompute the cost implied by an alignment's pairs."""
    total = 0.0
    for i, j in alignment.pairs:
        if i is GAP or j is GAP:
            total += 1.0
        elif measure == "dtw":
            total += dist(a[i], b[j])
        else:
            total += dist.substitution(a[i], b[j])
    return total


MEASURES = {"weighted_edit": weighted_edit_distance, "dtw": dtw_distance}


def pairwise_matrix(
    trajs: Sequence[Trajectory],
    graph: LocationGraph,
    cfg: DistanceConfig | None = None,
    measure: str = "weighted_edit",
) -> np.ndarray:
    if len(trajs) < 2:
        raise PreconditionError("need at least two trajectories")
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}")
    fn = MEASURES[measure]
    dist = GraphDistance(graph, cfg)
    k = len(trajs)
    M = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            M[i, j] = M[j, i] = fn(trajs[i], trajs[j], dist)[0]
    return M


def top_k_pairs(M: np.ndarray, ids: Sequence[str], k: int = 5) -> list[tuple[str, str, float]]:
    """Closest distinct pairs, ties broken by id order."""
    rows = [(float(M[i, j]), ids[i], ids[j]) for i in range(len(ids)) for j in range(i + 1, len(ids))]
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    return [(a, b, d) for d, a, b in rows[:k]]


def transition_counts(
    trajs: Iterable[Trajectory],
    graph: LocationGraph | None = None,
    kinds: Iterable[LocationKind] | None = None,
    min_docs: int = 1,
) -> list[TransitionCount]:
    """Directed adjacent pairs counted once per document.

    With ``kinds`` (needs ``graph`` for node types), a transition is kept when
    at least one endpoint has one of those kinds.
    """
    if min_docs < 1:
        raise ValueError("min_docs must be positive")
    keep_kinds = None if kinds is None else frozenset(kinds)
    types = {} if graph is None else {n.name: n.kind for n in graph.nodes}
    if keep_kinds is not None and graph is None:
        raise ValueError("a kind filter needs the map for node types")
    counts: Counter = Counter()
    for traj in trajs:
        names = traj.locations
        counts.update({(a, b) for a, b in zip(names, names[1:]) if a != b})
    rows = []
    for (a, b), c in counts.items():
        if c < min_docs:
            continue
        if keep_kinds is not None and not (types.get(a) in keep_kinds or types.get(b) in keep_kinds):
            continue
        rows.append(TransitionCount(a, b, c))
    rows.sort(key=lambda t: (-t.document_count, t.source, t.target))
    return rows


DEFAULT_TRANSITION_KINDS = HOLOCAUST_KINDS
