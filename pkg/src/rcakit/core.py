"""Shared domain types: datasets, case metadata, causal graphs and rankings."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np


class RCAError(Exception):
    """Base class for every error raised by this package."""

    category = "error"


class CapacityError(RCAError):
    category = "capacity"


class StructureError(RCAError):
    category = "structure"


class ModelError(RCAError):
    category = "model"


class DegeneracyError(RCAError):
    category = "degeneracy"


class SampleSizeError(RCAError):
    category = "sample-size"


class ConfigError(RCAError):
    category = "config"


class WindowError(RCAError):
    category = "window"


class InputError(RCAError):
    category = "input"


class FormatError(RCAError):
    category = "format"


class MetricReferenceError(RCAError):
    category = "reference"


class TuningError(RCAError):
    category = "tuning"


class Kind(str, enum.Enum):
    CONTINUOUS = "continuous"
    DISCRETE = "discrete"


class FaultType(str, enum.Enum):
    CPU = "CPU"
    MEM = "MEM"
    DISK = "DISK"
    DELAY = "DELAY"
    LOSS = "LOSS"
    SIM = "SIM"


def service_of(metric: str) -> str:
    """Service a metric belongs to: the name prefix before the first underscore."""
    return metric.split("_", 1)[0]


@dataclass(frozen=True, eq=False)
class Dataset:
    """T x M matrix of metric samples.

    ``values`` is stored read-only; rows are time, columns follow
    ``metric_names``.
    """

    metric_names: tuple[str, ...]
    values: np.ndarray
    sampling_interval_s: float = 1.0
    kind: Kind = Kind.CONTINUOUS

    def __post_init__(self):
        names = tuple(self.metric_names)
        object.__setattr__(self, "metric_names", names)
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2:
            raise InputError(f"values must be 2-D, got shape {values.shape}")
        if values.shape[1] != len(names):
            raise InputError(
                f"{values.shape[1]} columns but {len(names)} metric names"
            )
        if len(set(names)) != len(names):
            raise InputError("metric names must be unique")
        if values.shape[0] < 1:
            raise InputError("dataset needs at least one row")
        if not np.all(np.isfinite(values)):
            raise InputError("dataset contains NaN or infinite cells")
        if not (self.sampling_interval_s > 0):
            raise InputError("sampling_interval_s must be positive")
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is Kind.DISCRETE:
            if np.any(values != np.round(values)) or values.min() < 0 or values.max() > 5:
                raise InputError("discrete datasets hold integers in [0, 5] only")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_metrics(self) -> int:
        return self.values.shape[1]

    @property
    def services(self) -> list[str]:
        seen: dict[str, None] = {}
        for name in self.metric_names:
            seen.setdefault(service_of(name), None)
        return list(seen)

    def index(self, metric: str) -> int:
        try:
            return self.metric_names.index(metric)
        except ValueError:
            raise MetricReferenceError(f"unknown metric {metric!r}") from None

    def column(self, metric: str) -> np.ndarray:
        return self.values[:, self.index(metric)]

    def subset(self, metrics: Sequence[str]) -> "Dataset":
        idx = [self.index(m) for m in metrics]
        return Dataset(tuple(metrics), self.values[:, idx], self.sampling_interval_s, self.kind)

    def rows(self, start: int, stop: int) -> "Dataset":
        return Dataset(self.metric_names, self.values[start:stop], self.sampling_interval_s, self.kind)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.metric_names == other.metric_names
            and self.kind == other.kind
            and self.sampling_interval_s == other.sampling_interval_s
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True)
class CaseMetadata:
    inject_index: Optional[int] = None
    observation_start: int = 0
    observation_end: Optional[int] = None
    delta_s: float = 0.0
    root_cause_service: Optional[str] = None
    root_cause_metrics: Optional[frozenset[str]] = None
    fault_type: Optional[FaultType] = None

    def __post_init__(self):
        if self.root_cause_metrics is not None:
            object.__setattr__(self, "root_cause_metrics", frozenset(self.root_cause_metrics))
        if self.fault_type is not None:
            object.__setattr__(self, "fault_type", FaultType(self.fault_type))
        if self.delta_s < 0:
            raise InputError("delta_s must be nonnegative")
        if self.observation_start < 0:
            raise InputError("observation_start must be nonnegative")
        if self.inject_index is not None:
            if self.inject_index < self.observation_start:
                raise InputError("inject_index precedes observation_start")
            if self.observation_end is not None and self.inject_index > self.observation_end:
                raise InputError("inject_index beyond observation_end")

    def end(self, data: Dataset) -> int:
        return data.n_rows - 1 if self.observation_end is None else self.observation_end

    def validate_against(self, data: Dataset) -> None:
        if self.observation_end is not None and self.observation_end >= data.n_rows:
            raise InputError("observation_end beyond the last row")
        for metric in self.root_cause_metrics or ():
            if metric not in data.metric_names:
                raise MetricReferenceError(f"root cause metric {metric!r} not in dataset")

    def root_causes(self) -> frozenset[str]:
        """Ground-truth set used for scoring; metrics if known, else the service."""
        if self.root_cause_metrics:
            return self.root_cause_metrics
        if self.root_cause_service:
            return frozenset({self.root_cause_service})
        return frozenset()


class Mark(str, enum.Enum):
    DIRECTED = "->"
    UNDIRECTED = "--"
    BIDIRECTED = "<->"


@dataclass(frozen=True, order=True)
class Edge:
    a: str
    b: str
    mark: Mark = Mark.DIRECTED

    @staticmethod
    def make(a: str, b: str, mark: Mark = Mark.DIRECTED) -> "Edge":
        mark = Mark(mark)
        if mark is not Mark.DIRECTED and b < a:
            a, b = b, a
        return Edge(a, b, mark)

    @property
    def pair(self) -> frozenset[str]:
        return frozenset((self.a, self.b))

    def __str__(self):
        return f"{self.a} {self.mark.value} {self.b}"


class CausalGraph:
    """Immutable mixed graph over named nodes.

    At most one edge per unordered pair. Undirected and bidirected edges are
    stored with the lexicographically smaller endpoint first.
    """

    __slots__ = ("_nodes", "_edges", "_by_pair")

    def __init__(self, nodes: Iterable[str], edges: Iterable[Edge | tuple] = ()):
        self._nodes = tuple(nodes)
        if len(set(self._nodes)) != len(self._nodes):
            raise InputError("graph nodes must be unique")
        known = set(self._nodes)
        by_pair: dict[frozenset, Edge] = {}
        for e in edges:
            if not isinstance(e, Edge):
                e = Edge.make(*e)
            else:
                e = Edge.make(e.a, e.b, e.mark)
            if e.a == e.b:
                raise StructureError(f"self loop on {e.a!r}")
            if e.a not in known or e.b not in known:
                raise InputError(f"edge {e} references unknown node")
            if e.pair in by_pair and by_pair[e.pair] != e:
                raise StructureError(f"more than one edge between {e.a!r} and {e.b!r}")
            by_pair[e.pair] = e
        self._by_pair = by_pair
        self._edges = frozenset(by_pair.values())

    @classmethod
    def from_adjacency(cls, nodes: Sequence[str], adj: np.ndarray) -> "CausalGraph":
        """Build from a 0/1 matrix where adj[i, j] = 1 means i -> j.

        Symmetric entries become undirected edges.
        """
        edges = []
        n = len(nodes)
        for i in range(n):
            for j in range(i + 1, n):
                ij, ji = adj[i, j] != 0, adj[j, i] != 0
                if ij and ji:
                    edges.append(Edge.make(nodes[i], nodes[j], Mark.UNDIRECTED))
                elif ij:
                    edges.append(Edge(nodes[i], nodes[j]))
                elif ji:
                    edges.append(Edge(nodes[j], nodes[i]))
        return cls(nodes, edges)

    @property
    def nodes(self) -> tuple[str, ...]:
        return self._nodes

    @property
    def edges(self) -> frozenset[Edge]:
        return self._edges

    def __len__(self):
        return len(self._edges)

    def __iter__(self) -> Iterator[Edge]:
        return iter(sorted(self._edges))

    def __eq__(self, other):
        if not isinstance(other, CausalGraph):
            return NotImplemented
        return set(self._nodes) == set(other._nodes) and self._edges == other._edges

    def __hash__(self):
        return hash((frozenset(self._nodes), self._edges))

    def __repr__(self):
        body = ", ".join(str(e) for e in self)
        return f"CausalGraph({len(self._nodes)} nodes: {body})"

    def edge_between(self, a: str, b: str) -> Optional[Edge]:
        return self._by_pair.get(frozenset((a, b)))

    def directed_edges(self) -> list[tuple[str, str]]:
        return [(e.a, e.b) for e in self if e.mark is Mark.DIRECTED]

    def parents(self, node: str) -> list[str]:
        return sorted(e.a for e in self._edges if e.mark is Mark.DIRECTED and e.b == node)

    def children(self, node: str) -> list[str]:
        return sorted(e.b for e in self._edges if e.mark is Mark.DIRECTED and e.a == node)

    def neighbors(self, node: str) -> list[str]:
        out = []
        for e in self._edges:
            if e.a == node:
                out.append(e.b)
            elif e.b == node:
                out.append(e.a)
        return sorted(out)

    def is_directed(self) -> bool:
        return all(e.mark is Mark.DIRECTED for e in self._edges)

    def with_nodes(self, nodes: Iterable[str]) -> "CausalGraph":
        extra = [n for n in nodes if n not in set(self._nodes)]
        return CausalGraph(self._nodes + tuple(extra), self._edges)

    def adjacency(self, order: Optional[Sequence[str]] = None) -> np.ndarray:
        """Matrix with adj[i, j] = 1 for i -> j; non-directed edges set both ways."""
        order = list(order or self._nodes)
        pos = {n: i for i, n in enumerate(order)}
        adj = np.zeros((len(order), len(order)), dtype=int)
        for e in self._edges:
            i, j = pos[e.a], pos[e.b]
            adj[i, j] = 1
            if e.mark is not Mark.DIRECTED:
                adj[j, i] = 1
        return adj


def skeleton(g: CausalGraph) -> CausalGraph:
    """Drop every edge mark, keeping one undirected edge per adjacent pair."""
    return CausalGraph(g.nodes, [Edge.make(e.a, e.b, Mark.UNDIRECTED) for e in g.edges])


def topological_order(nodes: Sequence[str], directed: Iterable[tuple[str, str]]) -> Optional[list[str]]:
    """Kahn's algorithm with lexicographic tie-breaking; None when a cycle exists."""
    import heapq

    children: dict[str, list[str]] = {n: [] for n in nodes}
    indeg = {n: 0 for n in nodes}
    for a, b in directed:
        children[a].append(b)
        indeg[b] += 1
    heap = [n for n in nodes if indeg[n] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        n = heapq.heappop(heap)
        order.append(n)
        for c in children[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, c)
    return order if len(order) == len(nodes) else None


def is_acyclic(g: CausalGraph) -> bool:
    """True iff the directed edges of ``g`` contain no cycle."""
    return topological_order(g.nodes, g.directed_edges()) is not None


class Ranking:
    """Metrics ordered by descending score, ties broken by name."""

    __slots__ = ("_entries", "warnings")

    def __init__(self, scores: Mapping[str, float] | Iterable[tuple[str, float]], warnings: Sequence[str] = ()):
        items = list(scores.items()) if isinstance(scores, Mapping) else list(scores)
        names = [n for n, _ in items]
        if len(set(names)) != len(names):
            raise InputError("metric names must be unique within a ranking")
        clean = []
        for name, score in items:
            score = float(score)
            if not math.isfinite(score):
                raise InputError(f"non-finite score for {name!r}")
            clean.append((name, score))
        clean.sort(key=lambda kv: kv[0])
        clean.sort(key=lambda kv: -kv[1])
        self._entries = tuple(clean)
        self.warnings = tuple(warnings)

    @property
    def entries(self) -> tuple[tuple[str, float], ...]:
        return self._entries

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self._entries]

    def score(self, name: str) -> float:
        return dict(self._entries)[name]

    def position(self, name: str) -> int:
        return self.names.index(name)

    def top(self, k: int) -> list[str]:
        return self.names[:k]

    def by_service(self) -> "Ranking":
        """Collapse to services, each placed at its best metric's rank."""
        seen: dict[str, float] = {}
        n = len(self._entries)
        for i, (name, _) in enumerate(self._entries):
            seen.setdefault(service_of(name), float(n - i))
        return Ranking(seen, self.warnings)

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __eq__(self, other):
        if not isinstance(other, Ranking):
            return NotImplemented
        return self._entries == other._entries

    def __repr__(self):
        head = ", ".join(f"{n}={s:.3g}" for n, s in self._entries[:5])
        return f"Ranking({head}{', ...' if len(self) > 5 else ''})"
