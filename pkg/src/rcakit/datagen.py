"""Synthetic fault-injection datasets.

Two generators are provided: a linear structural VAR over a random DAG with
faults injected into a node's noise term, and a discrete Bayesian network
sampled row by row with faults injected by swapping a node's CPT.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .core import (
    CapacityError,
    CaseMetadata,
    CausalGraph,
    Dataset,
    Edge,
    FaultType,
    InputError,
    Kind,
    ModelError,
    StructureError,
    topological_order,
)

N_LEVELS = 6
BURN_IN = 50
DEFAULT_INTERVAL_S = 60.0
WEIGHT_RANGE = (0.5, 2.0)
#: weight of the lag-1 copy of every causal edge, relative to its instantaneous weight
LAG_WEIGHT = 0.05
MAX_PARENTS = 5
#: edge-count windows for the discrete generator, keyed by node count
EDGE_WINDOWS = {10: (13, 19), 50: (85, 104)}


def node_names(n: int) -> list[str]:
    width = max(2, len(str(n - 1)))
    return [f"svc{i:0{width}d}_metric" for i in range(n)]


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)


def random_dag(n_nodes: int, n_edges: int, seed: int) -> CausalGraph:
    """DAG with exactly ``n_edges`` edges drawn from the upper triangle of a random node order."""
    if n_nodes < 1:
        raise InputError("n_nodes must be positive")
    cap = n_nodes * (n_nodes - 1) // 2
    if n_edges < 0 or n_edges > cap:
        raise CapacityError(f"{n_edges} edges exceed the DAG maximum of {cap} for {n_nodes} nodes")
    rng = _rng(seed)
    names = node_names(n_nodes)
    perm = rng.permutation(n_nodes)
    pairs = [(perm[i], perm[j]) for i in range(n_nodes) for j in range(i + 1, n_nodes)]
    chosen = rng.choice(len(pairs), size=n_edges, replace=False) if n_edges else []
    edges = [Edge(names[pairs[k][0]], names[pairs[k][1]]) for k in sorted(chosen)]
    return CausalGraph(names, edges)


# --- continuous VAR generator ---------------------------------------------

@dataclass(frozen=True)
class VarModel:
    dag: CausalGraph
    weights: Mapping[tuple[str, str], float]
    noise_sigma: Mapping[str, float]
    lag_weight: float = LAG_WEIGHT

    def __post_init__(self):
        if not self.dag.is_directed():
            raise StructureError("VAR model needs a directed graph")
        order = topological_order(self.dag.nodes, self.dag.directed_edges())
        if order is None:
            raise StructureError("VAR model graph has a cycle")
        if set(self.weights) != set(self.dag.directed_edges()):
            raise ModelError("weights must be keyed exactly by the DAG's edges")
        for node in self.dag.nodes:
            if not self.noise_sigma.get(node, 0) > 0:
                raise ModelError(f"noise_sigma for {node!r} must be positive")

    @classmethod
    def random(cls, dag: CausalGraph, seed: int, lag_weight: float = LAG_WEIGHT) -> "VarModel":
        rng = _rng(seed)
        lo, hi = WEIGHT_RANGE
        weights = {}
        for a, b in sorted(dag.directed_edges()):
            weights[(a, b)] = float(rng.uniform(lo, hi) * rng.choice((-1.0, 1.0)))
        return cls(dag, weights, {n: 1.0 for n in dag.nodes}, lag_weight)

    def matrices(self) -> tuple[list[str], np.ndarray, np.ndarray]:
        """Topological node order, instantaneous matrix B and lag matrix A.

        Rows follow x[t] = B^T x[t] + A^T x[t-1] + e[t]; A is rescaled when the
        implied reduced-form VAR is unstable.
        """
        order = topological_order(self.dag.nodes, self.dag.directed_edges())
        pos = {n: i for i, n in enumerate(order)}
        n = len(order)
        inst = np.zeros((n, n))
        for (a, b), w in self.weights.items():
            inst[pos[a], pos[b]] = w
        lag = self.lag_weight * inst
        if n:
            # reduced form: x[t] = (I - B^T)^-1 A^T x[t-1] + ...
            reduced = np.linalg.solve(np.eye(n) - inst.T, lag.T)
            radius = max(abs(np.linalg.eigvals(reduced)))
            if radius >= 1.0:
                lag = lag * (0.9 / radius)
        return order, inst, lag


@dataclass(frozen=True)
class FaultSpec:
    target_node: str
    inject_index: int
    magnitude: float = 10.0
    duration: int = 2
    replacement_cpt: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if self.duration < 1:
            raise InputError("fault duration must be a positive number of rows")
        if self.inject_index < 0:
            raise InputError("inject_index must be nonnegative")


def gen_var(model: VarModel, length: int, fault: Optional[FaultSpec] = None, seed: int = 0,
            sampling_interval_s: float = DEFAULT_INTERVAL_S) -> tuple[Dataset, CaseMetadata]:
    """Simulate the structural VAR for ``length`` rows after a burn-in.

    A fault adds ``magnitude * noise_sigma`` to the target's noise term for
    ``duration`` consecutive rows starting at ``fault.inject_index``.
    """
    if length < 10:
        raise InputError("length must be at least 10 rows")
    names = list(model.dag.nodes)
    if fault is not None:
        if fault.target_node not in names:
            raise InputError(f"fault target {fault.target_node!r} not in the model")
        if fault.inject_index + fault.duration > length:
            raise InputError("fault window runs past the end of the series")
    order, inst, lag = model.matrices()
    n = len(order)
    rng = _rng(seed)
    total = length + BURN_IN
    sigma = np.array([model.noise_sigma[v] for v in order])
    noise = rng.standard_normal((total, n)) * sigma
    if fault is not None:
        k = order.index(fault.target_node)
        start = BURN_IN + fault.inject_index
        noise[start:start + fault.duration, k] += fault.magnitude * sigma[k]
    # x[t] = (I - B^T)^-1 (A^T x[t-1] + e[t]); B is nilpotent so the inverse exists
    total_effect = np.linalg.inv(np.eye(n) - inst.T)
    drive = lag @ total_effect.T
    shocks = noise @ total_effect.T
    x = np.zeros((total, n))
    prev = np.zeros(n)
    for t in range(total):
        prev = prev @ drive + shocks[t]
        x[t] = prev
    x = x[BURN_IN:]
    col = {v: i for i, v in enumerate(order)}
    values = x[:, [col[v] for v in names]]
    data = Dataset(tuple(names), values, sampling_interval_s, Kind.CONTINUOUS)
    if fault is None:
        return data, CaseMetadata(observation_end=length - 1)
    meta = CaseMetadata(
        inject_index=fault.inject_index,
        observation_end=length - 1,
        root_cause_service=fault.target_node.split("_", 1)[0],
        root_cause_metrics=frozenset({fault.target_node}),
        fault_type=FaultType.SIM,
    )
    return data, meta


# --- discrete Bayesian-network generator ----------------------------------

@dataclass(frozen=True, eq=False)
class DiscreteBayesNet:
    """DAG with one CPT per node: array of shape (6**n_parents, 6).

    CPT rows are indexed by the parents' values in ``dag.parents(node)`` order,
    first parent most significant.
    """

    dag: CausalGraph
    cpts: Mapping[str, np.ndarray]

    def __post_init__(self):
        if not self.dag.is_directed() or topological_order(self.dag.nodes, self.dag.directed_edges()) is None:
            raise StructureError("Bayes net needs a directed acyclic graph")
        for node in self.dag.nodes:
            check_cpt(self.cpts.get(node), len(self.dag.parents(node)), node)


def check_cpt(cpt, n_parents: int, node: str = "?") -> None:
    if cpt is None:
        raise ModelError(f"missing CPT for {node!r}")
    cpt = np.asarray(cpt)
    if cpt.shape != (N_LEVELS ** n_parents, N_LEVELS):
        raise ModelError(f"CPT for {node!r} has shape {cpt.shape}, expected {(N_LEVELS ** n_parents, N_LEVELS)}")
    if np.any(cpt < 0) or np.any(np.abs(cpt.sum(axis=1) - 1.0) > 1e-9):
        raise ModelError(f"CPT rows for {node!r} must be nonnegative and sum to 1")


def edge_window(n_nodes: int) -> tuple[int, int]:
    cap = n_nodes * (n_nodes - 1) // 2
    if n_nodes in EDGE_WINDOWS:
        lo, hi = EDGE_WINDOWS[n_nodes]
    else:
        lo, hi = int(np.floor(1.25 * n_nodes)), int(np.ceil(1.9 * n_nodes))
    return min(lo, cap), min(hi, cap)


def random_bayes_net(n_nodes: int, seed: int) -> DiscreteBayesNet:
    """Random DAG (about 1.5 edges per node) with Dirichlet(1) CPT rows."""
    if n_nodes < 1:
        raise InputError("n_nodes must be positive")
    rng = _rng(seed)
    names = node_names(n_nodes)
    lo, hi = edge_window(n_nodes)
    pairs = n_nodes * (n_nodes - 1) // 2
    p = min(1.0, 1.5 * n_nodes / pairs) if pairs else 0.0
    while True:
        perm = rng.permutation(n_nodes)
        upper = np.triu(rng.random((n_nodes, n_nodes)) < p, k=1)
        ii, jj = np.nonzero(upper)
        indeg = np.bincount(jj, minlength=n_nodes)
        if lo <= len(ii) <= hi and (indeg.max(initial=0) <= MAX_PARENTS):
            break
    edges = [Edge(names[perm[i]], names[perm[j]]) for i, j in zip(ii, jj)]
    dag = CausalGraph(names, edges)
    cpts = {}
    for node in names:
        k = len(dag.parents(node))
        cpts[node] = rng.dirichlet(np.ones(N_LEVELS), size=N_LEVELS ** k)
    return DiscreteBayesNet(dag, cpts)


def random_replacement_cpt(net: DiscreteBayesNet, node: str, seed: int) -> np.ndarray:
    rng = _rng(seed)
    k = len(net.dag.parents(node))
    return rng.dirichlet(np.ones(N_LEVELS), size=N_LEVELS ** k)


def gen_discrete(net: DiscreteBayesNet, length: int, fault: Optional[FaultSpec] = None, seed: int = 0,
                 sampling_interval_s: float = DEFAULT_INTERVAL_S) -> tuple[Dataset, CaseMetadata]:
    """Sample rows ancestrally; from ``fault.inject_index`` on, the target uses the replacement CPT."""
    if length < 10:
        raise InputError("length must be at least 10 rows")
    names = list(net.dag.nodes)
    replacement = None
    if fault is not None:
        if fault.target_node not in names:
            raise InputError(f"fault target {fault.target_node!r} not in the network")
        if fault.inject_index >= length:
            raise InputError("fault starts after the end of the series")
        replacement = fault.replacement_cpt
        if replacement is None:
            replacement = random_replacement_cpt(net, fault.target_node, seed ^ 0x5EED)
        check_cpt(replacement, len(net.dag.parents(fault.target_node)), fault.target_node)
    rng = _rng(seed)
    order = topological_order(net.dag.nodes, net.dag.directed_edges())
    col = {v: i for i, v in enumerate(names)}
    out = np.zeros((length, len(names)), dtype=np.int64)
    for node in order:
        parents = net.dag.parents(node)
        row_idx = np.zeros(length, dtype=np.int64)
        for p in parents:
            row_idx = row_idx * N_LEVELS + out[:, col[p]]
        probs = np.asarray(net.cpts[node])[row_idx]
        if replacement is not None and node == fault.target_node:
            probs = probs.copy()
            probs[fault.inject_index:] = np.asarray(replacement)[row_idx[fault.inject_index:]]
        cum = np.cumsum(probs, axis=1)
        u = rng.random(length)[:, None]
        out[:, col[node]] = np.minimum((u > cum).sum(axis=1), N_LEVELS - 1)
    data = Dataset(tuple(names), out.astype(float), sampling_interval_s, Kind.DISCRETE)
    if fault is None:
        return data, CaseMetadata(observation_end=length - 1)
    meta = CaseMetadata(
        inject_index=fault.inject_index,
        observation_end=length - 1,
        root_cause_service=fault.target_node.split("_", 1)[0],
        root_cause_metrics=frozenset({fault.target_node}),
        fault_type=FaultType.SIM,
    )
    return data, meta


# --- case factories ------------------------------------------------------------

def var_case(n_nodes: int, n_edges: int, length: int, inject_index: int, seed: int,
             magnitude: float = 10.0, duration: int = 2) -> tuple[Dataset, CaseMetadata, CausalGraph]:
    """One continuous fault case on a fresh random DAG with a uniformly chosen root cause."""
    rng = _rng(seed)
    s_dag, s_model, s_target, s_data = (int(x) for x in rng.integers(0, 2**63, size=4))
    dag = random_dag(n_nodes, n_edges, s_dag)
    model = VarModel.random(dag, s_model)
    target = dag.nodes[int(_rng(s_target).integers(n_nodes))]
    fault = FaultSpec(target, inject_index, magnitude, duration)
    data, meta = gen_var(model, length, fault, s_data)
    return data, meta, dag


def discrete_case(n_nodes: int, length: int, inject_index: int, seed: int
                  ) -> tuple[Dataset, CaseMetadata, CausalGraph]:
    """One discrete fault case: random Bayes net, target CPT swapped from ``inject_index`` on."""
    rng = _rng(seed)
    s_net, s_target, s_data = (int(x) for x in rng.integers(0, 2**63, size=3))
    net = random_bayes_net(n_nodes, s_net)
    target = net.dag.nodes[int(_rng(s_target).integers(n_nodes))]
    data, meta = gen_discrete(net, length, FaultSpec(target, inject_index), s_data)
    return data, meta, net.dag
