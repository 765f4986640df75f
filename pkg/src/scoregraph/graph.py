"""Directed score graphs, sampled realizations, and per-node score statistics.

Node ids are 1-based everywhere in the public API, matching the file format.
All types are immutable after construction and safe to share across
concurrent Monte Carlo trials.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DuplicateEdge,
    EdgeBudgetOutOfRange,
    IndexOutOfRange,
    IsolatedInNode,
    SelfLoop,
    UnknownNode,
)
from .util import seed_key, stream_rng

# Stream tags keep graph construction, state draws, and per-edge score draws
# on independent substreams of the same user seed.
_GRAPH_STREAM = 0
_STATE_STREAM = 1
_SCORE_STREAM = 2


@dataclass(frozen=True)
class AlphabetSpec:
    """Finite state and score alphabets: C state labels and R score labels."""

    num_states: int
    num_scores: int
    state_values: tuple[str, ...]
    score_values: tuple[str, ...]

    def __post_init__(self):
        if self.num_states < 1:
            raise ValueError("num_states must be >= 1")
        if self.num_scores < 1:
            raise ValueError("num_scores must be >= 1")
        if len(self.state_values) != self.num_states:
            raise ValueError("state_values must have num_states entries")
        if len(self.score_values) != self.num_scores:
            raise ValueError("score_values must have num_scores entries")
        if len(set(self.state_values)) != self.num_states:
            raise ValueError("state labels must be distinct")
        if len(set(self.score_values)) != self.num_scores:
            raise ValueError("score labels must be distinct")

    @classmethod
    def numeric(cls, num_states: int, num_scores: int) -> "AlphabetSpec":
        """Alphabet with default labels c1..cC and r1..rR."""
        return cls(
            num_states=num_states,
            num_scores=num_scores,
            state_values=tuple(f"c{i}" for i in range(1, num_states + 1)),
            score_values=tuple(f"r{h}" for h in range(1, num_scores + 1)),
        )


@dataclass(frozen=True)
class ScoreGraph:
    """Directed evaluation topology.

    Edge (i, j) means node i evaluated node j.  Every node must have at
    least one incoming edge.  Edges are stored sorted lexicographically.
    """

    num_nodes: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        out_sets = [set() for _ in range(self.num_nodes + 1)]
        in_sets = [set() for _ in range(self.num_nodes + 1)]
        for i, j in self.edges:
            out_sets[i].add(j)
            in_sets[j].add(i)
        object.__setattr__(self, "_out", tuple(frozenset(s) for s in out_sets))
        object.__setattr__(self, "_in", tuple(frozenset(s) for s in in_sets))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def _check_node(self, node: int) -> None:
        if not 1 <= node <= self.num_nodes:
            raise UnknownNode(f"node {node} not in 1..{self.num_nodes}")

    def out_neighbors(self, node: int) -> frozenset[int]:
        self._check_node(node)
        return self._out[node]

    def in_neighbors(self, node: int) -> frozenset[int]:
        self._check_node(node)
        return self._in[node]

    def in_degree(self, node: int) -> int:
        return len(self.in_neighbors(node))

    def out_degree(self, node: int) -> int:
        return len(self.out_neighbors(node))


@dataclass(frozen=True)
class Realization:
    """One draw of hidden states and observed edge scores on a score graph.

    ``states`` may be None when the ground truth is genuinely unknown (e.g.
    instances loaded from files without a "states" entry); classification
    and estimation only need ``scores``.
    """

    num_states: int
    num_scores: int
    states: Optional[tuple[int, ...]]
    scores: dict[tuple[int, int], int]


@dataclass(frozen=True, eq=False)
class NodeStats:
    """Per-node sufficient statistics of incident scores.

    ``mutual_counts[h-1, k-1]`` counts reciprocal neighbors to whom the node
    gave score r_h and from whom it received score r_k.  ``in_counts`` and
    ``out_counts`` cover in-only and out-only neighbors.  ``total_in_counts``
    counts every received score regardless of reciprocity.
    """

    node: int
    mutual_counts: np.ndarray
    in_counts: np.ndarray
    out_counts: np.ndarray
    total_in_counts: np.ndarray

    def __post_init__(self):
        for arr in (self.mutual_counts, self.in_counts, self.out_counts,
                    self.total_in_counts):
            arr.flags.writeable = False


def build_score_graph(num_nodes: int, edge_list: Sequence[tuple[int, int]]) -> ScoreGraph:
    """Validate and construct a score graph with lexicographically sorted edges."""
    if num_nodes < 1:
        raise IndexOutOfRange(f"num_nodes must be >= 1, got {num_nodes}")
    seen: set[tuple[int, int]] = set()
    edges: list[tuple[int, int]] = []
    for pair in edge_list:
        i, j = int(pair[0]), int(pair[1])
        if not (1 <= i <= num_nodes and 1 <= j <= num_nodes):
            raise IndexOutOfRange(f"edge ({i},{j}) references nodes outside 1..{num_nodes}")
        if i == j:
            raise SelfLoop(f"self-loop at node {i}")
        if (i, j) in seen:
            raise DuplicateEdge(f"edge ({i},{j}) appears more than once")
        seen.add((i, j))
        edges.append((i, j))
    in_degree = [0] * (num_nodes + 1)
    for _, j in edges:
        in_degree[j] += 1
    isolated = [v for v in range(1, num_nodes + 1) if in_degree[v] == 0]
    if isolated:
        raise IsolatedInNode(f"nodes with no incoming edge: {isolated}")
    return ScoreGraph(num_nodes=num_nodes, edges=tuple(sorted(edges)))


def random_score_graph(num_nodes: int, num_edges: int, rng_seed) -> ScoreGraph:
    """Directed Hamiltonian cycle plus uniformly random distinct extra edges.

    The cycle 1 -> 2 -> ... -> N -> 1 guarantees in-degree >= 1 at every
    density, so any num_edges in [N, N^2 - N] yields a valid graph.
    """
    n_max = num_nodes * num_nodes - num_nodes
    if not num_nodes <= num_edges <= n_max:
        raise EdgeBudgetOutOfRange(
            f"num_edges must be in [{num_nodes}, {n_max}], got {num_edges}")
    cycle = [(i, i + 1) for i in range(1, num_nodes)] + [(num_nodes, 1)]
    extra = num_edges - num_nodes
    edges = list(cycle)
    if extra > 0:
        rng = stream_rng(*seed_key(rng_seed), _GRAPH_STREAM)
        idx = np.arange(num_nodes * num_nodes)
        src = idx // num_nodes + 1
        dst = idx % num_nodes + 1
        is_cycle = dst == (src % num_nodes) + 1
        candidates = idx[(src != dst) & ~is_cycle]
        chosen = rng.choice(candidates, size=extra, replace=False)
        edges.extend((int(c) // num_nodes + 1, int(c) % num_nodes + 1) for c in chosen)
    return build_score_graph(num_nodes, edges)


def _check_realization_shape(graph: ScoreGraph, realization: Realization) -> None:
    if len(realization.scores) != graph.num_edges:
        raise ValueError("realization does not belong to graph: edge count mismatch")
    if realization.states is not None and len(realization.states) != graph.num_nodes:
        raise ValueError("realization does not belong to graph: state count mismatch")


def compute_node_stats(graph: ScoreGraph, realization: Realization, node: int) -> NodeStats:
    """Partition a node's score-graph neighbors and count incident scores."""
    graph._check_node(node)
    _check_realization_shape(graph, realization)
    R = realization.num_scores
    out_set = graph.out_neighbors(node)
    in_set = graph.in_neighbors(node)
    mutual = out_set & in_set
    scores = realization.scores

    mutual_counts = np.zeros((R, R), dtype=np.int64)
    in_counts = np.zeros(R, dtype=np.int64)
    out_counts = np.zeros(R, dtype=np.int64)
    total_in = np.zeros(R, dtype=np.int64)

    for j in mutual:
        h = scores[(node, j)]
        k = scores[(j, node)]
        mutual_counts[h - 1, k - 1] += 1
    for j in in_set - mutual:
        in_counts[scores[(j, node)] - 1] += 1
    for j in out_set - mutual:
        out_counts[scores[(node, j)] - 1] += 1
    for j in in_set:
        total_in[scores[(j, node)] - 1] += 1

    return NodeStats(node=node, mutual_counts=mutual_counts, in_counts=in_counts,
                     out_counts=out_counts, total_in_counts=total_in)


def sample_realization(graph: ScoreGraph, family, theta: float, gamma: float,
                       rng_seed) -> Realization:
    """Draw i.i.d. states from the prior and one conditional score per edge.

    States and each edge's score come from independent seeded substreams, so
    growing the edge set leaves earlier draws untouched.
    """
    from .model import check_feasible, prior_vector, score_tensor

    check_feasible(family, theta, gamma)
    key = seed_key(rng_seed)
    C = family.alphabet.num_states
    R = family.alphabet.num_scores

    prior = prior_vector(family, gamma)
    state_rng = stream_rng(*key, _STATE_STREAM)
    states = tuple(int(s) + 1 for s in
                   state_rng.choice(C, size=graph.num_nodes, p=prior))

    tensor = score_tensor(family, theta)
    scores: dict[tuple[int, int], int] = {}
    for (i, j) in graph.edges:
        edge_rng = stream_rng(*key, _SCORE_STREAM, i, j)
        p = tensor[:, states[i - 1] - 1, states[j - 1] - 1]
        scores[(i, j)] = int(edge_rng.choice(R, p=p)) + 1

    return Realization(num_states=C, num_scores=R, states=states, scores=scores)


def save_instance(path, graph: ScoreGraph, realization: Realization) -> None:
    """Write the JSON instance format: 1-based indices, edges sorted by (i, j)."""
    _check_realization_shape(graph, realization)
    payload = {
        "N": graph.num_nodes,
        "C": realization.num_states,
        "R": realization.num_scores,
        "edges": [[i, j, realization.scores[(i, j)]] for (i, j) in graph.edges],
    }
    if realization.states is not None:
        payload["states"] = list(realization.states)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_instance(path) -> tuple[ScoreGraph, Realization]:
    """Read the JSON instance format and re-validate it."""
    with open(path) as fh:
        payload = json.load(fh)
    for field_name in ("N", "C", "R", "edges"):
        if field_name not in payload:
            raise ValueError(f"instance file missing required key {field_name!r}")
    C = int(payload["C"])
    R = int(payload["R"])
    if C < 1 or R < 1:
        raise IndexOutOfRange("C and R must be >= 1")
    graph = build_score_graph(int(payload["N"]),
                              [(int(e[0]), int(e[1])) for e in payload["edges"]])
    scores: dict[tuple[int, int], int] = {}
    for e in payload["edges"]:
        i, j, h = int(e[0]), int(e[1]), int(e[2])
        if not 1 <= h <= R:
            raise IndexOutOfRange(f"score {h} on edge ({i},{j}) outside 1..{R}")
        scores[(i, j)] = h
    states = None
    if "states" in payload and payload["states"] is not None:
        states = tuple(int(s) for s in payload["states"])
        if any(not 1 <= s <= C for s in states):
            raise IndexOutOfRange("state outside 1..C in instance file")
    realization = Realization(num_states=C, num_scores=R, states=states, scores=scores)
    _check_realization_shape(graph, realization)
    return graph, realization
