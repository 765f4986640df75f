"""Local Bayesian classification from per-node score statistics.

Given an estimated (theta, gamma), each node's posterior over its own state
conditions only on the scores it gave and received.  The closed form used
here folds reciprocal, in-only, and out-only neighbors into three products
indexed by score counts, with the neighbor's state marginalized under the
prior; everything runs in log domain so large counts cannot overflow.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePosterior
from .graph import NodeStats, Realization, ScoreGraph, compute_node_stats
from .model import ModelFamily, check_feasible, prior_vector, score_tensor
from .util import logsumexp


@dataclass(frozen=True, eq=False)
class Classification:
    """Soft posterior, MAP label, and log-domain internals for one node."""

    node: int
    soft: np.ndarray
    map_label: int
    log_unnormalized: np.ndarray
    normalizer: float

    def __post_init__(self):
        self.soft.flags.writeable = False
        self.log_unnormalized.flags.writeable = False


def _masked_weighted_sum(counts: np.ndarray, log_terms: np.ndarray,
                         axes: tuple[int, ...]) -> np.ndarray:
    """sum(counts * log_terms) over axes, treating count 0 as exactly 0.

    Needed because a zero count must not pick up -inf from an impossible
    score it never observed.
    """
    expanded = counts.reshape(counts.shape + (1,))
    with np.errstate(invalid="ignore"):
        contrib = np.where(expanded > 0, expanded * log_terms, 0.0)
    return contrib.sum(axis=axes)


def soft_classify(stats: NodeStats, family: ModelFamily, theta: float,
                  gamma: float) -> Classification:
    """Posterior over the node's state given its incident score counts."""
    check_feasible(family, theta, gamma)
    tensor = score_tensor(family, theta)
    prior = prior_vector(family, gamma)

    with np.errstate(divide="ignore"):
        log_prior = np.log(prior)
        # mutual[h, k, l] = sum_m p[k | m, l] p[h | l, m] p[m]
        mutual = np.einsum("kml,hlm,m->hkl", tensor, tensor, prior)
        # incoming[h, l] = sum_m p[h | m, l] p[m]; outgoing flips the slots
        incoming = np.einsum("hml,m->hl", tensor, prior)
        outgoing = np.einsum("hlm,m->hl", tensor, prior)
        log_v = (
            log_prior
            + _masked_weighted_sum(stats.mutual_counts, np.log(mutual), (0, 1))
            + _masked_weighted_sum(stats.in_counts, np.log(incoming), (0,))
            + _masked_weighted_sum(stats.out_counts, np.log(outgoing), (0,))
        )

    log_z = logsumexp(log_v)
    if not np.isfinite(log_z):
        raise DegeneratePosterior(
            f"node {stats.node}: zero posterior mass for every state")
    soft = np.exp(log_v - log_z)
    soft = soft / soft.sum()
    return Classification(
        node=stats.node,
        soft=soft,
        map_label=int(np.argmax(soft)) + 1,
        log_unnormalized=log_v,
        normalizer=float(log_z),
    )


def map_classify(classification: Classification) -> int:
    """Most probable state index; ties break to the smallest index."""
    return int(np.argmax(classification.soft)) + 1


def classify_all(graph: ScoreGraph, realization: Realization, family: ModelFamily,
                 theta: float, gamma: float) -> list[Classification]:
    """Classify every node independently from its own incident scores."""
    return [
        soft_classify(compute_node_stats(graph, realization, node), family, theta, gamma)
        for node in range(1, graph.num_nodes + 1)
    ]
