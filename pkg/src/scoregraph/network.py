"""Simulated distributed estimation over a time-varying communication digraph.

Agents hold only their own received-score counts and exchange messages along
the communication edges active at each step.  The protocol is push-sum
gradient tracking: each agent mixes (estimate mass, tracker mass, weight)
over its in-neighbors with uniform out-degree weights, takes a step against
the tracked average gradient of the separable relaxed cost, and projects
onto the feasible box.  Rounds are synchronous and fully deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .classifier import Classification, classify_all, soft_classify
from .errors import ConnectivityViolation, ScheduleInvalid
from .estimator import (
    EstimateReport,
    nr_node_values_aligned,
    nr_total_batch,
    total_in_count_matrix,
)
from .graph import NodeStats, Realization, ScoreGraph, compute_node_stats
from .model import ModelFamily
from .util import seed_key, stream_rng

_SCHEDULE_STREAM = 3


@dataclass(frozen=True)
class CommSchedule:
    """Time-indexed directed communication edge sets.

    ``edges_at(t)`` returns the directed edges active at step t, excluding
    self-loops: every node's communication neighborhood implicitly includes
    itself at all times.  ``window`` is the length Q over which edge-set
    unions are required to be strongly connected.
    """

    num_nodes: int
    window: int
    kind: str
    edges_at: Callable[[int], tuple[tuple[int, int], ...]]


def _union_strongly_connected(num_nodes: int, edges) -> bool:
    """Two-sweep BFS reachability test for strong connectivity."""
    if num_nodes == 1:
        return True
    fwd: list[list[int]] = [[] for _ in range(num_nodes + 1)]
    bwd: list[list[int]] = [[] for _ in range(num_nodes + 1)]
    for i, j in edges:
        fwd[i].append(j)
        bwd[j].append(i)

    def reaches_all(adj):
        seen = {1}
        frontier = [1]
        while frontier:
            nxt = []
            for v in frontier:
                for w in adj[v]:
                    if w not in seen:
                        seen.add(w)
                        nxt.append(w)
            frontier = nxt
        return len(seen) == num_nodes

    return reaches_all(fwd) and reaches_all(bwd)


def check_assumption1(schedule: CommSchedule, horizon: int) -> tuple[bool, Optional[int]]:
    """Verify every full Q-window union up to the horizon is strongly connected.

    Returns (ok, first_violating_window); the window index w covers steps
    [w*Q, (w+1)*Q - 1].
    """
    if horizon < schedule.window:
        raise ValueError("horizon must be at least one window long")
    q = schedule.window
    for w in range(horizon // q):
        union: set[tuple[int, int]] = set()
        for t in range(w * q, (w + 1) * q):
            union.update(schedule.edges_at(t))
        if not _union_strongly_connected(schedule.num_nodes, union):
            return False, w
    return True, None


def make_schedule(kind: str, num_nodes: int, window: Optional[int] = None,
                  rng_seed=None, edges: Optional[Sequence[tuple[int, int]]] = None,
                  random_edges_per_step: Optional[int] = None) -> CommSchedule:
    """Build a communication schedule satisfying windowed strong connectivity.

    Kinds:
      static          -- fixed edge set (default: complete digraph), Q = 1
      periodic_gossip -- single round-robin cycle edge per step, Q = N
      random          -- round-robin cycle edge plus seeded random extras, Q = N

    The cycle edge in the periodic and random kinds guarantees the window
    property by construction for Q >= N; everything is validated post hoc
    and a ConnectivityViolation is raised on failure.
    """
    if num_nodes < 1:
        raise ValueError("num_nodes must be >= 1")
    n = num_nodes

    def cycle_edge(t: int) -> tuple[int, int]:
        i = t % n
        return (i + 1, (i + 1) % n + 1)

    if kind == "static":
        q = 1 if window is None else window
        if edges is None:
            fixed = tuple((i, j) for i in range(1, n + 1)
                          for j in range(1, n + 1) if i != j)
        else:
            fixed = tuple((int(i), int(j)) for i, j in edges)
        schedule = CommSchedule(n, q, "static", lambda t: fixed)
        validate_horizon = q
    elif kind == "periodic_gossip":
        q = n if window is None else window
        if n == 1:
            schedule = CommSchedule(n, q, "periodic_gossip", lambda t: ())
        else:
            schedule = CommSchedule(n, q, "periodic_gossip",
                                    lambda t: (cycle_edge(t),))
        validate_horizon = 2 * q * max(1, n)
    elif kind == "random":
        if rng_seed is None:
            raise ValueError("random schedules require rng_seed")
        q = n if window is None else window
        extras = n if random_edges_per_step is None else random_edges_per_step
        key = seed_key(rng_seed)

        def random_edges(t: int) -> tuple[tuple[int, int], ...]:
            out = set() if n == 1 else {cycle_edge(t)}
            if n > 1 and extras > 0:
                rng = stream_rng(*key, _SCHEDULE_STREAM, t)
                idx = rng.choice(n * (n - 1), size=min(extras, n * (n - 1)),
                                 replace=False)
                for c in idx:
                    i = int(c) // (n - 1)
                    j = int(c) % (n - 1)
                    if j >= i:
                        j += 1
                    out.add((i + 1, j + 1))
            return tuple(sorted(out))

        schedule = CommSchedule(n, q, "random", random_edges)
        validate_horizon = 4 * q
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")

    ok, bad = check_assumption1(schedule, validate_horizon)
    if not ok:
        raise ConnectivityViolation(
            f"{kind} schedule violates windowed strong connectivity at window {bad}")
    return schedule


@dataclass
class DistributedOptions:
    """Knobs for the push-sum gradient-tracking run."""

    step_mode: str = "diminishing"      # or "constant"
    step_a: float = 0.5
    step_b: float = 10.0
    step_size: float = 0.02             # constant mode
    consensus_tol: float = 1e-6
    grad_tol: float = 1e-6
    max_steps: int = 50_000
    fd_step: float = 1e-5
    grad_cap: float = 1e3
    seed_grid_shape: tuple[int, int] = (8, 8)
    trace_every: int = 10
    validate_windows: int = 20


@dataclass
class AgentState:
    """Protocol state of one agent.

    ``current_estimate`` is the de-biased iterate; ``tracker`` the gradient
    tracking mass variable; ``weight`` the push-sum scalar.
    """

    node: int
    local_stats: NodeStats
    current_estimate: np.ndarray
    tracker: np.ndarray = field(default_factory=lambda: np.zeros(2))
    weight: float = 1.0


@dataclass
class RoundSnapshot:
    """Observer view of one synchronous round (not agent knowledge)."""

    step: int
    estimates: np.ndarray
    weights: np.ndarray
    max_disagreement: float
    stationarity: float
    mean_objective: float


def _step_size(opts: DistributedOptions, t: int) -> float:
    if opts.step_mode == "constant":
        return opts.step_size
    if opts.step_mode == "diminishing":
        return opts.step_a / (t + opts.step_b)
    raise ValueError(f"unknown step_mode {opts.step_mode!r}")


def _mixing_matrix(num_nodes: int, edges) -> np.ndarray:
    """Column-stochastic uniform out-degree weights with implicit self-loops."""
    out_deg = np.ones(num_nodes)
    for i, _ in edges:
        out_deg[i - 1] += 1
    a = np.zeros((num_nodes, num_nodes))
    a[np.arange(num_nodes), np.arange(num_nodes)] = 1.0 / out_deg
    for i, j in edges:
        a[j - 1, i - 1] += 1.0 / out_deg[i - 1]
    return a


def _local_gradients(counts: np.ndarray, family: ModelFamily, z: np.ndarray,
                     lower: np.ndarray, upper: np.ndarray, step: float,
                     cap: float) -> np.ndarray:
    """(N, 2) finite-difference gradients of the local costs -g(.; n_i).

    Row i uses only row i of ``counts``; offsets clamp into the box.
    Consensus mixing can drag an agent into a corner where its local term
    is -inf, so non-finite differences are replaced and every component is
    capped; projection makes the cap directionally harmless and it keeps
    the tracker arithmetic finite.
    """
    grads = np.empty_like(z)
    for c in range(2):
        hi = np.minimum(step, upper[c] - z[:, c])
        lo = np.minimum(step, z[:, c] - lower[c])
        zp = z.copy()
        zp[:, c] += hi
        zm = z.copy()
        zm[:, c] -= lo
        fp = nr_node_values_aligned(counts, family, zp[:, 0], zp[:, 1])
        fm = nr_node_values_aligned(counts, family, zm[:, 0], zm[:, 1])
        with np.errstate(invalid="ignore"):
            grads[:, c] = -(fp - fm) / (hi + lo)
    grads = np.nan_to_num(grads, nan=0.0, posinf=np.inf, neginf=-np.inf)
    return np.clip(grads, -cap, cap)


def _seed_estimates(counts: np.ndarray, family: ModelFamily, lower: np.ndarray,
                    upper: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Each agent seeds at the grid argmax of its own local term."""
    ts = np.linspace(lower[0], upper[0], shape[0])
    gs = np.linspace(lower[1], upper[1], shape[1])
    tt, gg = np.meshgrid(ts, gs, indexing="ij")
    grid = np.column_stack([tt.ravel(), gg.ravel()])
    z0 = np.empty((len(counts), 2))
    for i in range(len(counts)):
        vals = nr_total_batch(counts[i:i + 1], family, grid[:, 0], grid[:, 1])
        z0[i] = grid[int(np.argmax(vals))]
    return z0


def iterate_distributed_nr(agents: list[AgentState], family: ModelFamily,
                           schedule: CommSchedule,
                           opts: DistributedOptions) -> Iterator[RoundSnapshot]:
    """Drive the protocol round by round, yielding observer snapshots.

    The generator mutates the agents in place; it stops after max_steps or
    once both the consensus and stationarity tolerances are met.
    """
    n = len(agents)
    lower = np.array([family.theta_domain[0], family.gamma_domain[0]])
    upper = np.array([family.theta_domain[1], family.gamma_domain[1]])
    counts = np.stack([a.local_stats.total_in_counts for a in agents])

    z = np.stack([a.current_estimate for a in agents]).astype(float)
    z = np.clip(z, lower, upper)
    w = np.array([a.weight for a in agents], dtype=float)
    x = w[:, None] * z
    grad_prev = _local_gradients(counts, family, z, lower, upper, opts.fd_step,
                                 opts.grad_cap)
    y = grad_prev.copy()

    matrix_cache: dict[tuple, np.ndarray] = {}
    for t in range(opts.max_steps):
        edges = tuple(schedule.edges_at(t))
        a = matrix_cache.get(edges)
        if a is None:
            a = _mixing_matrix(n, edges)
            if len(matrix_cache) < 4 * n:
                matrix_cache[edges] = a
        xt = a @ x
        yt = a @ y
        wt = a @ w

        z_hat = xt / wt[:, None]
        g_hat = yt / wt[:, None]
        z = np.clip(z_hat - _step_size(opts, t) * g_hat, lower, upper)
        grad_new = _local_gradients(counts, family, z, lower, upper, opts.fd_step,
                                    opts.grad_cap)
        x = wt[:, None] * z
        w = wt
        y = yt + grad_new - grad_prev
        grad_prev = grad_new

        for i, agent in enumerate(agents):
            agent.current_estimate = z[i]
            agent.tracker = y[i]
            agent.weight = float(w[i])

        disagreement = float(np.max(z.max(axis=0) - z.min(axis=0)))
        tracked = y / w[:, None]
        stationarity = float(np.max(np.abs(z - np.clip(z - tracked, lower, upper))))
        done = disagreement <= opts.consensus_tol and stationarity <= opts.grad_tol
        if done or t % opts.trace_every == 0 or t == opts.max_steps - 1:
            mean_obj = float(np.mean(
                nr_node_values_aligned(counts, family, z[:, 0], z[:, 1])))
            yield RoundSnapshot(step=t, estimates=z.copy(), weights=w.copy(),
                                max_disagreement=disagreement,
                                stationarity=stationarity,
                                mean_objective=mean_obj)
        if done:
            return


def run_distributed_nr_from_stats(stats: Sequence[NodeStats], family: ModelFamily,
                                  schedule: CommSchedule,
                                  options: DistributedOptions | None = None,
                                  ) -> tuple[list[EstimateReport], list[RoundSnapshot]]:
    """Run the protocol from per-agent statistics; see run_distributed_nr."""
    opts = options or DistributedOptions()
    if schedule.num_nodes != len(stats):
        raise ScheduleInvalid("schedule node count does not match agent count")
    horizon = schedule.window * max(1, opts.validate_windows)
    ok, bad = check_assumption1(schedule, horizon)
    if not ok:
        raise ScheduleInvalid(
            f"schedule fails windowed strong connectivity at window {bad}")

    lower = np.array([family.theta_domain[0], family.gamma_domain[0]])
    upper = np.array([family.theta_domain[1], family.gamma_domain[1]])
    counts = np.stack([s.total_in_counts for s in stats])
    z0 = _seed_estimates(counts, family, lower, upper, opts.seed_grid_shape)
    agents = [AgentState(node=s.node, local_stats=s, current_estimate=z0[i])
              for i, s in enumerate(stats)]

    trace: list[RoundSnapshot] = []
    last: Optional[RoundSnapshot] = None
    for snap in iterate_distributed_nr(agents, family, schedule, opts):
        trace.append(snap)
        last = snap

    if last is None:
        # max_steps == 0: report the seed points untouched.
        z = z0
        converged = False
    else:
        z = last.estimates
        converged = (last.max_disagreement <= opts.consensus_tol
                     and last.stationarity <= opts.grad_tol)

    objectives = nr_total_batch(counts, family, z[:, 0], z[:, 1])
    reports = [
        EstimateReport(theta_hat=float(z[i, 0]), gamma_hat=float(z[i, 1]),
                       objective=float(objectives[i]), trace=[],
                       method="nr_distributed", converged=converged,
                       restarts_used=0)
        for i in range(len(stats))
    ]
    return reports, trace


def run_distributed_nr(graph: ScoreGraph, realization: Realization,
                       family: ModelFamily, schedule: CommSchedule,
                       options: DistributedOptions | None = None,
                       ) -> tuple[list[EstimateReport], list[RoundSnapshot]]:
    """Distributed maximization of the separable relaxed log-likelihood.

    Every agent ends with its own copy of the estimate; under the stated
    connectivity assumption the copies agree up to the consensus tolerance
    and match the centralized maximizer.
    """
    stats = [compute_node_stats(graph, realization, node)
             for node in range(1, graph.num_nodes + 1)]
    return run_distributed_nr_from_stats(stats, family, schedule, options)


def classify_after_consensus(graph: ScoreGraph, realization: Realization,
                             family: ModelFamily,
                             distributed_reports: Sequence[EstimateReport],
                             use_mean: bool = False) -> list[Classification]:
    """Each node classifies itself with its own final estimate copy.

    ``use_mean`` switches to the network-average estimate instead, for
    comparing the two conventions.
    """
    if len(distributed_reports) != graph.num_nodes:
        raise ValueError("one report per node required")
    if use_mean:
        theta = float(np.mean([r.theta_hat for r in distributed_reports]))
        gamma = float(np.mean([r.gamma_hat for r in distributed_reports]))
        return classify_all(graph, realization, family, theta, gamma)
    out = []
    for node, report in enumerate(distributed_reports, start=1):
        stats = compute_node_stats(graph, realization, node)
        out.append(soft_classify(stats, family, report.theta_hat, report.gamma_hat))
    return out
