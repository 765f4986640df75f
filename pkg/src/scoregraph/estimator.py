"""Joint estimation of the score-model parameter and the prior hyperparameter.

Two objectives are provided: the exact marginal log-likelihood of all scores
(enumeration over joint states; a small-scale oracle guarded by a term
budget) and the node-based relaxed log-likelihood, a separable sum of
per-node terms that treats each node's received-score block as independent.
Both are maximized by a multi-start projected gradient ascent with
finite-difference gradients and backtracking line search.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceeded
from .graph import Realization, ScoreGraph, _check_realization_shape
from .model import (
    ModelFamily,
    check_feasible,
    log_prior_vector,
    log_score_tensor,
    prior_vector,
    prior_vector_batch,
    score_tensor,
    score_tensor_batch,
)
from .util import logsumexp

EXACT_TERM_BUDGET = 10_000_000
_ENUM_CHUNK = 1 << 16


@dataclass
class OptimizerOptions:
    """Knobs for the multi-start projected gradient ascent."""

    grid_shape: tuple[int, int] = (8, 8)
    max_ascents: int = 8
    max_iters: int = 500
    grad_tol: float = 1e-6
    fd_step: float = 1e-5
    armijo: float = 1e-4
    initial_step: float = 1.0
    min_step: float = 1e-14


@dataclass
class EstimateReport:
    """Outcome of one estimation run.

    ``trace`` holds (iteration, objective, theta, gamma) rows; the iteration
    index restarts at 0 whenever a new ascent begins, and the objective is
    nondecreasing within each ascent.
    """

    theta_hat: float
    gamma_hat: float
    objective: float
    trace: list[tuple[int, float, float, float]] = field(default_factory=list)
    method: str = "nr_centralized"
    converged: bool = False
    restarts_used: int = 0


def total_in_count_matrix(graph: ScoreGraph, realization: Realization) -> np.ndarray:
    """(N, R) matrix: row i counts scores received by node i+1, per score value."""
    _check_realization_shape(graph, realization)
    counts = np.zeros((graph.num_nodes, realization.num_scores), dtype=np.int64)
    for (i, j), h in realization.scores.items():
        counts[j - 1, h - 1] += 1
    return counts


def _node_terms(counts: np.ndarray, log_prior: np.ndarray,
                log_q: np.ndarray) -> np.ndarray:
    """Per-node relaxed terms from received-score counts.

    log_q[h, l] = log sum_m p[h | m, l] p[m]; the result is, per row,
    logsumexp over l of (log_prior[l] + sum_h counts[h] * log_q[h, l]).
    """
    if np.isneginf(log_q).any():
        expanded = counts[:, :, None]
        with np.errstate(invalid="ignore"):
            inner = np.where(expanded > 0, expanded * log_q[None, :, :], 0.0).sum(axis=1)
    else:
        inner = counts @ log_q
    return logsumexp(log_prior[None, :] + inner, axis=1)


def nr_node_values(counts: np.ndarray, family: ModelFamily, theta: float,
                   gamma: float) -> np.ndarray:
    """Vector of per-node relaxed log-likelihood terms at one parameter point."""
    check_feasible(family, theta, gamma)
    tensor = score_tensor(family, theta)
    prior = prior_vector(family, gamma)
    q = np.einsum("hml,m->hl", tensor, prior)
    with np.errstate(divide="ignore"):
        return _node_terms(counts, np.log(prior), np.log(q))


def nr_log_likelihood(graph: ScoreGraph, realization: Realization,
                      family: ModelFamily, theta: float, gamma: float) -> float:
    """Node-based relaxed log-likelihood: the sum of per-node terms."""
    counts = total_in_count_matrix(graph, realization)
    return float(nr_node_values(counts, family, theta, gamma).sum())


def nr_total_batch(counts: np.ndarray, family: ModelFamily, thetas: np.ndarray,
                   gammas: np.ndarray) -> np.ndarray:
    """Relaxed log-likelihood of one instance at a batch of parameter points."""
    tensors = score_tensor_batch(family, thetas)
    priors = prior_vector_batch(family, gammas)
    q = np.einsum("bhml,bm->bhl", tensors, priors)
    with np.errstate(divide="ignore"):
        log_q = np.log(q)
        log_prior = np.log(priors)
    if np.isneginf(log_q).any():
        return np.array([
            _node_terms(counts, log_prior[b], log_q[b]).sum()
            for b in range(len(thetas))
        ])
    inner = np.einsum("ih,bhl->bil", counts.astype(float), log_q)
    return logsumexp(log_prior[:, None, :] + inner, axis=2).sum(axis=1)


def nr_node_values_aligned(counts: np.ndarray, family: ModelFamily,
                           thetas: np.ndarray, gammas: np.ndarray) -> np.ndarray:
    """Row b of ``counts`` evaluated at (thetas[b], gammas[b]); returns (B,)."""
    tensors = score_tensor_batch(family, thetas)
    priors = prior_vector_batch(family, gammas)
    q = np.einsum("bhml,bm->bhl", tensors, priors)
    with np.errstate(divide="ignore"):
        log_q = np.log(q)
        log_prior = np.log(priors)
    if np.isneginf(log_q).any():
        return np.array([
            _node_terms(counts[b:b + 1], log_prior[b], log_q[b])[0]
            for b in range(len(thetas))
        ])
    inner = np.einsum("bh,bhl->bl", counts.astype(float), log_q)
    return logsumexp(log_prior + inner, axis=1)


class _ExactObjective:
    """Exact marginal log-likelihood with edge arrays precomputed once."""

    def __init__(self, graph: ScoreGraph, realization: Realization,
                 family: ModelFamily):
        _check_realization_shape(graph, realization)
        self.family = family
        self.num_nodes = graph.num_nodes
        C = family.alphabet.num_states
        self.num_states = C
        self.num_terms = C ** graph.num_nodes
        if self.num_terms > EXACT_TERM_BUDGET:
            raise BudgetExceeded(
                f"{C}^{graph.num_nodes} = {self.num_terms} joint states exceeds "
                f"the {EXACT_TERM_BUDGET} term budget")
        edges = graph.edges
        self.ei = np.array([i - 1 for i, _ in edges], dtype=np.int64)
        self.ej = np.array([j - 1 for _, j in edges], dtype=np.int64)
        self.eh = np.array([realization.scores[e] - 1 for e in edges], dtype=np.int64)
        self.powers = C ** np.arange(graph.num_nodes - 1, -1, -1, dtype=np.int64)

    def __call__(self, theta: float, gamma: float) -> float:
        log_t = log_score_tensor(self.family, theta)
        log_p = log_prior_vector(self.family, gamma)
        acc = -np.inf
        for start in range(0, self.num_terms, _ENUM_CHUNK):
            stop = min(start + _ENUM_CHUNK, self.num_terms)
            idx = np.arange(start, stop, dtype=np.int64)
            assign = (idx[:, None] // self.powers[None, :]) % self.num_states
            lp = log_p[assign].sum(axis=1)
            if len(self.ei):
                lp = lp + log_t[self.eh[None, :], assign[:, self.ei],
                                assign[:, self.ej]].sum(axis=1)
            acc = np.logaddexp(acc, logsumexp(lp))
        return float(acc)


def exact_log_likelihood(graph: ScoreGraph, realization: Realization,
                         family: ModelFamily, theta: float, gamma: float) -> float:
    """Exact marginal log-likelihood of all scores by joint-state enumeration.

    Refuses with BudgetExceeded when C^N would pass the term budget.
    """
    check_feasible(family, theta, gamma)
    return _ExactObjective(graph, realization, family)(theta, gamma)


def project_box(x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    return np.clip(x, lower, upper)


def fd_gradient(f, x: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                step: float) -> np.ndarray:
    """Central-difference gradient with offsets clamped into the box.

    At interior points this is the plain central difference with the given
    step; at the boundary the offsets shrink on the blocked side.
    """
    grad = np.zeros_like(x, dtype=float)
    for c in range(len(x)):
        hi = min(step, upper[c] - x[c])
        lo = min(step, x[c] - lower[c])
        xp = x.copy()
        xp[c] += hi
        xm = x.copy()
        xm[c] -= lo
        grad[c] = (f(xp) - f(xm)) / (hi + lo)
    return grad


def _projected_ascent(f, x0: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                      opts: OptimizerOptions):
    """Maximize f over the box from x0; returns (x, fx, trace, converged)."""
    x = project_box(np.asarray(x0, dtype=float), lower, upper)
    fx = f(x)
    trace = [(0, fx, float(x[0]), float(x[1]))]
    step = opts.initial_step
    converged = False
    for it in range(1, opts.max_iters + 1):
        grad = fd_gradient(f, x, lower, upper, opts.fd_step)
        residual = np.max(np.abs(project_box(x + grad, lower, upper) - x))
        if residual <= opts.grad_tol:
            converged = True
            break
        alpha = min(max(step * 2.0, opts.min_step), opts.initial_step)
        accepted = False
        while alpha >= opts.min_step:
            xn = project_box(x + alpha * grad, lower, upper)
            gain = float(np.dot(grad, xn - x))
            fn = f(xn)
            if np.isfinite(fn) and fn >= fx + opts.armijo * gain:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # No ascent step at any scale: numerically stationary.
            converged = True
            break
        step = alpha
        x, fx = xn, fn
        trace.append((it, fx, float(x[0]), float(x[1])))
    return x, fx, trace, converged


def _grid_points(lower: np.ndarray, upper: np.ndarray,
                 shape: tuple[int, int]) -> np.ndarray:
    ts = np.linspace(lower[0], upper[0], shape[0])
    gs = np.linspace(lower[1], upper[1], shape[1])
    tt, gg = np.meshgrid(ts, gs, indexing="ij")
    return np.column_stack([tt.ravel(), gg.ravel()])


def _multistart(objective, batch_objective, family: ModelFamily, method: str,
                opts: OptimizerOptions) -> EstimateReport:
    lower = np.array([family.theta_domain[0], family.gamma_domain[0]])
    upper = np.array([family.theta_domain[1], family.gamma_domain[1]])
    seeds = _grid_points(lower, upper, opts.grid_shape)
    if batch_objective is not None:
        seed_values = np.asarray(batch_objective(seeds[:, 0], seeds[:, 1]), dtype=float)
    else:
        seed_values = np.array([objective(p) for p in seeds])
    order = np.argsort(-np.where(np.isnan(seed_values), -np.inf, seed_values),
                       kind="stable")
    order = order[: max(1, opts.max_ascents)]

    best = None
    trace: list[tuple[int, float, float, float]] = []
    ascents = 0
    for seed_idx in order:
        if not np.isfinite(seed_values[seed_idx]) and ascents > 0:
            continue
        x, fx, run_trace, converged = _projected_ascent(
            objective, seeds[seed_idx], lower, upper, opts)
        ascents += 1
        trace.extend(run_trace)
        if best is None or fx > best[1]:
            best = (x, fx, converged)
    x, fx, converged = best
    return EstimateReport(
        theta_hat=float(x[0]),
        gamma_hat=float(x[1]),
        objective=float(fx),
        trace=trace,
        method=method,
        converged=converged,
        restarts_used=ascents,
    )


def estimate_nr(graph: ScoreGraph, realization: Realization, family: ModelFamily,
                options: OptimizerOptions | None = None) -> EstimateReport:
    """Maximize the node-based relaxed log-likelihood over the feasible box."""
    opts = options or OptimizerOptions()
    counts = total_in_count_matrix(graph, realization)

    def objective(p):
        return float(nr_node_values(counts, family, p[0], p[1]).sum())

    batch = None
    if family.tensor_batch_fn is not None and family.prior_batch_fn is not None:
        def batch(thetas, gammas):
            return nr_total_batch(counts, family, thetas, gammas)

    return _multistart(objective, batch, family, "nr_centralized", opts)


def estimate_exact(graph: ScoreGraph, realization: Realization, family: ModelFamily,
                   options: OptimizerOptions | None = None) -> EstimateReport:
    """Maximize the exact marginal log-likelihood (small instances only)."""
    opts = options or OptimizerOptions()
    exact = _ExactObjective(graph, realization, family)

    def objective(p):
        return exact(p[0], p[1])

    report = _multistart(objective, None, family, "exact", opts)
    return report
