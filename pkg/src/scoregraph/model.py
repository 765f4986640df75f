"""Parametric probability families for scores and states.

A family bundles the conditional score tensor p[h | l, m](theta) with the
state prior p[l](gamma) and their feasible boxes.  The first conditioning
slot is always the evaluator's state, the second the evaluated node's state:
for edge (i, j) the score law is p[. | state_i, state_j].
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, InfeasibleParams
from .graph import AlphabetSpec
from .util import logsumexp


@dataclass(frozen=True)
class ModelFamily:
    """Value-level record of probability kernels over a finite alphabet.

    ``score_kernel(theta, h, l, m)`` and ``prior_kernel(gamma, l)`` are the
    contract; the optional vectorized fields are performance hooks used by
    the estimators and the network simulator when present.
    """

    alphabet: AlphabetSpec
    score_kernel: Callable[[float, int, int, int], float]
    prior_kernel: Callable[[float, int], float]
    theta_domain: tuple[float, float]
    gamma_domain: tuple[float, float]
    name: str = "custom"
    tensor_fn: Optional[Callable[[float], np.ndarray]] = None
    prior_fn: Optional[Callable[[float], np.ndarray]] = None
    tensor_batch_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    prior_batch_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None


def check_feasible(family: ModelFamily, theta: float, gamma: float) -> None:
    t_lo, t_hi = family.theta_domain
    g_lo, g_hi = family.gamma_domain
    if not (np.isfinite(theta) and t_lo <= theta <= t_hi):
        raise InfeasibleParams(f"theta={theta} outside [{t_lo}, {t_hi}]")
    if not (np.isfinite(gamma) and g_lo <= gamma <= g_hi):
        raise InfeasibleParams(f"gamma={gamma} outside [{g_lo}, {g_hi}]")


def score_tensor(family: ModelFamily, theta: float) -> np.ndarray:
    """(R, C, C) tensor with tensor[h-1, l-1, m-1] = p[h | l, m](theta)."""
    g_lo, _ = family.gamma_domain
    check_feasible(family, theta, g_lo)
    if family.tensor_fn is not None:
        return family.tensor_fn(theta)
    C = family.alphabet.num_states
    R = family.alphabet.num_scores
    out = np.empty((R, C, C))
    for h in range(1, R + 1):
        for l in range(1, C + 1):
            for m in range(1, C + 1):
                out[h - 1, l - 1, m - 1] = family.score_kernel(theta, h, l, m)
    return out


def prior_vector(family: ModelFamily, gamma: float) -> np.ndarray:
    """Length-C vector with vector[l-1] = p[l](gamma)."""
    t_lo, _ = family.theta_domain
    check_feasible(family, t_lo, gamma)
    if family.prior_fn is not None:
        return family.prior_fn(gamma)
    C = family.alphabet.num_states
    return np.array([family.prior_kernel(gamma, l) for l in range(1, C + 1)])


def log_score_tensor(family: ModelFamily, theta: float) -> np.ndarray:
    """Elementwise log of the score tensor; -inf where probability is 0."""
    with np.errstate(divide="ignore"):
        return np.log(score_tensor(family, theta))


def log_prior_vector(family: ModelFamily, gamma: float) -> np.ndarray:
    """Elementwise log of the prior vector; -inf where probability is 0."""
    with np.errstate(divide="ignore"):
        return np.log(prior_vector(family, gamma))


def score_tensor_batch(family: ModelFamily, thetas: np.ndarray) -> np.ndarray:
    """(B, R, C, C) stack of score tensors, one per theta."""
    thetas = np.asarray(thetas, dtype=float)
    for t in thetas:
        check_feasible(family, float(t), family.gamma_domain[0])
    if family.tensor_batch_fn is not None:
        return family.tensor_batch_fn(thetas)
    return np.stack([score_tensor(family, float(t)) for t in thetas])


def prior_vector_batch(family: ModelFamily, gammas: np.ndarray) -> np.ndarray:
    """(B, C) stack of prior vectors, one per gamma."""
    gammas = np.asarray(gammas, dtype=float)
    for g in gammas:
        check_feasible(family, family.theta_domain[0], float(g))
    if family.prior_batch_fn is not None:
        return family.prior_batch_fn(gammas)
    return np.stack([prior_vector(family, float(g)) for g in gammas])


def _absdiff(l: int, m: int) -> float:
    return float(abs(l - m))


_DISTANCES = {"absdiff": _absdiff}

# Operational box for the dispersion parameter: the kernel degenerates as
# theta -> 0, so optimization runs over [1e-3, 10].
_THETA_BOX = (1e-3, 10.0)


def social_ranking_normalizers(num_states: int, num_scores: int, theta: float,
                               distance="absdiff") -> np.ndarray:
    """(C, C) matrix of kernel normalizing constants at the given dispersion."""
    base = _ranking_base(num_states, num_scores, distance)
    return np.exp(-((base / theta) ** 2)).sum(axis=0)


def _distance_matrix(num_states: int, distance) -> np.ndarray:
    if isinstance(distance, str):
        try:
            distance = _DISTANCES[distance]
        except KeyError:
            raise ConfigError(f"unknown distance {distance!r}") from None
    d = np.array([[float(distance(l, m)) for m in range(1, num_states + 1)]
                  for l in range(1, num_states + 1)])
    if (d < 0).any():
        raise ConfigError("semi-distance must be nonnegative")
    if not np.all(np.diag(d) == 0):
        raise ConfigError("semi-distance must vanish on equal states")
    off = ~np.eye(num_states, dtype=bool)
    if num_states > 1 and not np.all(d[off] > 0):
        raise ConfigError("semi-distance must be nonzero on distinct states")
    return d


def _ranking_base(num_states: int, num_scores: int, distance) -> np.ndarray:
    """(R, C, C) array of (r_R - r_h)/r_R - d(l, m)/c_C with r_h = h, c_l = l."""
    C, R = num_states, num_scores
    d = _distance_matrix(C, distance)
    h = np.arange(1, R + 1, dtype=float)
    score_term = (R - h) / R
    return score_term[:, None, None] - d[None, :, :] / C


def social_ranking_family(num_states: int, num_scores: int,
                          distance="absdiff") -> ModelFamily:
    """Squared-exponential ranking kernel with a binomial promotion prior.

    Scores concentrate near the top when the two states are close; the state
    prior is Binomial(C-1, gamma) shifted to 1..C, gamma being the per-step
    promotion probability.
    """
    C, R = num_states, num_scores
    base = _ranking_base(C, R, distance)
    comb = np.array([math.comb(C - 1, k) for k in range(C)], dtype=float)
    ks = np.arange(C, dtype=float)

    def tensor_fn(theta: float) -> np.ndarray:
        # Normalized in log domain: immune to underflow at small theta.
        lw = -((base / theta) ** 2)
        return np.exp(lw - logsumexp(lw, axis=0)[None, :, :])

    def tensor_batch_fn(thetas: np.ndarray) -> np.ndarray:
        lw = -((base[None, :, :, :] / thetas[:, None, None, None]) ** 2)
        shift = lw.max(axis=1, keepdims=True)
        w = np.exp(lw - shift)
        return w / w.sum(axis=1, keepdims=True)

    def prior_fn(gamma: float) -> np.ndarray:
        return comb * gamma ** ks * (1.0 - gamma) ** (C - 1 - ks)

    def prior_batch_fn(gammas: np.ndarray) -> np.ndarray:
        g = gammas[:, None]
        return comb[None, :] * g ** ks[None, :] * (1.0 - g) ** (C - 1 - ks[None, :])

    def score_kernel(theta: float, h: int, l: int, m: int) -> float:
        lw = -((base[:, l - 1, m - 1] / theta) ** 2)
        w = np.exp(lw - lw.max())
        return float(w[h - 1] / w.sum())

    def prior_kernel(gamma: float, l: int) -> float:
        k = l - 1
        return math.comb(C - 1, k) * gamma ** k * (1.0 - gamma) ** (C - 1 - k)

    return ModelFamily(
        alphabet=AlphabetSpec.numeric(C, R),
        score_kernel=score_kernel,
        prior_kernel=prior_kernel,
        theta_domain=_THETA_BOX,
        gamma_domain=(0.0, 1.0),
        name="social_ranking",
        tensor_fn=tensor_fn,
        prior_fn=prior_fn,
        tensor_batch_fn=tensor_batch_fn,
        prior_batch_fn=prior_batch_fn,
    )


_MODEL_CONFIG_KEYS = {"family", "C", "R", "theta", "gamma", "distance"}


def family_from_config(cfg: dict) -> tuple[ModelFamily, Optional[float], Optional[float]]:
    """Build a family from a JSON model config; returns (family, theta, gamma).

    theta/gamma are optional in the config (estimation does not need them)
    and are returned as None when absent.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("model config must be a JSON object")
    unknown = set(cfg) - _MODEL_CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
    for key in ("family", "C", "R"):
        if key not in cfg:
            raise ConfigError(f"model config missing required key {key!r}")
    if cfg["family"] != "social_ranking":
        raise ConfigError(f"unknown family {cfg['family']!r}")
    try:
        family = social_ranking_family(int(cfg["C"]), int(cfg["R"]),
                                       cfg.get("distance", "absdiff"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    theta = float(cfg["theta"]) if "theta" in cfg else None
    gamma = float(cfg["gamma"]) if "gamma" in cfg else None
    return family, theta, gamma
