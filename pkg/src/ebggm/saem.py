"""Stochastic approximation EM for the prior scale tau and edge frequency r.

Each iteration runs the graph chain for a while at the current
hyperparameters, draws a covariance from its conjugate posterior, turns the
pair into sufficient statistics, folds them into a Robbins-Monro average,
and re-maximizes.  The step size stays at 1 for the first plateau of
iterations (pure stochastic EM) and then decays as 1/(k - plateau), which
averages the remaining iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import isfinite

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegenerateStatsError, NonFiniteError, SingularScatterError
from .graphs import Graph, legal_deletions, perfect_sequence
from .hiw import DatasetStats, Hyperparams, PosteriorScorer
from .sampler import (
    ChainState,
    KernelConfig,
    MoveCache,
    edge_weights,
    sample_graph_and_sigma,
)

TRACE_COLUMNS = ("iter", "tau", "r", "s1", "s2", "s3", "accept_rate")


@dataclass(frozen=True)
class SufficientStats:
    """Complete-data statistics: clique-size contrast, precision trace, edges."""

    s1: float
    s2: float
    s3: float

    def as_tuple(self):
        return (self.s1, self.s2, self.s3)


@dataclass(frozen=True)
class SaemConfig:
    n_iter: int = 300      # total iterations (K)
    n_unit: int = 100      # iterations with unit step size (K1)
    m_first: int = 500     # chain steps per iteration while warming up
    m_rest: int = 10       # chain steps per iteration afterwards
    n_warm: int = 5        # iterations that use m_first
    init_tau: float = 1e-3
    init_r: float = 0.5

    def __post_init__(self):
        if self.n_iter < 0 or not 0 <= self.n_unit < max(self.n_iter, 1):
            raise ValueError("need 0 <= n_unit < n_iter")
        if self.m_first < 1 or self.m_rest < 1 or self.n_warm < 0:
            raise ValueError("chain step counts must be positive")
        if not self.init_tau > 0 or not 0.0 < self.init_r < 1.0:
            raise ValueError("init_tau must be positive and init_r in (0, 1)")


def step_size(k, n_unit):
    """Robbins-Monro schedule: 1 through iteration n_unit, then 1/(k - n_unit)."""
    if k < 1:
        raise ValueError(f"iterations are 1-based, got {k}")
    return 1.0 if k <= n_unit else 1.0 / (k - n_unit)


def compute_suff_stats(g: Graph, sigma, seq=None):
    """Sufficient statistics of one (graph, covariance) draw.

    s1 = sum |C|^2 - sum |S|^2 over the perfect sequence, s2 = tr(sigma^-1),
    s3 = number of edges.
    """
    if seq is None:
        seq = perfect_sequence(g)
    s1 = float(sum(len(c) ** 2 for c in seq.cliques)
               - sum(len(s) ** 2 for s in seq.separators))
    lo = np.linalg.cholesky(np.asarray(sigma, dtype=float))
    half = solve_triangular(lo, np.eye(g.p), lower=True)
    s2 = float(np.sum(half * half))
    return SufficientStats(s1=s1, s2=s2, s3=float(g.edge_count))


def sa_update(s: SufficientStats, sample: SufficientStats, gamma):
    """Stochastic approximation move s + gamma * (sample - s), componentwise."""
    return SufficientStats(
        s1=s.s1 + gamma * (sample.s1 - s.s1),
        s2=s.s2 + gamma * (sample.s2 - s.s2),
        s3=s.s3 + gamma * (sample.s3 - s.s3),
    )


def m_step(s: SufficientStats, delta, p, m):
    """Closed-form maximizers given averaged statistics.

    tau = ((delta - 1) p + s1) / s2 and r = s3 / m, with r clamped to
    [1/(10 m), 1 - 1/(10 m)] so the bernoulli prior never degenerates.
    """
    if not s.s2 > 0:
        raise DegenerateStatsError(f"need s2 > 0, got {s.s2}")
    tau = ((delta - 1.0) * p + s.s1) / s.s2
    if not tau > 0:
        raise DegenerateStatsError(f"maximizer tau={tau} is not positive")
    lo = 1.0 / (10.0 * m)
    r = min(max(s.s3 / m, lo), 1.0 - lo)
    return tau, r


def init_graph_backward(stats: DatasetStats, hp: Hyperparams, scorer=None):
    """Greedy backward selection from the complete graph.

    Removes the legal edge that most improves the posterior score until no
    removal improves it; used to initialize the SAEM graph chain.
    """
    if scorer is None:
        scorer = PosteriorScorer(stats, hp)
    g = Graph.complete(stats.p)
    best = scorer.score(g)
    while True:
        candidates = legal_deletions(g)
        if not candidates:
            return g
        scored = [(scorer.score(g.remove_edge(i, j)), i, j) for i, j in candidates]
        top, i, j = max(scored)
        if top <= best:
            return g
        g = g.remove_edge(i, j)
        best = top


@dataclass
class SaemResult:
    tau: float
    r: float
    trace: np.ndarray  # columns TRACE_COLUMNS, one row per iteration
    final_state: ChainState
    init_graph: Graph


def run_saem(stats: DatasetStats, cfg: SaemConfig, hp_base: Hyperparams, rng,
             kernel: KernelConfig | None = None):
    """Fit (tau, r) by stochastic approximation EM.

    hp_base fixes delta and must use the scaled_identity Phi mode.  Under
    the bernoulli graph prior both tau and r are estimated; under the other
    priors r stays at its initial value and only tau moves.  The default
    kernel alternates uniform and data-driven proposals when the empirical
    covariance is invertible and falls back to pure add-delete otherwise.
    """
    if hp_base.phi_mode != "scaled_identity":
        raise ValueError("the EM drives tau, so phi_mode must be scaled_identity")
    if kernel is None:
        try:
            stats.inv_empirical
            kernel = KernelConfig(mode="alternate")
        except SingularScatterError:
            kernel = KernelConfig(mode="add_delete")
    estimate_r = hp_base.graph_prior == "bernoulli"
    p = stats.p
    m = Graph(p).m
    tau, r = cfg.init_tau, cfg.init_r
    hp = replace(hp_base, tau=tau, **({"r": r} if estimate_r else {}))
    scorer = PosteriorScorer(stats, hp)
    g0 = init_graph_backward(stats, hp, scorer)
    state = ChainState(g0, scorer.score(g0))
    moves = MoveCache()
    weights = (edge_weights(stats, kernel)
               if kernel.mode in ("data_driven", "alternate") else None)
    s = SufficientStats(0.0, 0.0, 0.0)
    trace = np.empty((cfg.n_iter, len(TRACE_COLUMNS)))
    for k in range(1, cfg.n_iter + 1):
        n_chain = cfg.m_first if k <= cfg.n_warm else cfg.m_rest
        before = (state.accept_count, state.step_index)
        state, sigma = sample_graph_and_sigma(
            state, stats, hp, n_chain, rng, cfg=kernel,
            scorer=scorer, moves=moves, weights=weights)
        sample = compute_suff_stats(state.graph, sigma)
        s = sa_update(s, sample, step_size(k, cfg.n_unit))
        tau, r_new = m_step(s, hp_base.delta, p, m)
        if estimate_r:
            r = r_new
        if not all(map(isfinite, (tau, r, *s.as_tuple()))):
            raise NonFiniteError(f"estimate left the finite range at iteration {k}")
        accept_rate = (state.accept_count - before[0]) / max(
            state.step_index - before[1], 1)
        trace[k - 1] = (k, tau, r, s.s1, s.s2, s.s3, accept_rate)
        hp = replace(hp_base, tau=tau, **({"r": r} if estimate_r else {}))
        scorer = PosteriorScorer(stats, hp)
        state = ChainState(state.graph, scorer.score(state.graph),
                           state.step_index, state.accept_count)
    return SaemResult(tau=tau, r=r, trace=trace, final_state=state, init_graph=g0)
