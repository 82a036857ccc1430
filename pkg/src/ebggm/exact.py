"""Exhaustive reference computations for small vertex counts.

These routines enumerate every decomposable graph and evaluate the model in
closed form, giving ground truth that the Monte Carlo machinery is tested
against: exact posteriors over graphs, the exact profile of the marginal
likelihood over the hyperparameter grid, and total-variation comparisons
between chain visit frequencies and the exact posterior.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .errors import MismatchedModelError, TooLargeError
from .graphs import Graph, n_candidate_edges, perfect_sequence, _adjacency, _earlier_sets_complete, _mcs
from .hiw import DatasetStats, Hyperparams, PosteriorScorer
from .sampler import ChainLog

_ENUM_CAP_P = 8
_POSTERIOR_CAP_P = 6
_MLE_CAP_P = 5


def enumerate_decomposable(p):
    """Yield every decomposable graph on p vertices in ascending ID order."""
    if p > _ENUM_CAP_P:
        raise TooLargeError(f"enumeration capped at p={_ENUM_CAP_P}, got {p}")
    m = n_candidate_edges(p)
    for edges in range(1 << m):
        adj = _adjacency(p, edges)
        _, earlier = _mcs(p, adj)
        if _earlier_sets_complete(adj, earlier):
            yield Graph(p, edges)


@dataclass(frozen=True)
class PosteriorTable:
    """Exact graph posterior, sorted by decreasing probability."""

    p: int
    hp: Hyperparams
    graph_ids: tuple
    probs: np.ndarray
    log_scores: np.ndarray
    log_norm: float

    def prob(self, g):
        gid = g.edges if isinstance(g, Graph) else int(g)
        try:
            return float(self.probs[self.graph_ids.index(gid)])
        except ValueError:
            return 0.0

    def lookup(self):
        return {gid: float(pr) for gid, pr in zip(self.graph_ids, self.probs)}

    def top(self, k):
        return [(Graph(self.p, gid), float(pr))
                for gid, pr in zip(self.graph_ids[:k], self.probs[:k])]


def exact_posterior(stats: DatasetStats, hp: Hyperparams):
    """Exact posterior over all decomposable graphs; p is capped at 6."""
    p = stats.p
    if p > _POSTERIOR_CAP_P:
        raise TooLargeError(f"exact posterior capped at p={_POSTERIOR_CAP_P}, got {p}")
    scorer = PosteriorScorer(stats, hp)
    ids = []
    scores = []
    for g in enumerate_decomposable(p):
        ids.append(g.edges)
        scores.append(scorer.score(g))
    scores = np.asarray(scores)
    log_norm = float(logsumexp(scores))
    probs = np.exp(scores - log_norm)
    order = np.argsort(-probs, kind="stable")
    return PosteriorTable(
        p=p,
        hp=hp,
        graph_ids=tuple(int(ids[i]) for i in order),
        probs=probs[order],
        log_scores=scores[order],
        log_norm=log_norm,
    )


@dataclass(frozen=True)
class MarginalSurface:
    """Gridded log marginal likelihood profile over (tau, r)."""

    tau_grid: np.ndarray
    r_grid: np.ndarray
    log_lik: np.ndarray  # shape (len(tau_grid), len(r_grid)), 2 pi factor dropped
    tau_hat: float
    r_hat: float
    argmax: tuple


def default_tau_grid():
    return np.geomspace(1e-3, 1e2, 60)


def default_r_grid():
    return np.linspace(0.02, 0.98, 49)


def exact_marginal_mle(stats: DatasetStats, delta, tau_grid=None, r_grid=None):
    """Exact grid maximizer of the marginal likelihood summed over graphs.

    Uses the bernoulli edge prior in its raw product form; the sum runs over
    every decomposable graph, so p is capped at 5.
    """
    p = stats.p
    if p > _MLE_CAP_P:
        raise TooLargeError(f"exact marginal MLE capped at p={_MLE_CAP_P}, got {p}")
    tau_grid = default_tau_grid() if tau_grid is None else np.asarray(tau_grid, dtype=float)
    r_grid = default_r_grid() if r_grid is None else np.asarray(r_grid, dtype=float)
    graphs = [(g, perfect_sequence(g)) for g in enumerate_decomposable(p)]
    k_edges = np.array([g.edge_count for g, _ in graphs])
    m = n_candidate_edges(p)
    hp0 = Hyperparams(delta=delta, tau=1.0, graph_prior="bernoulli", r=0.5)
    surface = np.empty((len(tau_grid), len(r_grid)))
    log_r = np.log(r_grid)
    log_1mr = np.log1p(-r_grid)
    for a, tau in enumerate(tau_grid):
        scorer = PosteriorScorer(stats, replace(hp0, tau=float(tau)))
        liks = np.array([scorer.log_lik(g, seq) for g, seq in graphs])
        # logsumexp over graphs of lik + k log r + (m - k) log(1 - r)
        stacked = liks[:, None] + np.outer(k_edges, log_r) + np.outer(m - k_edges, log_1mr)
        surface[a] = logsumexp(stacked, axis=0)
    a_best, b_best = np.unravel_index(np.argmax(surface), surface.shape)
    return MarginalSurface(
        tau_grid=tau_grid,
        r_grid=r_grid,
        log_lik=surface,
        tau_hat=float(tau_grid[a_best]),
        r_hat=float(r_grid[b_best]),
        argmax=(int(a_best), int(b_best)),
    )


@dataclass(frozen=True)
class ExactComparison:
    """Chain frequencies against the exact posterior."""

    tv_distance: float
    rel_errors: dict
    n_steps: int


def chain_vs_exact(log: ChainLog, table: PosteriorTable, threshold=0.001):
    """Total variation and per-graph relative errors of chain frequencies.

    rel_errors covers graphs with exact probability >= threshold.  Raises
    MismatchedModelError when the log visits a graph the table does not
    contain (wrong p or a non-decomposable state).
    """
    if log.p != table.p:
        raise MismatchedModelError(f"chain has p={log.p}, table has p={table.p}")
    n = len(log)
    if n == 0:
        raise ValueError("empty chain log")
    counts = Counter(log.graph_ids)
    exact = table.lookup()
    tv = 0.0
    for gid, pr in exact.items():
        tv += abs(counts.get(gid, 0) / n - pr)
    extra = [gid for gid in counts if gid not in exact]
    if extra:
        raise MismatchedModelError(
            f"chain visited graph {extra[0]:x} absent from the exact table")
    rel = {}
    for gid, pr in exact.items():
        if pr >= threshold:
            rel[gid] = abs(counts.get(gid, 0) / n - pr) / pr
    return ExactComparison(tv_distance=0.5 * tv, rel_errors=rel, n_steps=n)
