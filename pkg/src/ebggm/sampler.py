"""Metropolis-Hastings kernels over the space of decomposable graphs.

Two proposal kernels share the accept/reject skeleton: the uniform
add-delete kernel picks a direction with probability 1/2 and then a legal
move uniformly, while the data-driven kernel biases additions toward edges
with large empirical partial covariance |K_ij| (K the inverse empirical
covariance) and deletions toward small ones.  A third mode alternates the
two kernels deterministically by step parity.  A direction with no legal
move is a null proposal and counts as a rejected step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import exp, log

import numpy as np

from .graphs import Graph, edge_index, legal_additions, legal_deletions, perfect_sequence
from .hiw import DatasetStats, Hyperparams, PosteriorScorer, phi_matrix, sample_hiw

KERNEL_MODES = ("add_delete", "data_driven", "alternate")


@dataclass(frozen=True)
class KernelConfig:
    mode: str = "add_delete"
    weight_floor: float = 1e-12

    def __post_init__(self):
        if self.mode not in KERNEL_MODES:
            raise ValueError(f"mode must be one of {KERNEL_MODES}")
        if not 0.0 < self.weight_floor <= 1.0:
            raise ValueError("weight_floor must lie in (0, 1]")


@dataclass(frozen=True)
class ChainState:
    graph: Graph
    log_score: float
    step_index: int = 0
    accept_count: int = 0


class MoveCache:
    """Memo of legal moves per graph; legality does not depend on the model."""

    def __init__(self):
        self._memo = {}

    def moves(self, g: Graph):
        """(additions, deletions) as tuples of (i, j, edge_index) triples."""
        key = (g.p, g.edges)
        got = self._memo.get(key)
        if got is None:
            seq = perfect_sequence(g)
            adds = tuple((i, j, edge_index(g.p, i, j)) for i, j in legal_additions(g))
            dels = tuple((i, j, edge_index(g.p, i, j)) for i, j in legal_deletions(g, seq))
            got = (adds, dels)
            self._memo[key] = got
        return got


def edge_weights(stats: DatasetStats, cfg: KernelConfig):
    """Clamped |K_ij| per edge slot and its reciprocal for deletions.

    All weights land in [weight_floor, 1/weight_floor]; if every entry hits
    the floor the kernel degrades to uniform selection by construction.
    """
    k_mat = stats.inv_empirical
    p = stats.p
    lo, hi = cfg.weight_floor, 1.0 / cfg.weight_floor
    add_w = []
    for i in range(p):
        for j in range(i + 1, p):
            add_w.append(min(max(abs(float(k_mat[i, j])), lo), hi))
    del_w = [1.0 / w for w in add_w]
    return tuple(add_w), tuple(del_w)


def _null_step(state: ChainState):
    return replace(state, step_index=state.step_index + 1)


def _propose_uniform(g: Graph, moves: MoveCache, do_delete, rng):
    """Uniform move in the chosen direction; returns (proposal, log q-ratio).

    The log proposal ratio is log |moves from g| - log |reverse moves from
    the proposal|; None when the direction has no legal move.
    """
    adds, dels = moves.moves(g)
    cand = dels if do_delete else adds
    if not cand:
        return None
    i, j, k = cand[int(rng.integers(len(cand)))]
    gp = Graph(g.p, g.edges ^ (1 << k))
    padds, pdels = moves.moves(gp)
    reverse = padds if do_delete else pdels
    return gp, (i, j), log(len(cand)) - log(len(reverse))


def _propose_weighted(g: Graph, moves: MoveCache, weights, do_delete, rng):
    """Weighted move using the data-driven edge weights; see _propose_uniform."""
    add_w, del_w = weights
    adds, dels = moves.moves(g)
    cand = dels if do_delete else adds
    if not cand:
        return None
    w_fwd = del_w if do_delete else add_w
    total_fwd = 0.0
    for _, _, k in cand:
        total_fwd += w_fwd[k]
    target = rng.random() * total_fwd
    acc = 0.0
    pick = cand[-1]
    for triple in cand:
        acc += w_fwd[triple[2]]
        if acc >= target:
            pick = triple
            break
    i, j, k = pick
    gp = Graph(g.p, g.edges ^ (1 << k))
    padds, pdels = moves.moves(gp)
    reverse = padds if do_delete else pdels
    w_rev = add_w if do_delete else del_w
    total_rev = 0.0
    for _, _, kk in reverse:
        total_rev += w_rev[kk]
    log_q_fwd = log(w_fwd[k]) - log(total_fwd)
    log_q_rev = log(w_rev[k]) - log(total_rev)
    return gp, (i, j), log_q_rev - log_q_fwd


def _accept(state: ChainState, proposal, scorer: PosteriorScorer, rng):
    gp, _, log_q_ratio = proposal
    log_alpha = scorer.score(gp) - state.log_score + log_q_ratio
    if rng.random() < (1.0 if log_alpha >= 0.0 else exp(log_alpha)):
        return ChainState(gp, scorer.score(gp), state.step_index + 1,
                          state.accept_count + 1)
    return _null_step(state)


def add_delete_step(state: ChainState, stats, hp, rng, *, scorer=None, moves=None):
    """One uniform add-delete Metropolis-Hastings step."""
    if scorer is None:
        scorer = PosteriorScorer(stats, hp)
    if moves is None:
        moves = MoveCache()
    do_delete = rng.random() < 0.5
    proposal = _propose_uniform(state.graph, moves, do_delete, rng)
    if proposal is None:
        return _null_step(state)
    return _accept(state, proposal, scorer, rng)


def data_driven_step(state: ChainState, stats, hp, cfg: KernelConfig, rng, *,
                     scorer=None, moves=None, weights=None):
    """One data-driven Metropolis-Hastings step with |K_ij|-biased proposals."""
    if scorer is None:
        scorer = PosteriorScorer(stats, hp)
    if moves is None:
        moves = MoveCache()
    if weights is None:
        weights = edge_weights(stats, cfg)
    do_delete = rng.random() < 0.5
    proposal = _propose_weighted(state.graph, moves, weights, do_delete, rng)
    if proposal is None:
        return _null_step(state)
    return _accept(state, proposal, scorer, rng)


@dataclass
class ChainLog:
    """Per-step visit record of one chain run."""

    p: int
    steps: np.ndarray
    graph_ids: list
    k_edges: np.ndarray
    log_scores: np.ndarray
    accepted: np.ndarray

    def __len__(self):
        return len(self.graph_ids)

    def running_acceptance(self):
        return np.cumsum(self.accepted) / np.arange(1, len(self.accepted) + 1)

    def acceptance_rate(self):
        return float(np.mean(self.accepted)) if len(self.accepted) else 0.0


def _step_once(state, stats, hp, cfg, rng, scorer, moves, weights):
    mode = cfg.mode
    if mode == "alternate":
        mode = "add_delete" if state.step_index % 2 == 0 else "data_driven"
    if mode == "add_delete":
        return add_delete_step(state, stats, hp, rng, scorer=scorer, moves=moves)
    return data_driven_step(state, stats, hp, cfg, rng,
                            scorer=scorer, moves=moves, weights=weights)


def _needs_weights(cfg: KernelConfig):
    return cfg.mode in ("data_driven", "alternate")


def run_chain(init, n_steps, stats: DatasetStats, hp: Hyperparams,
              cfg: KernelConfig, rng, *, scorer=None, moves=None):
    """Run the configured kernel for n_steps and log every visited state.

    init may be a Graph or a ChainState (the latter resumes step parity and
    acceptance counts).  Returns (final ChainState, ChainLog).
    """
    if scorer is None:
        scorer = PosteriorScorer(stats, hp)
    if moves is None:
        moves = MoveCache()
    if isinstance(init, Graph):
        state = ChainState(init, scorer.score(init))
    else:
        state = init
    weights = edge_weights(stats, cfg) if _needs_weights(cfg) else None
    ids = []
    ks = np.empty(n_steps, dtype=np.int64)
    scores = np.empty(n_steps, dtype=float)
    accepted = np.empty(n_steps, dtype=bool)
    steps = np.empty(n_steps, dtype=np.int64)
    for t in range(n_steps):
        prev_accepts = state.accept_count
        state = _step_once(state, stats, hp, cfg, rng, scorer, moves, weights)
        ids.append(state.graph.edges)
        ks[t] = state.graph.edge_count
        scores[t] = state.log_score
        accepted[t] = state.accept_count > prev_accepts
        steps[t] = state.step_index
    return state, ChainLog(p=stats.p, steps=steps, graph_ids=ids,
                           k_edges=ks, log_scores=scores, accepted=accepted)


def sample_graph_and_sigma(state: ChainState, stats: DatasetStats, hp: Hyperparams,
                           M, rng, cfg: KernelConfig | None = None, *,
                           scorer=None, moves=None, weights=None):
    """Advance the graph chain M steps, then draw a covariance from its
    conjugate posterior on the final graph.

    Returns (new ChainState, sigma).  The drawn sigma follows the
    graph-constrained law with degrees delta + n and scale Phi + scatter.
    """
    if cfg is None:
        cfg = KernelConfig()
    if scorer is None:
        scorer = PosteriorScorer(stats, hp)
    if moves is None:
        moves = MoveCache()
    if weights is None and _needs_weights(cfg):
        weights = edge_weights(stats, cfg)
    for _ in range(M):
        state = _step_once(state, stats, hp, cfg, rng, scorer, moves, weights)
    post_scale = phi_matrix(hp, stats) + stats.scatter
    sigma = sample_hiw(state.graph, hp.delta + stats.n, post_scale, rng)
    return state, sigma
