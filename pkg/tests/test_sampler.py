"""Tests for the Metropolis-Hastings graph kernels and chain runner."""

import math

import numpy as np
import pytest

from ebggm import (
    ChainLog,
    ChainState,
    DatasetStats,
    Graph,
    Hyperparams,
    KernelConfig,
    MoveCache,
    PosteriorScorer,
    add_delete_step,
    data_driven_step,
    edge_index,
    edge_weights,
    enumerate_decomposable,
    legal_additions,
    legal_deletions,
    run_chain,
    sample_graph_and_sigma,
    simulate_dataset,
)
from ebggm.sampler import _propose_uniform, _propose_weighted


class ScriptedRng:
    """Deterministic stand-in for a Generator: pops pre-set draws."""

    def __init__(self, randoms=(), ints=()):
        self._randoms = list(randoms)
        self._ints = list(ints)

    def random(self):
        return self._randoms.pop(0)

    def integers(self, n):
        value = self._ints.pop(0)
        assert 0 <= value < n
        return value


def make_stats(p, n=40, seed=0):
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n, p)) @ (np.eye(p) + 0.3 * rng.standard_normal((p, p)))
    return DatasetStats.from_data(raw, center=True, standardize=True)


def test_kernel_config_validation():
    KernelConfig(mode="alternate", weight_floor=1.0)
    with pytest.raises(ValueError):
        KernelConfig(mode="swap")
    with pytest.raises(ValueError):
        KernelConfig(weight_floor=0.0)
    with pytest.raises(ValueError):
        KernelConfig(weight_floor=1.5)


def test_uniform_proposal_ratio_from_empty():
    # Empty p=3 graph: 3 legal additions; any single-edge graph has exactly
    # one legal deletion, so the log proposal ratio is log 3 - log 1.
    g = Graph(3, 0)
    moves = MoveCache()
    rng = ScriptedRng(ints=[1])
    gp, (i, j), log_q = _propose_uniform(g, moves, False, rng)
    assert gp.edge_count == 1
    assert gp.has_edge(i, j)
    assert log_q == pytest.approx(math.log(3.0), abs=1e-15)


def test_uniform_proposal_none_without_moves():
    moves = MoveCache()
    assert _propose_uniform(Graph(3, 0), moves, True, ScriptedRng()) is None
    assert _propose_uniform(Graph.complete(3), moves, False, ScriptedRng()) is None


def test_null_step_counts_as_rejection():
    stats = make_stats(3)
    hp = Hyperparams(delta=1.0, tau=1.0)
    scorer = PosteriorScorer(stats, hp)
    g = Graph(3, 0)
    state = ChainState(g, scorer.score(g))
    # random() = 0.4 forces the delete direction, which is empty here.
    out = add_delete_step(state, stats, hp, ScriptedRng(randoms=[0.4]),
                          scorer=scorer)
    assert out.graph == g
    assert out.step_index == state.step_index + 1
    assert out.accept_count == state.accept_count

    full = Graph.complete(3)
    state = ChainState(full, scorer.score(full))
    out = add_delete_step(state, stats, hp, ScriptedRng(randoms=[0.6]),
                          scorer=scorer)
    assert out.graph == full
    assert out.accept_count == state.accept_count


def test_move_cache_matches_fresh_computation():
    rng = np.random.default_rng(3)
    cache = MoveCache()
    for p in (3, 4, 6):
        for _ in range(20):
            edges = int.from_bytes(rng.bytes(8), "little") & ((1 << (p * (p - 1) // 2)) - 1)
            g = Graph(p, edges)
            try:
                adds, dels = cache.moves(g)
            except Exception:
                continue
            want_adds = tuple((i, j, edge_index(p, i, j)) for i, j in legal_additions(g))
            want_dels = tuple((i, j, edge_index(p, i, j)) for i, j in legal_deletions(g))
            assert adds == want_adds
            assert sorted(dels) == sorted(want_dels)
            # Second lookup hits the memo and returns the identical object.
            assert cache.moves(g) is cache.moves(Graph(p, edges))


def test_edge_weights_values_and_clamping():
    stats = make_stats(4, n=60, seed=5)
    cfg = KernelConfig(mode="data_driven", weight_floor=1e-12)
    add_w, del_w = edge_weights(stats, cfg)
    k_mat = stats.inv_empirical
    slot = 0
    for i in range(4):
        for j in range(i + 1, 4):
            assert add_w[slot] == pytest.approx(abs(k_mat[i, j]), rel=1e-15)
            assert del_w[slot] == pytest.approx(1.0 / add_w[slot], rel=1e-15)
            slot += 1

    # The clamp applies to add weights; deletions are exact reciprocals, so
    # they may sit one rounding step outside the nominal interval.
    tight = KernelConfig(mode="data_driven", weight_floor=0.9)
    add_w, del_w = edge_weights(stats, tight)
    for w in add_w:
        assert 0.9 <= w <= 1.0 / 0.9
    for w in del_w:
        assert 0.9 * (1 - 1e-12) <= w <= (1.0 / 0.9) * (1 + 1e-12)


def exact_transition_matrix(graphs, scorer, moves, kernel, weights):
    """Exact one-step transition matrix of the kernel over all p=3 graphs."""
    index = {g.edges: t for t, g in enumerate(graphs)}
    n = len(graphs)
    mat = np.zeros((n, n))
    for t, g in enumerate(graphs):
        adds, dels = moves.moves(g)
        for do_delete, cand in ((False, adds), (True, dels)):
            if not cand:
                continue
            if kernel == "uniform":
                sel = [1.0 / len(cand)] * len(cand)
            else:
                add_w, del_w = weights
                w_fwd = del_w if do_delete else add_w
                total = sum(w_fwd[k] for _, _, k in cand)
                sel = [w_fwd[k] / total for _, _, k in cand]
            for (i, j, k), q_sel in zip(cand, sel):
                gp = Graph(g.p, g.edges ^ (1 << k))
                padds, pdels = moves.moves(gp)
                reverse = padds if do_delete else pdels
                if kernel == "uniform":
                    log_q = math.log(len(cand)) - math.log(len(reverse))
                else:
                    add_w, del_w = weights
                    w_fwd = del_w if do_delete else add_w
                    w_rev = add_w if do_delete else del_w
                    total_fwd = sum(w_fwd[kk] for _, _, kk in cand)
                    total_rev = sum(w_rev[kk] for _, _, kk in reverse)
                    log_q = (math.log(w_rev[k]) - math.log(total_rev)
                             - math.log(w_fwd[k]) + math.log(total_fwd))
                log_alpha = scorer.score(gp) - scorer.score(g) + log_q
                alpha = min(1.0, math.exp(min(log_alpha, 0.0)) if log_alpha < 0 else 1.0)
                mat[t, index[gp.edges]] += 0.5 * q_sel * alpha
        mat[t, t] = 1.0 - mat[t].sum() + mat[t, t]
    return mat


@pytest.mark.parametrize("kernel", ["uniform", "weighted"])
def test_detailed_balance_exact_p3(kernel):
    stats = make_stats(3, n=50, seed=11)
    hp = Hyperparams(delta=1.0, tau=0.8, graph_prior="bernoulli", r=0.4)
    scorer = PosteriorScorer(stats, hp)
    graphs = list(enumerate_decomposable(3))
    assert len(graphs) == 8
    scores = np.array([scorer.score(g) for g in graphs])
    probs = np.exp(scores - scores.max())
    probs /= probs.sum()
    moves = MoveCache()
    weights = edge_weights(stats, KernelConfig(mode="data_driven"))
    mat = exact_transition_matrix(graphs, scorer, moves, kernel, weights)
    assert np.allclose(mat.sum(axis=1), 1.0, atol=1e-14)
    flux = probs[:, None] * mat
    assert np.max(np.abs(flux - flux.T)) < 1e-15
    # Stationarity follows from detailed balance but check it directly too.
    assert np.max(np.abs(probs @ mat - probs)) < 1e-15


def test_weighted_proposal_log_ratio_matches_hand_computation():
    stats = make_stats(3, n=50, seed=2)
    cfg = KernelConfig(mode="data_driven")
    weights = edge_weights(stats, cfg)
    add_w, del_w = weights
    g = Graph(3, 0)
    moves = MoveCache()
    # Force the first candidate whose cumulative weight exceeds the target.
    rng = ScriptedRng(randoms=[0.0])
    gp, (i, j), log_q = _propose_weighted(g, moves, weights, False, rng)
    k = edge_index(3, i, j)
    assert k == 0
    total_fwd = sum(add_w)
    # From a one-edge graph the only deletion is that edge.
    want = (math.log(del_w[k]) - math.log(del_w[k])
            - math.log(add_w[k]) + math.log(total_fwd))
    assert log_q == pytest.approx(want, rel=1e-14)


def test_run_chain_is_deterministic():
    stats = make_stats(4, n=45, seed=7)
    hp = Hyperparams(delta=1.0, tau=0.5)
    cfg = KernelConfig(mode="alternate")
    out = []
    for _ in range(2):
        rng = np.random.default_rng(12345)
        state, log = run_chain(Graph(4, 0), 400, stats, hp, cfg, rng)
        out.append((state, log))
    (s1, l1), (s2, l2) = out
    assert s1 == s2
    assert l1.graph_ids == l2.graph_ids
    assert np.array_equal(l1.accepted, l2.accepted)
    assert np.array_equal(l1.k_edges, l2.k_edges)
    assert np.allclose(l1.log_scores, l2.log_scores, rtol=0, atol=0)


def test_run_chain_log_shapes_and_consistency():
    stats = make_stats(3, n=30, seed=9)
    hp = Hyperparams(delta=1.0, tau=1.0)
    rng = np.random.default_rng(0)
    state, log = run_chain(Graph(3, 0), 250, stats, hp, KernelConfig(), rng)
    assert len(log) == 250
    assert log.p == 3
    assert state.step_index == 250
    assert log.steps[-1] == 250
    assert log.graph_ids[-1] == state.graph.edges
    assert state.accept_count == int(log.accepted.sum())
    # Every logged state change coincides with an accepted step.
    ids = np.array(log.graph_ids)
    changed = ids[1:] != ids[:-1]
    assert np.all(log.accepted[1:][changed])
    scorer = PosteriorScorer(stats, hp)
    for t in (0, 100, 249):
        assert log.log_scores[t] == pytest.approx(
            scorer.score(Graph(3, log.graph_ids[t])), rel=1e-12)


def test_run_chain_resumes_from_state():
    stats = make_stats(3, n=30, seed=4)
    hp = Hyperparams(delta=1.0, tau=1.0)
    cfg = KernelConfig()
    scorer = PosteriorScorer(stats, hp)
    rng = np.random.default_rng(5)
    state, _ = run_chain(Graph(3, 0), 50, stats, hp, cfg, rng, scorer=scorer)
    resumed, log = run_chain(state, 25, stats, hp, cfg, rng, scorer=scorer)
    assert resumed.step_index == 75
    assert len(log) == 25
    assert resumed.accept_count >= state.accept_count


def test_chain_log_acceptance_helpers():
    log = ChainLog(p=2, steps=np.arange(1, 5), graph_ids=[0, 1, 1, 0],
                   k_edges=np.array([0, 1, 1, 0]),
                   log_scores=np.zeros(4),
                   accepted=np.array([True, False, True, True]))
    assert np.allclose(log.running_acceptance(), [1.0, 0.5, 2.0 / 3.0, 0.75])
    assert log.acceptance_rate() == pytest.approx(0.75)
    empty = ChainLog(p=2, steps=np.empty(0, dtype=int), graph_ids=[],
                     k_edges=np.empty(0, dtype=int), log_scores=np.empty(0),
                     accepted=np.empty(0, dtype=bool))
    assert empty.acceptance_rate() == 0.0


def test_alternate_kernel_switches_by_parity(monkeypatch):
    import ebggm.sampler as sampler_mod

    calls = []
    orig_add = sampler_mod.add_delete_step
    orig_dd = sampler_mod.data_driven_step

    def spy_add(state, *args, **kwargs):
        calls.append(("add_delete", state.step_index))
        return orig_add(state, *args, **kwargs)

    def spy_dd(state, *args, **kwargs):
        calls.append(("data_driven", state.step_index))
        return orig_dd(state, *args, **kwargs)

    monkeypatch.setattr(sampler_mod, "add_delete_step", spy_add)
    monkeypatch.setattr(sampler_mod, "data_driven_step", spy_dd)

    stats = make_stats(3, n=30, seed=1)
    hp = Hyperparams(delta=1.0, tau=1.0)
    cfg = KernelConfig(mode="alternate")
    rng = np.random.default_rng(2)
    run_chain(Graph(3, 0), 6, stats, hp, cfg, rng)
    assert len(calls) == 6
    for mode, step_index in calls:
        want = "add_delete" if step_index % 2 == 0 else "data_driven"
        assert mode == want

    # Resuming from an odd step index starts with the data-driven kernel.
    calls.clear()
    scorer = PosteriorScorer(stats, hp)
    g = Graph(3, 0)
    state = ChainState(g, scorer.score(g), step_index=1)
    run_chain(state, 2, stats, hp, cfg, np.random.default_rng(3))
    assert [mode for mode, _ in calls] == ["data_driven", "add_delete"]


def test_data_driven_step_runs_and_moves():
    stats = make_stats(4, n=60, seed=8)
    hp = Hyperparams(delta=1.0, tau=0.5)
    cfg = KernelConfig(mode="data_driven")
    scorer = PosteriorScorer(stats, hp)
    g = Graph(4, 0)
    state = ChainState(g, scorer.score(g))
    rng = np.random.default_rng(17)
    seen = {g.edges}
    for _ in range(200):
        state = data_driven_step(state, stats, hp, cfg, rng, scorer=scorer)
        seen.add(state.graph.edges)
    assert state.step_index == 200
    assert len(seen) > 1


def test_chain_matches_exact_posterior_smoke():
    from ebggm import exact_posterior

    stats = make_stats(3, n=40, seed=21)
    hp = Hyperparams(delta=1.0, tau=1.0, graph_prior="bernoulli", r=0.5)
    table = exact_posterior(stats, hp)
    rng = np.random.default_rng(100)
    _, log = run_chain(Graph(3, 0), 40000, stats, hp, KernelConfig(), rng)
    counts = {}
    for gid in log.graph_ids[2000:]:
        counts[gid] = counts.get(gid, 0) + 1
    total = sum(counts.values())
    tv = 0.0
    for gid, prob in zip(table.graph_ids, table.probs):
        tv += abs(counts.get(gid, 0) / total - prob)
    assert 0.5 * tv < 0.03


def test_sample_graph_and_sigma_advances_and_respects_graph():
    stats = make_stats(4, n=80, seed=30)
    hp = Hyperparams(delta=1.0, tau=1.0)
    scorer = PosteriorScorer(stats, hp)
    g = Graph.from_edge_list(4, [(0, 1), (1, 2)])
    state = ChainState(g, scorer.score(g))
    rng = np.random.default_rng(41)
    new_state, sigma = sample_graph_and_sigma(state, stats, hp, 30, rng,
                                              scorer=scorer)
    assert new_state.step_index == 30
    assert sigma.shape == (4, 4)
    assert np.allclose(sigma, sigma.T)
    assert np.all(np.linalg.eigvalsh(sigma) > 0)
    # Zero M leaves the graph alone; the draw obeys that graph's zeros.
    rng = np.random.default_rng(42)
    same_state, sigma = sample_graph_and_sigma(state, stats, hp, 0, rng,
                                               scorer=scorer)
    assert same_state.graph == g
    prec = np.linalg.inv(sigma)
    scale = np.max(np.abs(prec))
    for i in range(4):
        for j in range(i + 1, 4):
            if not g.has_edge(i, j):
                assert abs(prec[i, j]) / scale < 1e-8


def test_sample_graph_and_sigma_deterministic():
    stats = make_stats(3, n=50, seed=6)
    hp = Hyperparams(delta=2.0, tau=0.7)
    scorer = PosteriorScorer(stats, hp)
    g = Graph(3, 0)
    draws = []
    for _ in range(2):
        rng = np.random.default_rng(77)
        state = ChainState(g, scorer.score(g))
        state, sigma = sample_graph_and_sigma(state, stats, hp, 20, rng,
                                              scorer=scorer)
        draws.append((state.graph.edges, sigma))
    assert draws[0][0] == draws[1][0]
    assert np.array_equal(draws[0][1], draws[1][1])


def test_simulated_dataset_round_trip_through_kernel():
    # End-to-end smoke: simulate from a known graph, run the alternate
    # kernel, and confirm the chain concentrates on decent-scoring graphs.
    g = Graph.from_edge_list(4, [(0, 1), (1, 2), (2, 3)])
    rng = np.random.default_rng(55)
    raw, _ = simulate_dataset(g, tau=1.0, delta=3.0, n=200, rng=rng)
    stats = DatasetStats.from_data(raw, center=True, standardize=True)
    hp = Hyperparams(delta=1.0, tau=0.5)
    state, log = run_chain(Graph(4, 0), 5000, stats, hp,
                           KernelConfig(mode="alternate"),
                           np.random.default_rng(56))
    scorer = PosteriorScorer(stats, hp)
    assert log.acceptance_rate() > 0.01
    assert state.log_score >= scorer.score(Graph(4, 0))
