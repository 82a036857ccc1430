"""Hyper-inverse-Wishart math for decomposable Gaussian models.

The covariance prior places an inverse-Wishart law on every clique marginal:
for a clique C the density of Sigma_C is proportional to
det(Sigma_C)^-((delta + 2|C|)/2) * exp(-tr(Sigma_C^-1 Phi_C)/2), which is the
standard inverse Wishart with degrees of freedom delta + |C| - 1 and scale
Phi_C.  The graph-level normalizing constant is the product of clique
constants divided by the product of separator constants, and conjugacy gives
the closed-form marginal likelihood implemented below.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import lgamma, log, pi

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    DomainError,
    NotSPDError,
    SingularScatterError,
    ZeroVarianceError,
)
from .graphs import Graph, perfect_sequence

LOG_2PI = log(2.0 * pi)

PHI_MODES = ("scaled_identity", "empirical_gprior")
GRAPH_PRIORS = ("bernoulli", "beta_binomial", "uniform")


@dataclass(frozen=True)
class Hyperparams:
    """Fixed hyperparameters of the graph-and-covariance model.

    tau only matters in scaled_identity mode (Phi = tau * I); r only matters
    under the bernoulli edge prior.
    """

    delta: float = 1.0
    phi_mode: str = "scaled_identity"
    tau: float = 1.0
    graph_prior: str = "bernoulli"
    r: float = 0.5

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.phi_mode not in PHI_MODES:
            raise ValueError(f"phi_mode must be one of {PHI_MODES}")
        if self.graph_prior not in GRAPH_PRIORS:
            raise ValueError(f"graph_prior must be one of {GRAPH_PRIORS}")
        if self.phi_mode == "scaled_identity" and not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.graph_prior == "bernoulli" and not 0.0 < self.r < 1.0:
            raise ValueError(f"r must lie in (0, 1), got {self.r}")


@dataclass(frozen=True, eq=False)
class DatasetStats:
    """Processed data rows plus the scatter matrix sum_i y_i y_i'."""

    data: np.ndarray
    scatter: np.ndarray

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def p(self):
        return self.data.shape[1]

    @cached_property
    def inv_empirical(self):
        """Inverse of the empirical covariance scatter/n.

        Raises SingularScatterError when scatter is not positive definite
        (for instance when n < p or columns are collinear).
        """
        try:
            lo = np.linalg.cholesky(self.scatter / self.n)
        except np.linalg.LinAlgError as exc:
            raise SingularScatterError(
                f"scatter matrix is singular (n={self.n}, p={self.p})"
            ) from exc
        eye = np.eye(self.p)
        half = solve_triangular(lo, eye, lower=True)
        return half.T @ half

    @classmethod
    def from_data(cls, raw, center=True, standardize=True):
        """Build stats from an (n, p) array, optionally centering and scaling.

        Standardization divides by the sample standard deviation with the
        n-1 denominator and requires n >= 2; a constant column raises
        ZeroVarianceError.
        """
        y = np.asarray(raw, dtype=float)
        if y.ndim != 2 or y.shape[0] < 1 or y.shape[1] < 1:
            raise ValueError(f"need a 2-d data array, got shape {y.shape}")
        if not np.all(np.isfinite(y)):
            raise ValueError("data contains non-finite values")
        if standardize and y.shape[0] < 2:
            raise ValueError("standardization needs at least 2 rows")
        if center:
            y = y - y.mean(axis=0)
        if standardize:
            sd = y.std(axis=0, ddof=1)
            bad = np.flatnonzero(sd == 0.0)
            if bad.size:
                raise ZeroVarianceError(f"column {bad[0]} has zero variance")
            y = y / sd
        return cls(data=y, scatter=y.T @ y)


def phi_matrix(hp: Hyperparams, stats: DatasetStats | None = None, p: int | None = None):
    """Materialize the prior scale matrix Phi for the given mode."""
    if hp.phi_mode == "scaled_identity":
        if p is None:
            if stats is None:
                raise ValueError("need stats or p to size Phi")
            p = stats.p
        return hp.tau * np.eye(p)
    if stats is None:
        raise ValueError("empirical_gprior mode needs dataset stats")
    return stats.scatter / stats.n


def log_multivariate_gamma(v, a):
    """log Gamma_v(a) = v(v-1)/4 log pi + sum_{j=1..v} log Gamma(a + (1-j)/2)."""
    if v < 0:
        raise DomainError(f"dimension must be nonnegative, got {v}")
    if v == 0:
        return 0.0
    if not a > (v - 1) / 2.0:
        raise DomainError(f"need a > (v-1)/2, got a={a}, v={v}")
    out = v * (v - 1) / 4.0 * log(pi)
    for j in range(1, v + 1):
        out += lgamma(a + (1 - j) / 2.0)
    return out


def _chol_logdet(mat):
    try:
        lo = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError("matrix is not symmetric positive definite") from exc
    return 2.0 * float(np.sum(np.log(np.diag(lo))))


def log_iw_constant(phi_block, delta):
    """Log normalizing constant of the clique-marginal inverse Wishart.

    For a q x q scale block this is
    ((q + delta - 1)/2) log det(phi/2) - log Gamma_q((q + delta - 1)/2).
    A 0 x 0 block contributes 0.
    """
    phi_block = np.asarray(phi_block, dtype=float)
    q = phi_block.shape[0]
    if q == 0:
        return 0.0
    if phi_block.shape != (q, q) or not np.allclose(phi_block, phi_block.T):
        raise NotSPDError("scale block must be square and symmetric")
    a = (q + delta - 1) / 2.0
    return a * (_chol_logdet(phi_block) - q * log(2.0)) - log_multivariate_gamma(q, a)


def log_hiw_constant(g: Graph, delta, phi, seq=None):
    """Log normalizing constant of the graph-wide covariance prior.

    Product of clique constants over product of separator constants, on the
    log scale.  Invariant to the choice of perfect clique order.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (g.p, g.p):
        raise ValueError(f"Phi must be {g.p} x {g.p}, got {phi.shape}")
    if seq is None:
        seq = perfect_sequence(g)
    out = 0.0
    for c in seq.cliques:
        idx = sorted(c)
        out += log_iw_constant(phi[np.ix_(idx, idx)], delta)
    for s in seq.separators:
        if not s:
            continue
        idx = sorted(s)
        out -= log_iw_constant(phi[np.ix_(idx, idx)], delta)
    return out


def log_marginal_likelihood(g: Graph, stats: DatasetStats, hp: Hyperparams, seq=None):
    """Log marginal density of the data given the graph, covariance integrated out.

    Equals log h(delta, Phi) - log h(delta + n, Phi + scatter) - (n p / 2) log 2 pi,
    where h is the graph-wide prior normalizing constant.  Zero when n = 0.
    """
    if seq is None:
        seq = perfect_sequence(g)
    phi = phi_matrix(hp, stats)
    left = log_hiw_constant(g, hp.delta, phi, seq)
    right = log_hiw_constant(g, hp.delta + stats.n, phi + stats.scatter, seq)
    return left - right - stats.n * g.p / 2.0 * LOG_2PI


def log_graph_prior(g: Graph, hp: Hyperparams):
    """Log prior mass of the graph, up to a constant not depending on it.

    bernoulli: k log r + (m - k) log(1 - r) with k the edge count, as a raw
    product over candidate edges (no renormalization over the decomposable
    family, matching the estimation target of the stochastic EM driver).
    beta_binomial: -log C(m, k).  uniform: 0.
    """
    k = g.edge_count
    m = g.m
    if hp.graph_prior == "bernoulli":
        return k * log(hp.r) + (m - k) * log(1.0 - hp.r)
    if hp.graph_prior == "beta_binomial":
        return -(lgamma(m + 1) - lgamma(k + 1) - lgamma(m - k + 1))
    return 0.0


def log_posterior_score(g: Graph, stats: DatasetStats, hp: Hyperparams, seq=None):
    """Unnormalized log posterior of the graph; the 2 pi factor is dropped.

    score = log h(delta, Phi) - log h(delta + n, Phi + scatter) + log prior(g).
    """
    if seq is None:
        seq = perfect_sequence(g)
    phi = phi_matrix(hp, stats)
    left = log_hiw_constant(g, hp.delta, phi, seq)
    right = log_hiw_constant(g, hp.delta + stats.n, phi + stats.scatter, seq)
    return left - right + log_graph_prior(g, hp)


class PosteriorScorer:
    """Cached posterior scorer bound to one (stats, hyperparams) pair.

    Clique and separator contributions depend only on the vertex subset, so
    they are memoized per subset bitmask; full scores are memoized per graph.
    Construction fails fast with NotSPDError when Phi + scatter is not SPD.
    """

    def __init__(self, stats: DatasetStats, hp: Hyperparams):
        self.stats = stats
        self.hp = hp
        self.p = stats.p
        self._phi = phi_matrix(hp, stats)
        self._post = self._phi + stats.scatter
        _chol_logdet(self._phi)
        _chol_logdet(self._post)
        d, n = hp.delta, stats.n
        self._a_pri = [(q + d - 1) / 2.0 for q in range(self.p + 1)]
        self._a_post = [(q + d + n - 1) / 2.0 for q in range(self.p + 1)]
        self._lg_pri = [log_multivariate_gamma(q, self._a_pri[q]) if q else 0.0
                        for q in range(self.p + 1)]
        self._lg_post = [log_multivariate_gamma(q, self._a_post[q]) if q else 0.0
                         for q in range(self.p + 1)]
        self._scaled = hp.phi_mode == "scaled_identity"
        self._log_tau_half = log(hp.tau / 2.0) if self._scaled else 0.0
        self._terms = {}
        self._liks = {}
        self._priors = {}

    def _term(self, mask):
        t = self._terms.get(mask)
        if t is not None:
            return t
        idx = []
        mm = mask
        while mm:
            b = mm & -mm
            idx.append(b.bit_length() - 1)
            mm ^= b
        q = len(idx)
        if self._scaled:
            pri = self._a_pri[q] * q * self._log_tau_half - self._lg_pri[q]
        else:
            sub = self._phi[np.ix_(idx, idx)]
            pri = self._a_pri[q] * (_chol_logdet(sub) - q * log(2.0)) - self._lg_pri[q]
        sub = self._post[np.ix_(idx, idx)]
        post = self._a_post[q] * (_chol_logdet(sub) - q * log(2.0)) - self._lg_post[q]
        t = pri - post
        self._terms[mask] = t
        return t

    def log_lik(self, g: Graph, seq=None):
        """log h(delta, Phi) - log h(delta + n, Phi + scatter) for this graph."""
        val = self._liks.get(g.edges)
        if val is not None:
            return val
        if seq is None:
            seq = perfect_sequence(g)
        val = 0.0
        for cm in seq.clique_masks:
            val += self._term(cm)
        for sm in seq.separator_masks:
            if sm:
                val -= self._term(sm)
        self._liks[g.edges] = val
        return val

    def _log_prior_k(self, g: Graph):
        k = g.edge_count
        val = self._priors.get(k)
        if val is None:
            val = log_graph_prior(g, self.hp)
            self._priors[k] = val
        return val

    def score(self, g: Graph, seq=None):
        """Unnormalized log posterior of the graph (2 pi factor dropped)."""
        return self.log_lik(g, seq) + self._log_prior_k(g)

    def log_marginal(self, g: Graph, seq=None):
        return self.log_lik(g, seq) - self.stats.n * self.p / 2.0 * LOG_2PI


def sample_invwishart(df, scale, rng):
    """Draw from the inverse Wishart via the Bartlett decomposition.

    scipy-style parametrization: density proportional to
    det(S)^-((df + q + 1)/2) exp(-tr(S^-1 scale)/2); needs df > q - 1.
    """
    scale = np.asarray(scale, dtype=float)
    q = scale.shape[0]
    if not df > q - 1:
        raise DomainError(f"need df > q - 1, got df={df}, q={q}")
    try:
        lo = np.linalg.cholesky(scale)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError("scale matrix is not SPD") from exc
    bart = np.zeros((q, q))
    for i in range(q):
        bart[i, i] = np.sqrt(rng.chisquare(df - i))
        for j in range(i):
            bart[i, j] = rng.standard_normal()
    half = solve_triangular(bart, lo.T, lower=True).T
    return half @ half.T


def sample_hiw(g: Graph, delta, phi, rng, seq=None):
    """Draw a covariance matrix whose inverse respects the graph's zeros.

    Walks a perfect clique order: the first clique block is inverse Wishart,
    and each later clique draws its residual block and regression onto the
    separator, then extends the matrix so that the new vertices are
    conditionally independent of everything earlier given the separator.
    """
    phi = np.asarray(phi, dtype=float)
    if seq is None:
        seq = perfect_sequence(g)
    p = g.p
    sigma = np.zeros((p, p))
    first = sorted(seq.cliques[0])
    sigma[np.ix_(first, first)] = sample_invwishart(
        delta + len(first) - 1, phi[np.ix_(first, first)], rng)
    placed = list(first)
    for i in range(1, len(seq.cliques)):
        cl = seq.cliques[i]
        sep = seq.separators[i - 1]
        res = sorted(cl - sep)
        df = delta + len(cl) - 1
        if not sep:
            sigma[np.ix_(res, res)] = sample_invwishart(
                df, phi[np.ix_(res, res)], rng)
            placed.extend(res)
            placed.sort()
            continue
        sv = sorted(sep)
        pss = phi[np.ix_(sv, sv)]
        psr = phi[np.ix_(sv, res)]
        prr = phi[np.ix_(res, res)]
        lss = np.linalg.cholesky(pss)
        m_reg = np.linalg.solve(pss, psr)
        prr_s = prr - psr.T @ m_reg
        prr_s = (prr_s + prr_s.T) / 2.0
        u_blk = sample_invwishart(df, prr_s, rng)
        # regression rows have covariance pss^-1, columns the drawn residual
        a_half = solve_triangular(lss, np.eye(len(sv)), lower=True).T
        c_half = np.linalg.cholesky(u_blk)
        b_reg = m_reg + a_half @ rng.standard_normal((len(sv), len(res))) @ c_half.T
        cross = b_reg.T @ sigma[np.ix_(sv, placed)]
        sigma[np.ix_(res, placed)] = cross
        sigma[np.ix_(placed, res)] = cross.T
        sigma[np.ix_(res, res)] = u_blk + b_reg.T @ sigma[np.ix_(sv, sv)] @ b_reg
        placed.extend(res)
        placed.sort()
    return sigma


def simulate_dataset(g: Graph, tau, delta, n, rng):
    """Simulate n zero-mean rows from a covariance drawn around tau * I.

    Returns (data, stats); the stats are computed from the raw rows without
    centering or scaling, so a round trip through CSV reproduces them.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    sigma = sample_hiw(g, delta, tau * np.eye(g.p), rng)
    lo = np.linalg.cholesky(sigma)
    data = rng.standard_normal((n, g.p)) @ lo.T
    return data, DatasetStats.from_data(data, center=False, standardize=False)
