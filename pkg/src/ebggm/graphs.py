"""Decomposable (chordal) graph machinery on edge bitsets.

Graphs live on vertices 0..p-1 with p <= 32.  The edge set is packed into a
single integer: candidate edges (i, j) with i < j are numbered
lexicographically, so bit 0 is edge (0, 1), bit 1 is edge (0, 2), ..., and
bit m-1 is edge (p-2, p-1), where m = p*(p-1)/2.  The hex form of that
integer is the canonical graph identifier used in logs and on the command
line.

Decomposability is detected with maximum cardinality search: the reverse of
an MCS visit order is a perfect elimination order exactly when the graph is
chordal, which for undirected Gaussian models is the same as decomposable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

from .errors import NotDecomposableError, TooLargeError


def n_candidate_edges(p):
    return p * (p - 1) // 2


def edge_index(p, i, j):
    """Bit position of edge (i, j), i < j, in the lexicographic layout."""
    if not (0 <= i < j < p):
        raise ValueError(f"need 0 <= i < j < p, got ({i}, {j}) with p={p}")
    return (i * (2 * p - i - 1)) // 2 + (j - i - 1)


@lru_cache(maxsize=None)
def _pair_table(p):
    """Tuple mapping bit position -> vertex pair (i, j)."""
    return tuple((i, j) for i in range(p) for j in range(i + 1, p))


def edge_pair(p, k):
    """Vertex pair (i, j) sitting at bit position k."""
    table = _pair_table(p)
    if not 0 <= k < len(table):
        raise ValueError(f"edge index {k} out of range for p={p}")
    return table[k]


def _adjacency(p, edges):
    adj = [0] * p
    table = _pair_table(p)
    e = edges
    while e:
        b = e & -e
        i, j = table[b.bit_length() - 1]
        adj[i] |= 1 << j
        adj[j] |= 1 << i
        e ^= b
    return tuple(adj)


def _iter_bits(mask):
    while mask:
        b = mask & -mask
        yield b.bit_length() - 1
        mask ^= b


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph on vertices 0..p-1 with bitset edges."""

    p: int
    edges: int = 0

    def __post_init__(self):
        # normalize numpy integer inputs so bit tricks work on plain ints
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "edges", int(self.edges))
        if not 1 <= self.p <= 32:
            raise ValueError(f"p must be in 1..32, got {self.p}")
        if not 0 <= self.edges < (1 << n_candidate_edges(self.p)):
            raise ValueError("edge bitset out of range for p")

    @property
    def m(self):
        """Number of candidate edges p*(p-1)/2."""
        return n_candidate_edges(self.p)

    @cached_property
    def adjacency(self):
        """Per-vertex neighbor bitmasks."""
        return _adjacency(self.p, self.edges)

    @property
    def edge_count(self):
        return self.edges.bit_count()

    def has_edge(self, i, j):
        if i == j:
            return False
        if i > j:
            i, j = j, i
        return bool(self.edges >> edge_index(self.p, i, j) & 1)

    def add_edge(self, i, j):
        if i > j:
            i, j = j, i
        bit = 1 << edge_index(self.p, i, j)
        if self.edges & bit:
            raise ValueError(f"edge ({i}, {j}) already present")
        return Graph(self.p, self.edges | bit)

    def remove_edge(self, i, j):
        if i > j:
            i, j = j, i
        bit = 1 << edge_index(self.p, i, j)
        if not self.edges & bit:
            raise ValueError(f"edge ({i}, {j}) not present")
        return Graph(self.p, self.edges ^ bit)

    def neighbors(self, v):
        return tuple(_iter_bits(self.adjacency[v]))

    def edge_list(self):
        table = _pair_table(self.p)
        return [table[k] for k in _iter_bits(self.edges)]

    @property
    def id_hex(self):
        """Zero-padded lowercase hex of the edge bitset (bit 0 = edge (0, 1))."""
        width = (self.m + 3) // 4
        return format(self.edges, f"0{width}x")

    @classmethod
    def from_id(cls, p, hex_id):
        return cls(p, int(hex_id, 16))

    @classmethod
    def from_edge_list(cls, p, pairs):
        edges = 0
        for i, j in pairs:
            if i > j:
                i, j = j, i
            edges |= 1 << edge_index(p, i, j)
        return cls(p, edges)

    @classmethod
    def complete(cls, p):
        return cls(p, (1 << n_candidate_edges(p)) - 1)

    def __repr__(self):
        return f"Graph(p={self.p}, id={self.id_hex!r})"


def graph_from_cliques(p, cliques):
    """Graph whose edge set is the union of all within-clique pairs."""
    edges = 0
    for c in cliques:
        vs = sorted(set(c))
        for a in range(len(vs)):
            for b in range(a + 1, len(vs)):
                edges |= 1 << edge_index(p, vs[a], vs[b])
    return Graph(p, edges)


# 9-vertex benchmark graph used by the simulation study driver; its maximal
# cliques are {0,1,2}, {1,2,4,5}, {1,3,4}, {4,5,6}, {5,6,7,8}.
BENCH9_CLIQUES = ((0, 1, 2), (1, 2, 4, 5), (1, 3, 4), (4, 5, 6), (5, 6, 7, 8))


def bench9_graph():
    return graph_from_cliques(9, BENCH9_CLIQUES)


def named_graph(token, p=None):
    """Resolve a command-line graph token: a builtin name or a hex graph ID."""
    name = token.strip().lower()
    if name in ("bench9", "figure1"):
        return bench9_graph()
    if name in ("empty", "complete"):
        if p is None:
            raise ValueError(f"graph {name!r} needs an explicit p")
        return Graph(p) if name == "empty" else Graph.complete(p)
    if p is None:
        raise ValueError("a hex graph ID needs an explicit p")
    try:
        return Graph.from_id(p, name)
    except ValueError as exc:
        raise ValueError(f"cannot parse graph token {token!r}") from exc


def _mcs(p, adj, tie_rng=None):
    """Maximum cardinality search.

    Returns (order, earlier) where order is the visit order and earlier[k]
    is the bitmask of neighbors of order[k] already visited.  Ties are
    broken toward the lowest vertex index unless tie_rng is given, in which
    case the tied vertex is drawn uniformly (used to probe order-invariance).
    """
    weights = [0] * p
    order = []
    earlier = []
    numbered = 0
    remaining = (1 << p) - 1
    for _ in range(p):
        best = -1
        if tie_rng is None:
            v = -1
            for u in _iter_bits(remaining):
                if weights[u] > best:
                    best = weights[u]
                    v = u
        else:
            ties = []
            for u in _iter_bits(remaining):
                w = weights[u]
                if w > best:
                    best = w
                    ties = [u]
                elif w == best:
                    ties.append(u)
            v = ties[int(tie_rng.integers(len(ties)))]
        order.append(v)
        earlier.append(adj[v] & numbered)
        numbered |= 1 << v
        remaining ^= 1 << v
        for u in _iter_bits(adj[v] & remaining):
            weights[u] += 1
    return order, earlier


def _earlier_sets_complete(adj, earlier):
    # Chordal iff each visited vertex's already-visited neighborhood is a
    # clique (reverse MCS order is then a perfect elimination order).
    for mask in earlier:
        sub = mask
        while sub:
            b = sub & -sub
            u = b.bit_length() - 1
            sub ^= b
            if mask & ~adj[u] != b:
                return False
    return True


def is_decomposable(g: Graph):
    """True iff the graph is chordal, hence supports a perfect clique order."""
    _, earlier = _mcs(g.p, g.adjacency)
    return _earlier_sets_complete(g.adjacency, earlier)


@dataclass(frozen=True)
class PerfectSequence:
    """Maximal cliques in a perfect order plus separators and histories.

    cliques[0..k-1] satisfy the running intersection property; for i >= 1,
    separators[i-1] = cliques[i] & (cliques[0] | ... | cliques[i-1]) and
    histories[i-1] is the index of one earlier clique containing it.
    Masks mirror the frozensets for bit-level consumers.
    """

    cliques: tuple
    separators: tuple
    histories: tuple
    clique_masks: tuple
    separator_masks: tuple


def perfect_sequence(g: Graph, tie_rng=None):
    """Perfect clique sequence of a decomposable graph.

    Raises NotDecomposableError when the graph is not chordal.  With
    tie_rng, MCS ties are randomized; any resulting sequence is perfect and
    the separator multiset does not change.
    """
    p, adj = g.p, g.adjacency
    order, earlier = _mcs(p, adj, tie_rng)
    if not _earlier_sets_complete(adj, earlier):
        raise NotDecomposableError(f"graph {g.id_hex} (p={g.p}) is not decomposable")
    cand = [earlier[k] | (1 << order[k]) for k in range(p)]
    # candidate k is maximal unless swallowed by a later candidate
    cliques = []
    for k in range(p):
        ck = cand[k]
        if all(ck & ~cand[j] for j in range(k + 1, p)):
            cliques.append(ck)
    seps = []
    hist = []
    seen = cliques[0]
    for i in range(1, len(cliques)):
        s = cliques[i] & seen
        seen |= cliques[i]
        h = next((j for j in range(i) if s & ~cliques[j] == 0), None)
        if h is None:
            raise NotDecomposableError("running intersection property violated")
        seps.append(s)
        hist.append(h)
    return PerfectSequence(
        cliques=tuple(frozenset(_iter_bits(c)) for c in cliques),
        separators=tuple(frozenset(_iter_bits(s)) for s in seps),
        histories=tuple(hist),
        clique_masks=tuple(cliques),
        separator_masks=tuple(seps),
    )


def legal_deletions(g: Graph, seq: PerfectSequence | None = None):
    """Edges whose removal keeps the graph decomposable.

    An edge is removable exactly when it lies in a single maximal clique.
    """
    if seq is None:
        seq = perfect_sequence(g)
    table = _pair_table(g.p)
    out = []
    for k in _iter_bits(g.edges):
        i, j = table[k]
        pair = (1 << i) | (1 << j)
        n_hosts = sum(1 for cm in seq.clique_masks if cm & pair == pair)
        if n_hosts == 1:
            out.append((i, j))
    return out


def legal_additions(g: Graph):
    """Non-edges whose insertion keeps the graph decomposable.

    For chordal g, adding (i, j) stays chordal iff the common neighborhood
    N(i) & N(j) separates i from j (equivalently every induced i-j path has
    length two); vertices in distinct components are always joinable.
    """
    p, adj = g.p, g.adjacency
    table = _pair_table(g.p)
    non_edges = ~g.edges & ((1 << g.m) - 1)
    out = []
    for k in _iter_bits(non_edges):
        i, j = table[k]
        sep = adj[i] & adj[j]
        target = 1 << j
        visited = 1 << i
        frontier = visited
        blocked = False
        while frontier:
            nxt = 0
            for v in _iter_bits(frontier):
                nxt |= adj[v]
            nxt &= ~(visited | sep)
            if nxt & target:
                blocked = True
                break
            visited |= nxt
            frontier = nxt
        if not blocked:
            out.append((i, j))
    return out


def random_decomposable_graph(p, rng, walk_steps=None):
    """Random decomposable graph from a uniform-move add/delete walk."""
    g = Graph(p)
    if walk_steps is None:
        walk_steps = 4 * n_candidate_edges(p)
    for _ in range(walk_steps):
        if rng.random() < 0.5:
            moves = legal_additions(g)
            if moves:
                g = g.add_edge(*moves[int(rng.integers(len(moves)))])
        else:
            moves = legal_deletions(g)
            if moves:
                g = g.remove_edge(*moves[int(rng.integers(len(moves)))])
    return g


_COUNT_CAP_P = 8


def count_decomposable(p):
    """Count decomposable graphs on p labeled vertices by exhaustive scan.

    Capped at p=8 (2^28 graphs); the p=8 scan takes on the order of an hour
    in pure Python.  Enumeration follows a Gray code so each step flips one
    edge of the maintained adjacency.
    """
    if p > _COUNT_CAP_P:
        raise TooLargeError(f"count_decomposable capped at p={_COUNT_CAP_P}, got {p}")
    if p == 1:
        return 1
    m = n_candidate_edges(p)
    table = _pair_table(p)
    adj = [0] * p
    count = 1  # empty graph
    for t in range(1, 1 << m):
        flip = t & -t
        i, j = table[flip.bit_length() - 1]
        adj[i] ^= 1 << j
        adj[j] ^= 1 << i
        _, earlier = _mcs(p, adj)
        if _earlier_sets_complete(adj, earlier):
            count += 1
    return count


def to_dot(g: Graph, name="G"):
    """GraphViz DOT text; vertices rendered with 1-based labels."""
    lines = [f"graph {name} {{"]
    for v in range(g.p):
        lines.append(f"  {v + 1};")
    for i, j in g.edge_list():
        lines.append(f"  {i + 1} -- {j + 1};")
    lines.append("}")
    return "\n".join(lines) + "\n"
