"""Domain types and generative models for multiplex stochastic block models.

Labels follow the 1-based convention used in the text formats: a label is an
integer in ``1..q`` and ``0`` stands for the empty label (node absent from
every community present in that layer).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

EMPTY = 0


class WppViolationError(ValueError):
    """Raised when a labeling or community structure breaks the WPP.

    ``witness`` is an ``(i, j, l, k)`` tuple (0-based) for which
    ``t_i(l) == t_j(k) != EMPTY`` but ``t_i(k) != t_j(k)``, or ``None`` when
    the violation is a within-layer overlap of two communities.
    """

    def __init__(self, message: str, witness: tuple[int, int, int, int] | None = None):
        super().__init__(message)
        self.witness = witness


def _seed_rng(seed, *key: int) -> np.random.Generator:
    # Independent child streams keyed by purpose; keeps layer k's draws
    # unchanged when other layers are added or removed.
    if seed is None:
        return np.random.default_rng()
    return np.random.default_rng([int(seed), *key])


@dataclass(frozen=True)
class SbmParams:
    q: int
    n: np.ndarray
    c: np.ndarray
    N: int

    def __post_init__(self):
        n = np.asarray(self.n, dtype=float)
        c = np.asarray(self.c, dtype=float)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "c", c)
        if self.q < 1:
            raise ValueError(f"q must be >= 1, got {self.q}")
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if n.shape != (self.q,):
            raise ValueError(f"n must have shape ({self.q},), got {n.shape}")
        if np.any(n < 0) or abs(n.sum() - 1.0) > 1e-9:
            raise ValueError("community fractions must be non-negative and sum to 1")
        if c.shape != (self.q, self.q):
            raise ValueError(f"c must have shape ({self.q}, {self.q}), got {c.shape}")
        if not np.allclose(c, c.T, atol=1e-12):
            raise ValueError("affinity matrix must be symmetric")
        if np.any(c < 0):
            raise ValueError("affinities must be non-negative")
        if np.any(c > self.N):
            raise ValueError("affinity c_ab exceeds N: edge probability above 1")

    @property
    def p(self) -> np.ndarray:
        return self.c / self.N

    @classmethod
    def benchmark(cls, q: int, N: int, c_in: float, c_out: float, n=None) -> "SbmParams":
        """Planted-partition parameters with equal community sizes by default."""
        if n is None:
            n = np.full(q, 1.0 / q)
        c = np.full((q, q), float(c_out))
        np.fill_diagonal(c, float(c_in))
        return cls(q=q, n=n, c=c, N=N)

    def permuted(self, perm: Sequence[int]) -> "SbmParams":
        """Parameters with community ``a`` renamed to ``perm[a]`` (0-based)."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        return SbmParams(q=self.q, n=self.n[inv], c=self.c[np.ix_(inv, inv)], N=self.N)


@dataclass(frozen=True)
class BenchmarkAffinity:
    """Within/between affinities on the rescaled ``c = N p`` scale."""

    c_in: float
    c_out: float
    average_degree: float | None = None

    def __post_init__(self):
        if self.c_in < 0 or self.c_out < 0:
            raise ValueError("affinities must be non-negative")
        if self.c_out > self.c_in:
            raise ValueError("c_out must not exceed c_in (epsilon <= 1)")

    @property
    def epsilon(self) -> float:
        return self.c_out / self.c_in if self.c_in > 0 else 0.0

    @classmethod
    def from_degree(cls, average_degree: float, epsilon: float, fractions=(0.5, 0.5)) -> "BenchmarkAffinity":
        """Fix ``(c_in, c_out)`` so that a layer partitioned by ``fractions``
        has the requested mean degree.

        Mean degree is ``c_in * s + c_out * (1 - s)`` with ``s = sum(n_a**2)``.
        """
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
        if average_degree < 0:
            raise ValueError("average degree must be non-negative")
        fr = np.asarray(fractions, dtype=float)
        s = float(np.sum(fr**2))
        c_in = average_degree / (s + epsilon * (1.0 - s))
        return cls(c_in=c_in, c_out=epsilon * c_in, average_degree=average_degree)

    def to_params(self, q: int, N: int, n=None) -> SbmParams:
        return SbmParams.benchmark(q, N, self.c_in, self.c_out, n=n)


@dataclass
class MultiplexNetwork:
    """``N`` nodes and ``L`` undirected edge sets.

    ``layers[l]`` is an ``(E_l, 2)`` integer array with ``i < j`` in every row,
    rows sorted lexicographically.
    """

    N: int
    layers: list[np.ndarray]

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if len(self.layers) < 1:
            raise ValueError("a multiplex network needs at least one layer")
        self.layers = [_canonical_edges(e, self.N) for e in self.layers]

    @property
    def L(self) -> int:
        return len(self.layers)

    def n_edges(self, layer: int | None = None) -> int:
        if layer is None:
            return sum(len(e) for e in self.layers)
        return len(self.layers[layer])

    def adjacency(self, layer: int) -> list[list[int]]:
        """Sorted neighbour lists for one layer."""
        adj: list[list[int]] = [[] for _ in range(self.N)]
        for i, j in self.layers[layer]:
            adj[i].append(int(j))
            adj[j].append(int(i))
        for nb in adj:
            nb.sort()
        return adj

    def select_layers(self, layers: Iterable[int]) -> "MultiplexNetwork":
        return MultiplexNetwork(self.N, [self.layers[l] for l in layers])

    def __eq__(self, other):
        if not isinstance(other, MultiplexNetwork):
            return NotImplemented
        return (
            self.N == other.N
            and self.L == other.L
            and all(np.array_equal(a, b) for a, b in zip(self.layers, other.layers))
        )


def _canonical_edges(edges, N: int) -> np.ndarray:
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if e.min() < 0 or e.max() >= N:
        raise ValueError("edge endpoint out of range")
    if np.any(e[:, 0] == e[:, 1]):
        raise ValueError("self-loops are not allowed")
    e = np.sort(e, axis=1)
    order = np.lexsort((e[:, 1], e[:, 0]))
    e = e[order]
    if np.any(np.all(e[1:] == e[:-1], axis=1)):
        raise ValueError("duplicate edge within a layer")
    return e


@dataclass
class Labeling:
    """Per node, per layer labels: ``t[i, l]`` in ``1..q`` or ``EMPTY``."""

    t: np.ndarray
    q: int

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.int64)
        if t.ndim == 1:
            t = t[:, None]
        if t.ndim != 2:
            raise ValueError("labels must be an N x L array")
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if t.size and (t.min() < 0 or t.max() > self.q):
            raise ValueError(f"labels must lie in 0..{self.q}")
        self.t = t

    @property
    def N(self) -> int:
        return self.t.shape[0]

    @property
    def L(self) -> int:
        return self.t.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Labeling):
            return NotImplemented
        return self.q == other.q and np.array_equal(self.t, other.t)


@dataclass
class CommunityStructure:
    """Communities ``C_1..C_Q`` as node sets plus their presence per layer.

    ``presence[l]`` holds 0-based indices into ``communities``; community
    ``a`` carries label ``a + 1``.
    """

    communities: list[frozenset[int]]
    presence: list[set[int]]
    N: int | None = field(default=None)

    def __post_init__(self):
        self.communities = [frozenset(int(v) for v in c) for c in self.communities]
        self.presence = [set(int(a) for a in h) for h in self.presence]
        if self.N is None:
            self.N = 1 + max((max(c) for c in self.communities if c), default=-1)
        for h in self.presence:
            for a in h:
                if not 0 <= a < len(self.communities):
                    raise ValueError(f"unknown community index {a}")

    @property
    def L(self) -> int:
        return len(self.presence)

    @property
    def Q(self) -> int:
        return len(self.communities)

    def check(self) -> None:
        """Raise ``WppViolationError`` on overlap within a layer or an
        unobservable community."""
        for l, h in enumerate(self.presence):
            seen: dict[int, int] = {}
            for a in sorted(h):
                for v in self.communities[a]:
                    if v in seen:
                        raise WppViolationError(
                            f"communities {seen[v] + 1} and {a + 1} overlap at node {v} in layer {l}"
                        )
                    seen[v] = a
        present = set().union(*self.presence) if self.presence else set()
        missing = set(range(self.Q)) - present
        if missing:
            raise WppViolationError(f"communities {sorted(m + 1 for m in missing)} appear in no layer")

    def to_labeling(self) -> Labeling:
        self.check()
        t = np.full((self.N, self.L), EMPTY, dtype=np.int64)
        for l, h in enumerate(self.presence):
            for a in h:
                idx = np.fromiter(self.communities[a], dtype=np.int64)
                t[idx, l] = a + 1
        return Labeling(t, q=max(self.Q, 1))

    def canonical(self) -> tuple:
        """Order-free representation used to compare structures."""
        comms = {self.communities[a] for h in self.presence for a in h}
        layers = tuple(frozenset(self.communities[a] for a in h) for h in self.presence)
        return frozenset(comms), layers


def structure_to_labeling(structure: CommunityStructure) -> Labeling:
    return structure.to_labeling()


def labeling_to_structure(labeling: Labeling) -> CommunityStructure:
    """Recover ``C_a = {i : exists l, t_i(l) = a}`` and the presence sets.

    Labels that never occur produce no community; the remaining communities
    keep their label order.
    """
    from .constraints import wpp_check_global

    witness = wpp_check_global(labeling)
    if witness is not None:
        i, j, l, k = witness
        raise WppViolationError(
            f"labeling violates WPP: t[{i},{l}] == t[{j},{k}] but t[{i},{k}] != t[{j},{k}]",
            witness=witness,
        )
    t = labeling.t
    used = [a for a in range(1, labeling.q + 1) if np.any(t == a)]
    index = {a: k for k, a in enumerate(used)}
    communities = [frozenset(np.nonzero(np.any(t == a, axis=1))[0].tolist()) for a in used]
    presence = [{index[a] for a in np.unique(t[:, l]) if a != EMPTY} for l in range(labeling.L)]
    return CommunityStructure(communities, presence, N=labeling.N)


def two_block_structure(N: int, L: int) -> CommunityStructure:
    """Two equal halves present in every layer (homogeneous benchmark)."""
    half = N // 2
    return CommunityStructure(
        [frozenset(range(half)), frozenset(range(half, N))],
        [{0, 1} for _ in range(L)],
        N=N,
    )


def heterogeneous_structure(N: int = 200) -> CommunityStructure:
    """Two layers sharing the first half as one community.

    Layer 1 splits the rest into one community, layer 2 into two equal ones.
    """
    half, three_q = N // 2, N // 2 + N // 4
    communities = [
        frozenset(range(half)),
        frozenset(range(half, N)),
        frozenset(range(half, three_q)),
        frozenset(range(three_q, N)),
    ]
    return CommunityStructure(communities, [{0, 1}, {0, 2, 3}], N=N)


def three_layer_structure(N: int = 90) -> CommunityStructure:
    """Five communities over three layers.

    One community is shared by layers 1-2, another by layers 2-3.
    """
    a, b = N // 3, 2 * N // 3
    communities = [
        frozenset(range(a)),  # shared by layers 1 and 2
        frozenset(range(a, N)),  # layer 1 only
        frozenset(range(a, b)),  # layer 2 only
        frozenset(range(b, N)),  # shared by layers 2 and 3
        frozenset(range(b)),  # layer 3 only
    ]
    return CommunityStructure(communities, [{0, 1}, {0, 2, 3}, {3, 4}], N=N)


def planted_clusters(structure: CommunityStructure) -> list[tuple[int, frozenset[int]]]:
    """``(layer, node set)`` for every community present in every layer."""
    return [(l, structure.communities[a]) for l, h in enumerate(structure.presence) for a in sorted(h)]


def _sample_layer(labels: np.ndarray, prob: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli edges with ``P(i~j) = prob[i, j]`` for ``i < j``."""
    N = len(labels)
    iu, ju = np.triu_indices(N, k=1)
    hit = rng.random(len(iu)) < prob[iu, ju]
    return np.column_stack([iu[hit], ju[hit]]).astype(np.int64)


def generate_single_layer(params: SbmParams, rng_seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Draw labels from ``n`` and edges from ``c / N``.

    Returns the ``(E, 2)`` edge array and 1-based ground-truth labels.
    """
    rng = _seed_rng(rng_seed, 0)
    labels0 = rng.choice(params.q, size=params.N, p=params.n)
    p = params.p
    edges = _sample_layer(labels0, p[np.ix_(labels0, labels0)], _seed_rng(rng_seed, 1, 0))
    return edges, labels0 + 1


def _layer_probabilities(col: np.ndarray, affinity: BenchmarkAffinity, N: int) -> np.ndarray:
    same = (col[:, None] == col[None, :]) & (col[:, None] != EMPTY)
    return np.where(same, affinity.c_in / N, affinity.c_out / N)


def generate_multiplex_wpp(
    structure: CommunityStructure,
    affinity: BenchmarkAffinity,
    N: int | None = None,
    L: int | None = None,
    rng_seed=None,
) -> tuple[MultiplexNetwork, Labeling]:
    """Per-layer SBM edges given labels read off a WPP community structure.

    Nodes with an empty label in a layer connect to everyone at the
    background rate ``c_out / N``.
    """
    N = structure.N if N is None else N
    L = structure.L if L is None else L
    if N != structure.N:
        raise ValueError(f"structure covers {structure.N} nodes, not {N}")
    if L != structure.L:
        raise ValueError(f"structure has {structure.L} layers, not {L}")
    if affinity.c_in > N:
        raise ValueError("c_in exceeds N: edge probability above 1")
    labeling = structure.to_labeling()
    layers = []
    for l in range(L):
        prob = _layer_probabilities(labeling.t[:, l], affinity, N)
        layers.append(_sample_layer(labeling.t[:, l], prob, _seed_rng(rng_seed, 1, l)))
    return MultiplexNetwork(N, layers), labeling


def correlated_transition(q: int, p_same: float) -> np.ndarray:
    """Normalised pairwise factor: ``p_same`` on the diagonal,
    ``(1 - p_same) / (q - 1)`` elsewhere."""
    if not 0.0 <= p_same <= 1.0:
        raise ValueError(f"p_same must lie in [0, 1], got {p_same}")
    if q == 1:
        return np.ones((1, 1))
    f = np.full((q, q), (1.0 - p_same) / (q - 1))
    np.fill_diagonal(f, p_same)
    return f


def generate_correlated(params: SbmParams, p_same: float, L: int, rng_seed=None) -> tuple[MultiplexNetwork, Labeling]:
    if L < 2:
        raise ValueError("the correlated model needs at least two layers")
    f = correlated_transition(params.q, p_same)
    rng = _seed_rng(rng_seed, 0)
    t = np.empty((params.N, L), dtype=np.int64)
    t[:, 0] = rng.choice(params.q, size=params.N, p=params.n)
    for l in range(1, L):
        u = rng.random(params.N)
        cdf = np.cumsum(f[t[:, l - 1]], axis=1)
        t[:, l] = np.minimum((u[:, None] >= cdf).sum(axis=1), params.q - 1)
    p = params.p
    layers = [_sample_layer(t[:, l], p[np.ix_(t[:, l], t[:, l])], _seed_rng(rng_seed, 1, l)) for l in range(L)]
    return MultiplexNetwork(params.N, layers), Labeling(t + 1, q=params.q)


# -- text formats -----------------------------------------------------------


def write_network(path, network: MultiplexNetwork, q: int) -> None:
    """Header ``N L q`` then one ``l i j`` line per edge (1-based layer)."""
    with open(path, "w") as fh:
        fh.write(f"{network.N} {network.L} {q}\n")
        for l, edges in enumerate(network.layers):
            for i, j in edges:
                fh.write(f"{l + 1} {i} {j}\n")


def read_network(path) -> tuple[MultiplexNetwork, int]:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError(f"{path}: expected header 'N L q'")
        N, L, q = (int(x) for x in header)
        layers: list[list[tuple[int, int]]] = [[] for _ in range(L)]
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'l i j'")
            l, i, j = (int(x) for x in parts)
            if not 1 <= l <= L:
                raise ValueError(f"{path}:{lineno}: layer {l} out of range")
            layers[l - 1].append((i, j))
    return MultiplexNetwork(N, [np.array(e, dtype=np.int64).reshape(-1, 2) for e in layers]), q


def write_labels(path, labeling: Labeling) -> None:
    """One ``l i t`` line per node copy; ``t = 0`` is the empty label."""
    with open(path, "w") as fh:
        for l in range(labeling.L):
            for i in range(labeling.N):
                fh.write(f"{l + 1} {i} {labeling.t[i, l]}\n")


def read_labels(path, N: int | None = None, L: int | None = None, q: int | None = None) -> Labeling:
    rows = np.loadtxt(path, dtype=np.int64, ndmin=2)
    if rows.size == 0:
        raise ValueError(f"{path}: no labels")
    if rows.shape[1] != 3:
        raise ValueError(f"{path}: expected 'l i t' rows")
    N = int(rows[:, 1].max()) + 1 if N is None else N
    L = int(rows[:, 0].max()) if L is None else L
    t = np.zeros((N, L), dtype=np.int64)
    t[rows[:, 1], rows[:, 0] - 1] = rows[:, 2]
    q = max(int(t.max()), 1) if q is None else q
    return Labeling(t, q=q)
