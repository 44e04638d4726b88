"""Belief propagation for the single-layer, constrained and correlated models."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from ..constraints import EXACT_WEIGHTS, CheckTable
from ..model import Labeling, MultiplexNetwork, SbmParams, correlated_transition
from . import kernels

logger = logging.getLogger(__name__)

MODELS = ("single", "constrained", "correlated")


@dataclass
class BpConfig:
    t_max: int = 100
    conv_tol: float = 1e-6
    n_sample: float = 1.0
    check_weights: tuple[float, float] = EXACT_WEIGHTS
    damping: float = 0.0
    init_noise: float = 0.05
    rng_seed: int | None = None
    p_same: float = 0.9
    pair_sweeps: int = 5

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.conv_tol <= 0:
            raise ValueError("conv_tol must be positive")
        if not 0.0 < self.n_sample <= 1.0:
            raise ValueError("n_sample must lie in (0, 1]")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if self.init_noise < 0:
            raise ValueError("init_noise must be non-negative")
        if not 0.0 <= self.p_same <= 1.0:
            raise ValueError("p_same must lie in [0, 1]")
        if self.pair_sweeps < 1:
            raise ValueError("pair_sweeps must be >= 1")
        w_fail, w_pass = self.check_weights
        if w_fail < 0 or w_pass < 0:
            raise ValueError("constraint weights must be non-negative")
        self.check_weights = (float(w_fail), float(w_pass))


@dataclass
class BpState:
    """All messages, beliefs and fields of one inference run."""

    model: str
    N: int
    L: int
    q: int
    indptr: np.ndarray
    src: np.ndarray
    nbr: np.ndarray
    rev: np.ndarray
    msg: np.ndarray
    beliefs: np.ndarray
    fields: np.ndarray
    intra_full: np.ndarray
    V: np.ndarray
    logF: np.ndarray
    S: np.ndarray
    U: np.ndarray
    active: np.ndarray
    c: np.ndarray
    log_n: np.ndarray
    fmat: np.ndarray
    weights: tuple[float, float]
    seed: int
    counts: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.int64))
    perm_rngs: list = field(default_factory=list)

    @property
    def inter_messages(self) -> np.ndarray:
        return self.V if self.model == "constrained" else self.U

    def layer_slots(self, l: int) -> tuple[int, int]:
        return int(self.indptr[l, 0]), int(self.indptr[l, self.N])


@dataclass
class DetectionResult:
    beliefs: np.ndarray
    labels: Labeling
    converged: bool
    sweeps_used: int
    final_conv: float
    counts: np.ndarray
    model: str


def _layer_csr(network: MultiplexNetwork):
    N, L = network.N, network.L
    indptr = np.zeros((L, N + 1), dtype=np.int64)
    src, nbr = [], []
    offset = 0
    for l in range(L):
        adj = network.adjacency(l)
        for i in range(N):
            indptr[l, i] = offset
            src.extend([i] * len(adj[i]))
            nbr.extend(adj[i])
            offset += len(adj[i])
        indptr[l, N] = offset
    src = np.array(src, dtype=np.int64)
    nbr = np.array(nbr, dtype=np.int64)
    rev = np.empty(len(src), dtype=np.int64)
    for l in range(L):
        lo, hi = indptr[l, 0], indptr[l, N]
        slot = {(int(src[e]), int(nbr[e])): e for e in range(lo, hi)}
        for e in range(lo, hi):
            rev[e] = slot[(int(nbr[e]), int(src[e]))]
    return indptr, src, nbr, rev


def _perturbed(rng: np.random.Generator, shape, q: int, noise: float) -> np.ndarray:
    x = 1.0 / q + noise * (2.0 * rng.random((*shape, q)) - 1.0)
    return x / x.sum(axis=-1, keepdims=True)


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([seed, *key])


def init_state(
    network: MultiplexNetwork,
    params: SbmParams,
    config: BpConfig,
    model: str = "constrained",
    check_table: CheckTable | None = None,
) -> BpState:
    """Uniform messages perturbed by ``init_noise``; fields from the initial beliefs.

    Every block of random draws comes from its own stream keyed by the seed
    and the block's role (layer or layer pair), so the draws for a layer do
    not depend on which other layers exist.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
    if params.N != network.N:
        raise ValueError(f"params describe {params.N} nodes, network has {network.N}")
    q, N, L = params.q, network.N, network.L
    if config.init_noise >= 1.0 / q:
        raise ValueError("init_noise must be below 1/q to keep messages positive")
    if model == "correlated" and L < 2:
        raise ValueError("the correlated model needs at least two layers")
    if model == "constrained" and L < 2:
        raise ValueError("the constrained model needs at least two layers")
    weights = config.check_weights
    if check_table is not None:
        if check_table.q != q:
            raise ValueError(f"check table built for q={check_table.q}, params have q={q}")
        weights = check_table.weights
    seed = config.rng_seed
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1)[0])

    indptr, src, nbr, rev = _layer_csr(network)
    noise = config.init_noise
    msg = np.empty((len(src), q))
    beliefs = np.empty((N, L, q))
    for l in range(L):
        lo, hi = indptr[l, 0], indptr[l, N]
        msg[lo:hi] = _perturbed(_stream(seed, 10, l), (hi - lo,), q, noise)
        beliefs[:, l] = _perturbed(_stream(seed, 11, l), (N,), q, noise)

    constrained = model == "constrained"
    vshape = (L, L, N, N, q) if constrained else (1, 1, 1, 1, q)
    V = np.full(vshape, 1.0 / q)
    logF = np.zeros(vshape)
    S = np.zeros((L, N, q))
    active = np.zeros((L, L), dtype=np.bool_)
    if constrained:
        for l, m in itertools.permutations(range(L), 2):
            V[l, m] = _perturbed(_stream(seed, 12, l, m), (N, N), q, noise)
            active[l, m] = True
    U = np.full((L, L, N, q) if model == "correlated" else (1, 1, 1, q), 1.0 / q)
    if model == "correlated":
        for m, l in itertools.permutations(range(L), 2):
            U[m, l] = _perturbed(_stream(seed, 13, m, l), (N,), q, noise)

    c = np.ascontiguousarray(params.c, dtype=float)
    with np.errstate(divide="ignore"):
        log_n = np.log(params.n)
    log_n = np.maximum(log_n, np.log(kernels.TINY))
    fields = beliefs.sum(axis=0) @ c / N

    state = BpState(
        model=model,
        N=N,
        L=L,
        q=q,
        indptr=indptr,
        src=src,
        nbr=nbr,
        rev=rev,
        msg=msg,
        beliefs=beliefs,
        fields=fields,
        intra_full=np.zeros((L, N, q)),
        V=V,
        logF=logF,
        S=S,
        U=U,
        active=active,
        c=c,
        log_n=log_n,
        fmat=correlated_transition(q, config.p_same),
        weights=weights,
        seed=seed,
        perm_rngs=[_stream(seed, 20, l) for l in range(L)],
    )
    if constrained:
        kernels.refresh_factors(V, logF, S, active, weights[0], weights[1], np.zeros(3, dtype=np.int64))
    kernels.seed_kernel_rng(seed % (2**32))
    return state


def set_active_pairs(state: BpState, pairs) -> None:
    """Restrict constraint factors to the given unordered layer pairs."""
    state.active[:] = False
    for l, m in pairs:
        if l == m:
            raise ValueError("a layer pair needs two distinct layers")
        state.active[l, m] = state.active[m, l] = True
    kernels.refresh_factors(
        state.V, state.logF, state.S, state.active, state.weights[0], state.weights[1], np.zeros(3, dtype=np.int64)
    )


def update_external_field(state: BpState, layer: int) -> np.ndarray:
    """``h_a = (1/N) sum_k sum_t c[t, a] b^k_t`` from one layer's beliefs."""
    state.fields[layer] = state.beliefs[:, layer].sum(axis=0) @ state.c / state.N
    return state.fields[layer]


def _sweep(state: BpState, layers, mode: int, k: int, full: bool, damping: float) -> float:
    layers = np.asarray(layers, dtype=np.int64)
    orders, ptr = [], [0]
    for l in layers:
        lo, hi = state.layer_slots(int(l))
        orders.append(state.perm_rngs[l].permutation(np.arange(lo, hi, dtype=np.int64)))
        ptr.append(ptr[-1] + hi - lo)
    order = np.concatenate(orders) if orders else np.zeros(0, dtype=np.int64)
    others = np.zeros((state.L, max(state.L - 1, 1)), dtype=np.int64)
    n_others = np.zeros(state.L, dtype=np.int64)
    for l in range(state.L):
        act = [m for m in range(state.L) if m != l and state.active[l, m]]
        n_others[l] = len(act)
        others[l, : len(act)] = act
    return kernels.sweep_kernel(
        mode,
        layers,
        order,
        np.asarray(ptr, dtype=np.int64),
        state.src,
        state.indptr,
        state.rev,
        state.msg,
        state.beliefs,
        state.fields,
        state.c,
        state.log_n,
        state.intra_full,
        state.V,
        state.logF,
        state.S,
        state.active,
        others,
        n_others,
        k,
        full,
        state.weights[0],
        state.weights[1],
        state.U,
        state.fmat,
        damping,
        state.counts,
    )


def _sample_size(state: BpState, n_sample: float) -> tuple[int, bool]:
    if n_sample >= 1.0:
        return 0, True
    n_other = max(int(state.active.sum(axis=1).max()), 1)
    K = n_other * (state.N - 1)
    return max(1, int(round(n_sample * K))), False


def single_layer_sweep(state: BpState, config: BpConfig | None = None, layers=None) -> float:
    """Independent single-layer updates in every (or the given) layer."""
    config = config or BpConfig()
    layers = range(state.L) if layers is None else layers
    return _sweep(state, list(layers), 0, 0, True, config.damping)


def constrained_sweep(state: BpState, config: BpConfig, layers=None) -> float:
    if state.model != "constrained":
        raise ValueError("state was not initialised for the constrained model")
    if layers is None:
        layers = [l for l in range(state.L) if state.active[l].any()]
    k, full = _sample_size(state, config.n_sample)
    return _sweep(state, list(layers), 1, k, full, config.damping)


def correlated_sweep(state: BpState, config: BpConfig) -> float:
    if state.model != "correlated":
        raise ValueError("state was not initialised for the correlated model")
    return _sweep(state, list(range(state.L)), 2, 0, True, config.damping)


def _sweep_for(state: BpState, config: BpConfig) -> float:
    if state.model == "single":
        return single_layer_sweep(state, config)
    if state.model == "constrained":
        return constrained_sweep(state, config)
    return correlated_sweep(state, config)


def mmap_labels(beliefs: np.ndarray) -> Labeling:
    """Arg-max per node copy (lowest label wins ties), as 1-based labels."""
    return Labeling(np.argmax(beliefs, axis=-1) + 1, q=beliefs.shape[-1])


def _result(state: BpState, converged: bool, sweeps: int, conv: float) -> DetectionResult:
    beliefs = state.beliefs.copy()
    return DetectionResult(
        beliefs=beliefs,
        labels=mmap_labels(beliefs),
        converged=converged,
        sweeps_used=sweeps,
        final_conv=float(conv),
        counts=state.counts.copy(),
        model=state.model,
    )


def run(
    network: MultiplexNetwork,
    params: SbmParams,
    model: str = "constrained",
    config: BpConfig | None = None,
    check_table: CheckTable | None = None,
    state: BpState | None = None,
) -> DetectionResult:
    """Sweep until the summed message change drops to ``conv_tol`` or
    ``t_max`` sweeps have run, then read off MMAP labels."""
    config = config or BpConfig()
    if state is None:
        state = init_state(network, params, config, model, check_table)
    conv = np.inf
    t = 0
    while t < config.t_max:
        conv = _sweep_for(state, config)
        t += 1
        if conv <= config.conv_tol:
            break
    converged = bool(conv <= config.conv_tol)
    logger.debug("%s BP: %d sweeps, conv=%.3g", model, t, conv)
    return _result(state, converged, t, conv)


def round_robin_pairs(L: int) -> list[tuple[int, int]]:
    """Adjacent pairs first, then the rest: (0,1), (1,2), ..., (0,2), ..."""
    pairs = sorted(itertools.combinations(range(L), 2), key=lambda p: (p[1] - p[0], p[0]))
    return pairs


def run_multilayer_alternating(
    network: MultiplexNetwork,
    params: SbmParams,
    config: BpConfig | None = None,
    pair_schedule=None,
    check_table: CheckTable | None = None,
    state: BpState | None = None,
) -> DetectionResult:
    """Constrained BP on one layer pair at a time.

    While a pair is active only its constraint factors take part and the
    remaining layers keep their messages. Each outer round visits every pair
    in ``pair_schedule`` for up to ``pair_sweeps`` sweeps; ``t_max`` bounds
    the number of outer rounds.
    """
    config = config or BpConfig()
    if network.L < 3 and pair_schedule is None:
        raise ValueError("alternating pairs needs L >= 3 (or an explicit pair schedule)")
    schedule = list(pair_schedule) if pair_schedule is not None else round_robin_pairs(network.L)
    if not schedule:
        raise ValueError("empty pair schedule")
    if state is None:
        state = init_state(network, params, config, "constrained", check_table)
    conv = np.inf
    rounds = 0
    while rounds < config.t_max:
        conv = 0.0
        for pair in schedule:
            set_active_pairs(state, [pair])
            for _ in range(config.pair_sweeps):
                c = constrained_sweep(state, config, layers=list(pair))
                if c <= config.conv_tol:
                    break
            conv += c
        rounds += 1
        if conv <= config.conv_tol:
            break
    return _result(state, bool(conv <= config.conv_tol), rounds, conv)
