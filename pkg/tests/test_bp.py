import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multiplex_bp.bp import (
    BpConfig,
    constrained_sweep,
    init_state,
    mmap_labels,
    run,
    run_multilayer_alternating,
    update_external_field,
)
from multiplex_bp.bp.kernels import factor_closed_form
from multiplex_bp.constraints import build_check_table
from multiplex_bp.model import (
    BenchmarkAffinity,
    MultiplexNetwork,
    SbmParams,
    generate_multiplex_wpp,
    three_layer_structure,
    two_block_structure,
)

from oracles import exact_marginals


def _instance(N=60, L=2, eps=0.2, deg=3.0, seed=0):
    aff = BenchmarkAffinity.from_degree(deg, eps)
    net, truth = generate_multiplex_wpp(two_block_structure(N, L), aff, rng_seed=seed)
    return net, aff.to_params(2, N), truth


def _simplex(draw, q):
    x = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=q, max_size=q)))
    return x / x.sum()


@st.composite
def factor_inputs(draw):
    q = draw(st.integers(1, 5))
    w_fail = draw(st.floats(0.0, 1.0))
    w_pass = draw(st.floats(0.0, 1.0))
    return q, _simplex(draw, q), _simplex(draw, q), _simplex(draw, q), w_fail, w_pass


@settings(max_examples=300, deadline=None)
@given(factor_inputs())
def test_closed_form_matches_table_sum(args):
    q, x, y, z, w_fail, w_pass = args
    # slots: (i(l), j(l), i(l'), j(l')); x feeds j(l), y feeds i(l'), z feeds j(l')
    table = build_check_table(q, (w_fail, w_pass)).table
    expected = np.einsum("abgd,b,g,d->a", table, x, y, z)
    out = np.empty(q)
    factor_closed_form(x, y, z, w_fail, w_pass, out)
    assert np.allclose(out, expected, atol=1e-12)


def test_closed_form_hand_case():
    # j(l), i(l') and j(l') all sit on label 1: only a=1 passes
    one = np.array([1.0, 0.0])
    out = np.empty(2)
    factor_closed_form(one, one, one, 0.2, 0.8, out)
    assert np.allclose(out, [0.8, 0.2])
    # j(l)=1, i(l')=2, j(l')=1: i(l) must differ from j(l) and may not take 1
    two = np.array([0.0, 1.0])
    factor_closed_form(one, two, one, 0.0, 1.0, out)
    assert np.allclose(out, [0.0, 1.0])


def test_config_validation():
    with pytest.raises(ValueError):
        BpConfig(n_sample=0.0)
    with pytest.raises(ValueError):
        BpConfig(damping=1.0)
    with pytest.raises(ValueError):
        BpConfig(t_max=0)
    with pytest.raises(ValueError):
        BpConfig(check_weights=(-1.0, 1.0))
    net, params, _ = _instance(20)
    with pytest.raises(ValueError):
        init_state(net, params, BpConfig(init_noise=0.5))
    with pytest.raises(ValueError):
        init_state(net, SbmParams.benchmark(2, 30, 3.0, 1.0), BpConfig())
    with pytest.raises(ValueError):
        run(net.select_layers([0]), params, "constrained")
    with pytest.raises(ValueError):
        run(net, params, "nonsense")


def test_init_noise_bounds():
    net, params, _ = _instance(40)
    noise = 0.05
    s = init_state(net, params, BpConfig(init_noise=noise, rng_seed=1), "constrained")
    for arr in (s.msg, s.beliefs, s.V[0, 1], s.V[1, 0]):
        assert np.allclose(arr.sum(axis=-1), 1.0)
        # x = 1/q + u, |u| <= noise, then normalised by a sum within 1 +- q*noise
        assert np.all(np.abs(arr - 0.5) <= (0.5 + noise) / (1 - 2 * noise) - 0.5 + 1e-12)
    flat = init_state(net, params, BpConfig(init_noise=0.0, rng_seed=1), "constrained")
    assert np.allclose(flat.msg, 0.5)


def test_field_formula():
    net, params, _ = _instance(50)
    s = init_state(net, params, BpConfig(rng_seed=2), "single")
    for l in range(2):
        h = update_external_field(s, l)
        direct = np.array([sum(params.c[t, a] * s.beliefs[k, l, t] for k in range(50) for t in range(2)) / 50 for a in range(2)])
        assert np.allclose(h, direct)


def test_outputs_normalised_and_tmax_one():
    net, params, _ = _instance(60)
    r = run(net, params, "constrained", BpConfig(t_max=1, rng_seed=3, n_sample=0.1, check_weights=(0.2, 0.8)))
    assert r.sweeps_used == 1 and not r.converged
    assert np.allclose(r.beliefs.sum(axis=-1), 1.0)
    assert np.all(r.beliefs >= 0)
    assert r.labels.t.shape == (60, 2)


def test_deterministic_for_fixed_seed():
    net, params, _ = _instance(60)
    cfg = BpConfig(t_max=5, rng_seed=7, n_sample=0.1, check_weights=(0.2, 0.8))
    a = run(net, params, "constrained", cfg)
    b = run(net, params, "constrained", cfg)
    assert np.array_equal(a.beliefs, b.beliefs)
    c = run(net, params, "constrained", BpConfig(t_max=5, rng_seed=8, n_sample=0.1, check_weights=(0.2, 0.8)))
    assert not np.array_equal(a.beliefs, c.beliefs)


@pytest.mark.parametrize("L", [2, 3])
def test_message_accounting(L):
    net, params, _ = _instance(20, L=L, deg=4.0)
    N = 20
    s = init_state(net, params, BpConfig(rng_seed=0), "constrained")
    constrained_sweep(s, BpConfig())
    E = sum(net.n_edges(l) for l in range(L))
    assert s.counts[0] == 2 * E
    assert s.counts[1] + s.counts[2] == 2 * (N * N - N) * (L * L - L)
    constrained_sweep(s, BpConfig())
    assert s.counts[0] == 4 * E


def test_neutral_weights_equal_single_layers():
    net, params, _ = _instance(80, eps=0.15)
    cfg = dict(t_max=15, rng_seed=11)
    single = run(net, params, "single", BpConfig(**cfg))
    for w in [(0.5, 0.5), (1.0, 1.0)]:
        cons = run(net, params, "constrained", BpConfig(check_weights=w, **cfg))
        assert np.max(np.abs(cons.beliefs - single.beliefs)) < 1e-9


def test_uninformative_correlation_equals_single_layers():
    net, params, _ = _instance(80, eps=0.15)
    single = run(net, params, "single", BpConfig(t_max=10, rng_seed=4))
    corr = run(net, params, "correlated", BpConfig(t_max=10, rng_seed=4, p_same=0.5))
    assert np.max(np.abs(corr.beliefs - single.beliefs)) < 1e-9


def test_single_layer_reduction_with_empty_partner():
    # a second layer without edges under neutral weights leaves layer 0 untouched
    net, params, _ = _instance(60)
    lone = run(net.select_layers([0]), params, "single", BpConfig(t_max=8, rng_seed=5))
    pair = MultiplexNetwork(60, [net.layers[0], np.zeros((0, 2), dtype=int)])
    cons = run(pair, params, "constrained", BpConfig(t_max=8, rng_seed=5, check_weights=(0.5, 0.5)))
    assert np.max(np.abs(cons.beliefs[:, 0] - lone.beliefs[:, 0])) < 1e-9
    # the empty layer only sees its prior and the symmetric field
    assert np.allclose(cons.beliefs[:, 1], 0.5, atol=1e-6)


def test_single_pair_schedule_leaves_other_layer_frozen():
    aff = BenchmarkAffinity.from_degree(6.0, 0.2)
    net, _ = generate_multiplex_wpp(three_layer_structure(45), aff, rng_seed=1)
    params = aff.to_params(5, 45)
    cfg = BpConfig(t_max=2, rng_seed=9, n_sample=0.1, check_weights=(0.2, 0.8), pair_sweeps=2)
    s0 = init_state(net, params, cfg, "constrained")
    before = s0.beliefs[:, 2].copy()
    msgs_before = s0.msg[slice(*s0.layer_slots(2))].copy()
    r = run_multilayer_alternating(net, params, cfg, pair_schedule=[(0, 1)], state=s0)
    assert np.array_equal(r.beliefs[:, 2], before)
    assert np.array_equal(s0.msg[slice(*s0.layer_slots(2))], msgs_before)
    assert not np.array_equal(r.beliefs[:, 0], init_state(net, params, cfg, "constrained").beliefs[:, 0])
    with pytest.raises(ValueError):
        run_multilayer_alternating(net.select_layers([0, 1]), params, cfg)


def test_mmap_ties_take_lowest_label():
    b = np.array([[[0.5, 0.5]], [[0.2, 0.8]]])
    assert mmap_labels(b).t.tolist() == [[1], [2]]


def _tree_instances(count, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        N = int(rng.integers(3, 5))
        edges = []
        for _ in range(2):
            perm = rng.permutation(N)
            pairs = {tuple(sorted((int(perm[a]), int(perm[rng.integers(0, a)])))) for a in range(1, N) if rng.random() < 0.7}
            edges.append(np.array(sorted(pairs), dtype=int).reshape(-1, 2))
        n1 = rng.uniform(0.55, 0.8)
        c = rng.uniform(0.02, 0.4, (2, 2))
        yield N, edges, (c + c.T) / 2, np.array([n1, 1 - n1])


@pytest.mark.parametrize("weights", [(0.5, 0.5), (0.4, 0.6)])
def test_exact_marginals_on_sparse_trees(weights):
    for k, (N, edges, c, n) in enumerate(_tree_instances(8, seed=int(weights[1] * 10))):
        exact = exact_marginals(N, edges, c, n, weights)
        r = run(MultiplexNetwork(N, edges), SbmParams(q=2, n=n, c=c, N=N), "constrained",
                BpConfig(t_max=500, conv_tol=1e-10, check_weights=weights, rng_seed=k, init_noise=0.1))
        assert np.allclose(r.beliefs.sum(axis=-1), 1.0)
        if r.converged:
            assert np.max(np.abs(r.beliefs - exact)) <= 0.05
