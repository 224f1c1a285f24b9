import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sparsediff.diffusion import (DriftSpec, NoiseSource, brownian, build_interaction, free_drift, kuramoto,
                                  kuramoto_unnormalized, integrate_batch, perturb_marks_gap, simulate,
                                  simulate_truncated)
from sparsediff.errors import InstabilityError
from sparsediff.graph_models import (Deterministic, Graph, Poisson, path_graph, sample_erdos_renyi,
                                     sample_gw_tree)
from sparsediff.network import (Const, MarkLaws, MarkedNetwork, Normal, Uniform, attach_iid_marks,
                                rooted_ball_network)

LAWS = MarkLaws(Uniform(0.5, 1.5), Normal(0, 1), Uniform(-math.pi, math.pi))


def marked(g, seed=0, laws=LAWS):
    return attach_iid_marks(g, laws, seed)


# ------------------------------------------------------------ interaction

def test_interaction_star():
    star = MarkedNetwork.build(Graph.from_edges(4, [[0, 1], [0, 2], [0, 3]]))
    P = build_interaction(star).to_dense()
    assert np.allclose(P[1:, 0], 1 / 3, rtol=0, atol=1e-15)
    assert np.all(P[0, 1:] == 1.0)


def test_interaction_isolated_vertex_masked():
    net = MarkedNetwork.build(Graph.from_edges(3, [[0, 1]]))
    P = build_interaction(net)
    assert P.isolated_mask.tolist() == [False, False, True]
    assert np.all(P.to_dense()[:, 2] == 0)


@given(st.integers(0, 2**63))
def test_interaction_column_sums(seed):
    net = marked(sample_erdos_renyi(50, 0.05, seed), seed)
    P = build_interaction(net)
    cs = P.column_sums()
    # direct summation oracle: sum_u mu_uv / mu_v over neighbours
    dense = np.zeros((50, 50))
    for (u, v), w in zip(net.graph.edges(), net.edge_weights()):
        dense[u, v] = dense[v, u] = w
    mu = dense.sum(axis=0)
    want = np.where(mu > 0, 1.0, 0.0)
    assert np.max(np.abs(cs - want)) < 1e-12
    with np.errstate(invalid="ignore", divide="ignore"):
        ref = np.where(mu > 0, dense / mu, 0.0)
    assert np.max(np.abs(P.to_dense() - ref)) < 1e-15


# ------------------------------------------------------------ simulate

def test_free_drift_is_linear():
    net = marked(sample_erdos_renyi(30, 0.1, 1), 1)
    ens = simulate(net, free_drift(0.0), 2.0, 0.01, NoiseSource(0))
    assert np.max(np.abs(ens.final - (net.theta0 + 2.0 * net.omega))) < 1e-12
    assert np.array_equal(ens.paths[0], net.theta0)
    assert ens.times.size == 201 and ens.times[-1] == pytest.approx(2.0)


def _two_vertex():
    return MarkedNetwork.build(path_graph(2), [1.0], [0.0, 0.0], [0.0, 1.0])


def _delta_exact(t, d0=1.0):
    # closed form of D' = -2 sin D:  tan(D/2) = tan(D0/2) exp(-2t)
    return 2 * math.atan(math.tan(d0 / 2) * math.exp(-2 * t))


def test_two_vertex_kuramoto_matches_ode():
    ens = simulate(_two_vertex(), kuramoto(0.0), 5.0, 1e-4, NoiseSource(0), record_every=100)
    gap = ens.paths[:, 1] - ens.paths[:, 0]
    exact = np.array([_delta_exact(t) for t in ens.times])
    assert np.max(np.abs(gap - exact)) < 1e-3
    assert abs(gap[-1] - _delta_exact(5.0)) < 1e-3


def test_single_vertex_noise_variance():
    net = MarkedNetwork.build(Graph.from_edges(1, []))
    finals = np.array([simulate(net, brownian(1.0), 1.0, 0.01, NoiseSource(s), record=[0]).final[0]
                       for s in range(10_000)])
    assert 0.94 <= finals.var(ddof=1) <= 1.06


def test_noise_increments_standard_normal_per_step():
    ids = np.arange(100_000)
    inc = NoiseSource(3).increments(ids, 7, 0.25)
    assert abs(inc.var() - 0.25) < 0.25 * 5 * math.sqrt(2 / ids.size)
    fine = NoiseSource(3).increments(ids, 14, 0.125) + NoiseSource(3).increments(ids, 15, 0.125)
    coarse = NoiseSource(3, substeps=2).increments(ids, 7, 0.25)
    assert np.allclose(coarse, fine, rtol=0, atol=1e-14)


def test_determinism_and_generic_path_agree():
    net = marked(sample_erdos_renyi(80, 0.04, 2), 2)
    a = simulate(net, kuramoto(), 1.0, 0.01, NoiseSource(9))
    b = simulate(net, kuramoto(), 1.0, 0.01, NoiseSource(9))
    assert np.array_equal(a.paths, b.paths)
    c = simulate(net, kuramoto(), 1.0, 0.01, NoiseSource(9), debug=True)
    assert np.max(np.abs(a.paths - c.paths)) < 1e-12
    u = simulate(net, kuramoto_unnormalized(2.0, 0.3), 1.0, 0.01, NoiseSource(9))
    v = simulate(net, kuramoto_unnormalized(2.0, 0.3), 1.0, 0.01, NoiseSource(9), debug=True)
    assert np.max(np.abs(u.paths - v.paths)) < 1e-12


def test_custom_drift_and_drift_bound_assertion():
    net = marked(path_graph(6), 3)
    d = DriftSpec(phi=lambda tu, tv, wv, wu: np.tanh(tu - tv), psi=lambda t, w: -0.5 * np.sin(t),
                  phi_lip=1, phi_sup=1, psi_lip=0.5, fast=None, name="tanh")
    ens = simulate(net, d, 0.5, 0.01, NoiseSource(1), debug=True)
    assert np.all(np.isfinite(ens.paths))
    lying = d.replace(phi=lambda tu, tv, wv, wu: 5 * np.tanh(tu - tv))
    with pytest.raises(AssertionError):
        simulate(net, lying, 0.5, 0.01, NoiseSource(1), debug=True)


def test_instability_guard_and_bad_horizons():
    net = MarkedNetwork.build(Graph.from_edges(1, []), omega=[1e6])
    with pytest.raises(InstabilityError) as err:
        simulate(net, free_drift(0.0), 1.0, 0.01, NoiseSource(0), guard=1e5)
    assert err.value.step == 11
    with pytest.raises(ValueError):
        simulate(net, free_drift(0.0), 0.0, 0.01, NoiseSource(0))
    with pytest.raises(ValueError):
        simulate(net, free_drift(0.0), 1.0, -0.1, NoiseSource(0))


def test_unnormalized_batch_matches_single_runs():
    net = marked(sample_gw_tree(Poisson(2), Poisson(2), 5, 4).graph, 4)
    Ks = [0.0, 1.5, 4.0]
    _, out = integrate_batch(net, kuramoto_unnormalized(1.0), 1.0, 0.01, NoiseSource(2), couplings=Ks)
    for j, K in enumerate(Ks):
        single = simulate(net, kuramoto_unnormalized(K), 1.0, 0.01, NoiseSource(2))
        assert np.array_equal(out[:, :, j], single.paths)


# ------------------------------------------------------------ truncation

def test_truncation_whole_component_is_bitwise():
    net = marked(sample_gw_tree(Poisson(2), Poisson(2), 5, 11).graph, 11)
    full = simulate(net, kuramoto(), 1.0, 0.01, NoiseSource(5))
    tr = simulate_truncated(net, 0, 10, kuramoto(), 1.0, 0.01, NoiseSource(5))
    assert np.array_equal(tr.paths, full.paths)


def test_truncation_radius_zero_is_free_path():
    net = marked(path_graph(5), 2)
    tr = simulate_truncated(net, 2, 0, kuramoto(), 1.0, 0.01, NoiseSource(5))
    alone = MarkedNetwork.build(Graph.from_edges(1, []), None, [net.omega[2]], [net.theta0[2]], [2])
    ref = simulate(alone, free_drift(), 1.0, 0.01, NoiseSource(5))
    assert np.array_equal(tr.paths, ref.paths)


def test_noise_coupling_in_subnetworks():
    net = marked(sample_erdos_renyi(60, 0.05, 3), 3)
    sub = rooted_ball_network(net, 0, 2).network
    a = simulate(net, brownian(), 0.3, 0.01, NoiseSource(8))
    b = simulate(sub, brownian(), 0.3, 0.01, NoiseSource(8))
    cols = {int(i): j for j, i in enumerate(a.ids)}
    assert np.array_equal(b.paths, a.paths[:, [cols[int(i)] for i in b.ids]])


def test_truncation_gaps_decay_on_regular_tree():
    t = sample_gw_tree(Deterministic(2), Deterministic(3), 8, 0)
    wins = 0
    for s in range(20):
        net = marked(t.graph, s)
        runs = {r: simulate_truncated(net, 0, r, kuramoto(), 1.0, 0.01, NoiseSource(s), record=[0])
                for r in (3, 6, 8)}
        g36 = np.max(np.abs(runs[3].paths - runs[6].paths))
        g68 = np.max(np.abs(runs[6].paths - runs[8].paths))
        wins += g36 > g68
    assert wins >= 18


def test_permutation_equivariance_without_interaction():
    g = sample_erdos_renyi(40, 0.08, 1)
    net = marked(g, 1)
    base = simulate(net, free_drift(0.0), 1.0, 0.01, NoiseSource(0))
    rng = np.random.default_rng(0)
    for _ in range(10):
        perm = rng.permutation(g.n)  # new label of old vertex v is perm[v]
        inv = np.argsort(perm)
        pg = Graph.from_edges(g.n, np.sort(perm[g.edges()], axis=1))
        pw = [net.weight(inv[u], inv[v]) for u, v in pg.edges()]
        pnet = MarkedNetwork.build(pg, pw, net.omega[inv], net.theta0[inv])
        ens = simulate(pnet, free_drift(0.0), 1.0, 0.01, NoiseSource(0))
        assert np.array_equal(ens.paths[:, perm], base.paths)


def test_dt_halving_strong_order_one():
    net = _two_vertex()
    drift = kuramoto(1.0)
    ratios = []
    for s in range(10):
        sol = {}
        for m in (1, 2, 4):
            dt = 0.01 / m
            sol[m] = simulate(net, drift, 1.0, dt, NoiseSource(s, substeps=4 // m), record_every=m).paths
        ratios.append((np.max(np.abs(sol[1] - sol[2])), np.max(np.abs(sol[2] - sol[4]))))
    r = np.array(ratios)
    factor = r[:, 0].mean() / r[:, 1].mean()
    assert 1.5 <= factor <= 2.5


# ------------------------------------------------------------ perturbations

def test_perturb_marks_gap_examples():
    net = marked(sample_erdos_renyi(30, 0.1, 2), 2)
    assert perturb_marks_gap(net, 0.0, kuramoto(), 1.0, 0.01, NoiseSource(1)) == 0.0
    one = MarkedNetwork.build(Graph.from_edges(1, []), None, [0.3], [0.0])
    gap = perturb_marks_gap(one, 1e-3, free_drift(), 2.0, 0.01, NoiseSource(1), kinds=("media",), mode="shift")
    assert gap == pytest.approx(2e-3, rel=1e-9)


def test_perturb_marks_gap_linear_in_eps():
    ok = 0
    for s in range(50):
        net = marked(sample_erdos_renyi(30, 0.1, s), s)
        g1 = perturb_marks_gap(net, 1e-4, kuramoto(), 1.0, 0.01, NoiseSource(s), seed=s)
        g2 = perturb_marks_gap(net, 2e-4, kuramoto(), 1.0, 0.01, NoiseSource(s), seed=s)
        ok += g2 / g1 <= 4
    assert ok >= 45
