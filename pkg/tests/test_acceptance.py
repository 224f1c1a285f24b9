"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict that is printed in the terminal summary
(and immediately, when run with ``-s``).  Criteria 5 to 8 are long; run them
alone with ``pytest tests/test_acceptance.py -v``.
"""
import math
import os
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from conftest import ACCEPTANCE_LINES
from sparsediff.cli import run as cli_run
from sparsediff.diffusion import NoiseSource, brownian, kuramoto, simulate
from sparsediff.graph_models import Deterministic, Graph, Poisson, path_graph, poisson_tv, sample_erdos_renyi, sample_gw_tree
from sparsediff.hydrodynamics import (GraphModel, PathFunctional, chaos_factorization, concentration_scan,
                                      convergence_study)
from sparsediff.kuramoto_experiments import SyncConfig, all_regimes, high_sync_region, phase_diagram
from sparsediff.locality import carne_varopoulos_audit, fit_envelope, gronwall_check, harvest_gronwall_system, locality_experiment
from sparsediff.measures import tv_distance
from sparsediff.network import MarkLaws, MarkedNetwork, Normal, Uniform, attach_iid_marks, empirical_neighborhood, star_signature

LAWS = MarkLaws(Uniform(0.5, 1.5), Normal(0.0, 1.0), Uniform(-math.pi, math.pi))
TANH_T = PathFunctional((3,), (1.0,), (0.0,), "tanh(theta_T)")

pytestmark = pytest.mark.slow


def report(k, ok, detail):
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print("\n" + line)
    assert ok, line


def random_tree(n, rng):
    parents = [int(rng.integers(0, v)) for v in range(1, n)]
    return Graph.from_edges(n, [[p, v] for v, p in zip(range(1, n), parents)])


def test_criterion_1_carne_varopoulos_audit():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst, checked = math.inf, 0
    for i in range(50):
        n = int(rng.integers(3, 31))
        g = random_tree(n, rng) if i % 2 == 0 else sample_erdos_renyi(n, 0.25, 100 + i)
        if np.any(g.degrees() == 0):
            g = random_tree(n, rng)
        net = MarkedNetwork.build(g, rng.uniform(0.5, 2.0, g.edge_count))
        for s in (0.2, 0.5, 1.0):
            rows = carne_varopoulos_audit(net, s)
            checked += len(rows)
            worst = min([worst] + [r.slack for r in rows])
    dt = time.perf_counter() - t0
    report(1, worst >= -1e-9 and dt < 60,
           f"{checked} pairs, min slack {worst:.3e} (>= -1e-9), {dt:.1f} s (< 60)")


def test_criterion_2_gronwall():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    t = np.linspace(0, 1, 5001)
    worst = 0.0
    bad = 0
    for _ in range(20):
        n = int(rng.integers(2, 7))
        M = rng.uniform(0, 1, (n, n)) * (rng.uniform(size=(n, n)) < 0.6)
        a0, b = rng.uniform(0, 1, n), rng.uniform(0, 1, n)
        # u' = M u + b with u(0) = a(0): equality in the integral form
        sol = solve_ivp(lambda s, y: M @ y + b, (0, 1), a0, method="DOP853", t_eval=t, rtol=1e-13, atol=1e-14)
        res = gronwall_check(t, sol.y.T, a0 + np.outer(t, b), M, slack=1e-8)
        bad += int(not res.ok)
        worst = max(worst, res.max_violation)
    harvested = 0
    tree = sample_gw_tree(Deterministic(2), Deterministic(3), 7, 0).graph
    for seed in range(5):
        for r in (2, 3, 4):
            net = attach_iid_marks(tree, LAWS, seed)
            tt, u, a, M = harvest_gronwall_system(net, 0, r, kuramoto(), 1.0, 0.01, seed)
            res = gronwall_check(tt, u, a, M, slack=1e-8, quadrature="left")
            bad += int(not res.ok)
            worst = max(worst, res.max_violation)
            harvested += 1
    dt = time.perf_counter() - t0
    report(2, bad == 0 and dt < 60,
           f"20 synthetic + {harvested} harvested systems, {bad} violating, "
           f"max violation {worst:.2e}, {dt:.1f} s (< 60)")


def test_criterion_3_locality_decay():
    t0 = time.perf_counter()
    tree = sample_gw_tree(Deterministic(2), Deterministic(3), 10, 0).graph
    radii = [3, 5, 7, 9]
    gaps, bsizes = [], None
    for seed in range(20):
        net = attach_iid_marks(tree, LAWS, seed)
        rep = locality_experiment(net, 0, 0, radii, kuramoto(), 1.0, 1e-3, seed, reference_radius=10)
        gaps.append(rep.gaps)
        bsizes = rep.boundary_sizes
    gaps = np.array(gaps)
    med = np.median(gaps, axis=0)
    dec = bool(np.all(np.diff(med) < 0))
    ratio = med[-1] / med[0]
    # one constant for all radii, fitted on the first ten seeds, checked on all twenty
    C, _ = fit_envelope(radii, gaps[:10].max(axis=0), bsizes)
    env = np.array(fit_envelope(radii, [1.0] * 4, bsizes)[1]) * C
    dominated = bool(np.all(gaps <= env[None, :]))
    dt = time.perf_counter() - t0
    report(3, dec and ratio < 1e-2 and dominated and dt < 600,
           f"median gaps {np.array2string(med, precision=2)}, gap(9)/gap(3) = {ratio:.2e}, "
           f"envelope C = {C:.3g} dominates all: {dominated}, {dt:.0f} s (< 600)")


def test_criterion_4_er_local_structure():
    t0 = time.perf_counter()
    n = 10_000
    pred = {star_signature(k): float(Poisson(2).pmf(k)) for k in range(30)}
    tv_deg, tv_shape = [], []
    for s in range(20):
        g = sample_erdos_renyi(n, 2 / n, s)
        tv_deg.append(poisson_tv(g.degrees(), 2.0))
        tv_shape.append(tv_distance(empirical_neighborhood(g, 1), pred))
    dt = time.perf_counter() - t0
    a, b = float(np.mean(tv_deg)), float(np.mean(tv_shape))
    report(4, a < 0.02 and b < 0.05 and dt < 120,
           f"mean TV degree/Poisson(2) {a:.4f} (max {max(tv_deg):.4f}) < 0.02, "
           f"depth-1 shape TV {b:.4f} < 0.05, {dt:.0f} s (< 120)")


def test_criterion_5_hydrodynamic_convergence():
    t0 = time.perf_counter()
    tab = convergence_study(GraphModel(), [200, 800, 3200], GraphModel(family="gw", depth=12),
                            replications=10, seed=505, limit_size=4000)
    _, w1, se = tab.series("w1")
    ok = all(w1[i + 1] <= w1[i] + se[i + 1] for i in range(2))
    dt = time.perf_counter() - t0
    report(5, ok and dt < 1800,
           f"W1 {np.array2string(w1, precision=4)} +- {np.array2string(se, precision=4)} "
           f"nonincreasing within 1 SE, {dt:.0f} s (< 1800)")


def test_criterion_6_concentration():
    t0 = time.perf_counter()
    res = concentration_scan(GraphModel(), [250, 1000], 100, TANH_T, r=1, seed=606, mode="noise")
    ratio = res[0].std / res[1].std
    dt = time.perf_counter() - t0
    report(6, 1.6 <= ratio <= 2.6 and dt < 1200,
           f"std {res[0].std:.5f} (n=250) / {res[1].std:.5f} (n=1000) = {ratio:.3f} in [1.6, 2.6], {dt:.0f} s (< 1200)")


def test_criterion_7_propagation_of_chaos():
    # design fixed from a pilot on a different seed: covariances near 1e-3,
    # 2.5e-4 and 5e-5 with stderr about 7e-5 at 3000 x 2000 root pairs
    t0 = time.perf_counter()
    est = [chaos_factorization(GraphModel(), n, TANH_T, TANH_T, 3000, seed=707, pairs_per_rep=2000)
           for n in (200, 800, 3200)]
    c = [e.estimate for e in est]
    dec = c[0] > c[1] > c[2]
    near0 = c[2] <= 2 * est[2].stderr
    dt = time.perf_counter() - t0
    report(7, dec and near0 and dt < 1800,
           "|cov| " + ", ".join(f"{e.estimate:.2e} (se {e.stderr:.1e})" for e in est)
           + f", decreasing {dec}, n=3200 within 2 se {near0}, {dt:.0f} s (< 1800)")


def test_criterion_8_sync_surfaces_reduced_preset():
    workers = os.cpu_count() or 1
    t0 = time.perf_counter()
    surfaces = {}
    for model in ("binomial", "dregular"):
        for cfg in all_regimes(SyncConfig(model=model).reduced()):
            surfaces[(model, cfg.theta0_mode, cfg.omega_mode)] = phase_diagram(cfg, 808, workers)
    dt = time.perf_counter() - t0
    parts, ok = [], dt < 3600
    for model in ("binomial", "dregular"):
        s = surfaces[(model, "zero", "one")]
        cols = s.K_values >= 2
        root_wins = bool(np.all(s.mean[0, cols] > s.mean[12, cols]))
        ok &= root_wins
        limit = 4 if model == "binomial" else 2
        regions = {f"{a}/{b}": high_sync_region(v) for (m, a, b), v in surfaces.items() if m == model}
        confined = [k for k, v in regions.items() if v is not None and v <= limit]
        ok &= bool(confined)
        parts.append(f"{model}: h=1 > h=13 for K>=2 {root_wins}; max h with <Sync> > 0.8 per regime "
                     f"{regions}; confined to h<={limit} in {confined or 'none'}")
    report(8, ok, "; ".join(parts) + f"; reduced preset {dt / 60:.1f} min (< 60) on {workers} worker(s)")


def _two_vertex_oracle(T):
    sol = solve_ivp(lambda t, y: [-2.0 * math.sin(y[0])], (0, T), [1.0], method="DOP853",
                    rtol=1e-12, atol=1e-14, dense_output=True)
    return sol.sol


CLI_CASES = {
    "sample-graph": '[graph]\nmodel = "gw"\ndepth = 8\noffspring = {kind = "poisson", c = 2.0}\n',
    "simulate": '[graph]\nmodel = "erdos_renyi"\nn = 100\nmean_degree = 2.0\n[simulate]\nT = 0.5\n',
    "locality": ('[graph]\nmodel = "gw"\ndepth = 6\noffspring = {kind = "deterministic", d = 2}\n'
                 'root_offspring = {kind = "deterministic", d = 3}\n'
                 '[locality]\nradii = [1, 2, 3, 4]\nT = 0.5\ndt = 0.01\n'),
    "converge": '[converge]\ndepth = 6\nsizes = [100, 200]\nreplications = 4\nlimit_size = 400\n',
    "phase-diagram": ('[phase-diagram]\nmodel = "binomial"\ngenerations = 4\nT = 2.0\n'
                      'K_max = 2.0\nK_step = 1.0\nreplications = 4\n'),
}


def test_criterion_9_solver_correctness(tmp_path):
    net = MarkedNetwork.build(path_graph(2), 1.0, omega=[0.0, 0.0], theta0=[0.0, 1.0])
    ens = simulate(net, kuramoto(0.0), 5.0, 1e-4, NoiseSource(0), record_every=100)
    ode = _two_vertex_oracle(5.0)
    err = float(np.max(np.abs(ens.paths[:, 1] - ens.paths[:, 0] - ode(ens.times)[0])))

    single = MarkedNetwork.build(Graph.from_edges(1, []))
    finals = np.array([simulate(single, brownian(1.0), 1.0, 0.01, NoiseSource(s), record=[0]).final[0]
                       for s in range(10_000)])
    var = float(finals.var(ddof=1))

    mismatched = []
    for cmd, conf in CLI_CASES.items():
        p = tmp_path / f"{cmd}.toml"
        p.write_text(conf)
        outs = []
        for k, w in enumerate((1, 1, 4)):
            od = tmp_path / f"{cmd}-{k}"
            assert cli_run([cmd, "--config", str(p), "--out", str(od), "--seed", "909", "--workers", str(w)]) == 0
            outs.append({f.name: f.read_bytes() for f in od.iterdir() if f.name != "manifest.json"})
        if not (outs[0] and outs[0] == outs[1] == outs[2]):
            mismatched.append(cmd)
    ok = err < 1e-3 and 0.94 <= var <= 1.06 and not mismatched
    report(9, ok, f"two-vertex max error vs DOP853 {err:.2e} (< 1e-3); Var theta(1) = {var:.4f} "
                  f"in [0.94, 1.06]; subcommands not reproducible under workers 1/1/4: {mismatched or 'none'}")
