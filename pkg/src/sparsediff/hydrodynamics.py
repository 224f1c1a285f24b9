"""Trajectory measures, finite-n versus limit comparisons, concentration of
neighbourhood averages and propagation-of-chaos factorization."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import stats

from ._parallel import pmap
from .diffusion import DriftSpec, NoiseSource, TrajectoryEnsemble, integrate_batch, kuramoto
from .graph_models import (Deterministic, Graph, OffspringLaw, Poisson, disjoint_union, path_graph,
                           sample_cycle, sample_erdos_renyi, sample_gw_tree, sample_random_regular)
from .measures import EmpiricalMeasure
from .network import (Const, MarkedNetwork, MarkLaws, Normal, Uniform, attach_iid_marks,
                      rooted_ball_network)
from .seeding import derive_seed, rng_for

BOOTSTRAP = 500


# ---------------------------------------------------------------------------
# Path measures and test functions


def trajectory_measure(ens: TrajectoryEnsemble, time_idx=None) -> EmpiricalMeasure:
    """Uniform measure over the recorded vertices' paths at ``time_idx``."""
    idx = np.arange(ens.times.size) if time_idx is None else np.asarray(time_idx)
    return EmpiricalMeasure.uniform(ens.paths[idx, :].T)


@dataclass(frozen=True)
class PathFunctional:
    """``scale * prod_j tanh(a_j (x[c_j] - b_j))`` on discretized paths ``x``.

    With the sup norm on paths, |prod| <= 1 and its Lipschitz constant is at
    most sum_j a_j, so ``scale = 1 / (1 + sum a_j)`` gives BL norm <= 1.
    """

    coords: tuple
    a: tuple
    b: tuple
    name: str = ""

    @property
    def scale(self) -> float:
        return 1.0 / (1.0 + float(sum(self.a)))

    @property
    def bl_norm(self) -> float:
        return self.scale * (1.0 + float(sum(self.a)))

    def __call__(self, atoms) -> np.ndarray:
        x = np.atleast_2d(np.asarray(atoms, dtype=float))
        out = np.full(x.shape[0], self.scale)
        for c, a, b in zip(self.coords, self.a, self.b):
            out = out * np.tanh(a * (x[:, c] - b))
        return out


@dataclass(frozen=True)
class ConstantFunctional:
    c: float = 0.5
    name: str = "const"

    def __call__(self, atoms):
        return np.full(np.atleast_2d(atoms).shape[0], float(self.c))


def build_dictionary(n_coords: int = 4, scales=(0.5, 1.0, 2.0), shifts=(0.0, 1.0),
                     n_products: int = 8) -> list:
    """Sigmoids at every coordinate for each (scale, shift), plus products of
    unit-scale sigmoids at pairs of coordinates (32 entries by default)."""
    out = []
    for c in range(n_coords):
        for a in scales:
            for b in shifts:
                out.append(PathFunctional((c,), (float(a),), (float(b),), f"tanh[{c}]a{a}b{b}"))
    pairs = [(i, j) for d in range(1, n_coords) for i in range(n_coords - d) for j in (i + d,)]
    pairs = (pairs * (n_products // max(len(pairs), 1) + 1))[:n_products] if pairs else []
    for k, (i, j) in enumerate(pairs):
        b = float(shifts[k % len(shifts)])
        out.append(PathFunctional((i, j), (1.0, 1.0), (b, b), f"prod[{i},{j}]b{b}"))
    return out


def bl_lower_bound(mu: EmpiricalMeasure, nu: EmpiricalMeasure, dictionary) -> float:
    """max over the dictionary of |mu(h) - nu(h)|, a lower bound on d_BL."""
    A, B = np.asarray(mu.atoms, float), np.asarray(nu.atoms, float)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ValueError("atom shapes differ")
    best = 0.0
    for h in dictionary:
        best = max(best, abs(float(np.dot(h(A), mu.masses)) - float(np.dot(h(B), nu.masses))))
    return best


def wasserstein1_1d(a, b) -> float:
    """Exact W1 between two empirical laws on the line (any sample sizes)."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    return float(stats.wasserstein_distance(a, b))


def bootstrap_se(values, stat=np.mean, n_boot: int = BOOTSTRAP, seed: int = 0) -> float:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return math.nan
    rng = rng_for(seed, "bootstrap", v.size)
    idx = rng.integers(0, v.size, size=(n_boot, v.size))
    return float(np.std([stat(v[i]) for i in idx], ddof=1))


# ---------------------------------------------------------------------------
# Models


def _default_marks():
    return MarkLaws(Uniform(0.5, 1.5), Normal(0.0, 1.0), Uniform(-math.pi, math.pi))


@dataclass(frozen=True)
class GraphModel:
    """A graph family with i.i.d. marks and a drift.

    ``family``: ``erdos_renyi`` (p = mean_degree / n), ``random_regular``
    (d = mean_degree), ``cycle``, or one of the rooted limit objects ``gw``
    (offspring ``law``, root offspring ``root_law``, truncated at ``depth``)
    and ``line`` (the path of 2 depth + 1 vertices rooted at its middle).
    For rooted families a sample "of size n" is n independent rooted copies.
    """

    family: str = "erdos_renyi"
    mean_degree: float = 2.0
    law: OffspringLaw = field(default_factory=lambda: Poisson(2.0))
    root_law: OffspringLaw | None = None
    depth: int = 12
    marks: MarkLaws = field(default_factory=_default_marks)
    drift: DriftSpec = field(default_factory=kuramoto)
    T: float = 1.0
    dt: float = 0.01
    n_time_points: int = 4

    @property
    def rooted(self) -> bool:
        return self.family in ("gw", "line")

    def config_hash(self) -> str:
        return hashlib.blake2b(repr(self).encode(), digest_size=8).hexdigest()

    def record_every(self) -> int:
        n_steps = int(round(self.T / self.dt))
        if n_steps % self.n_time_points:
            raise ValueError("number of steps must be divisible by n_time_points")
        return n_steps // self.n_time_points

    def sample_graph(self, n: int, seed: int) -> Graph:
        if self.family == "erdos_renyi":
            return sample_erdos_renyi(n, min(1.0, self.mean_degree / n), seed)
        if self.family == "random_regular":
            return sample_random_regular(n, int(self.mean_degree), seed)
        if self.family == "cycle":
            return sample_cycle(n)
        raise ValueError(f"{self.family} is a rooted family")

    def sample_rooted(self, i: int, seed: int) -> Graph:
        if self.family == "gw":
            return sample_gw_tree(self.law, self.root_law or self.law, self.depth,
                                  derive_seed(seed, "tree", i)).graph
        if self.family == "line":
            g = path_graph(2 * self.depth + 1)
            # relabel so that the middle vertex is 0
            perm = np.roll(np.arange(g.n), -self.depth)
            inv = np.argsort(perm)
            return Graph.from_edges(g.n, np.sort(inv[g.edges()], axis=1))
        raise ValueError(f"{self.family} is not a rooted family")


def _simulate_paths(net: MarkedNetwork, model: GraphModel, seed: int, record=None):
    """Paths at the model's time points, shape (len(record), n_time_points + 1)."""
    _, out = integrate_batch(net, model.drift, model.T, model.dt,
                             NoiseSource(derive_seed(seed, "noise")),
                             record=record, record_every=model.record_every())
    return out[:, :, 0].T


def finite_sample(model: GraphModel, n: int, seed: int):
    """Sample G_n with marks, simulate, return paths of all vertices."""
    g = model.sample_graph(n, seed)
    net = attach_iid_marks(g, model.marks, derive_seed(seed, "marks"))
    return _simulate_paths(net, model, seed)


def _rooted_batch(task):
    model, seed, lo, hi, offset = task
    gs = [model.sample_rooted(i, seed) for i in range(lo, hi)]
    g, offs = disjoint_union(gs)
    ids = offset + np.arange(g.n, dtype=np.int64)
    net = attach_iid_marks(g, model.marks, derive_seed(seed, "marks"), ids=ids)
    return _simulate_paths(net, model, seed, record=offs[:-1])


def rooted_sample(model: GraphModel, count: int, seed: int, workers: int = 1,
                  batch_vertices: int = 1_000_000):
    """Root paths of ``count`` independent rooted copies (trees or lines).

    Copies are packed into disjoint unions of about ``batch_vertices``
    vertices.  Global vertex ids are cumulative, so marks and noise do not
    depend on the batching or the worker count.
    """
    tasks, lo, size, offset = [], 0, 0, 0
    sizes = [model.sample_rooted(i, seed).n for i in range(count)]
    for i, s in enumerate(sizes):
        size += s
        if size >= batch_vertices or i == count - 1:
            tasks.append((model, seed, lo, i + 1, offset))
            offset += size
            lo, size = i + 1, 0
    if offset >= 2**32:
        raise ValueError("rooted ensemble too large for 32-bit vertex identities")
    return np.vstack(pmap(_rooted_batch, tasks, workers))


# ---------------------------------------------------------------------------
# Convergence study


@dataclass
class StudyRow:
    n: int
    statistic: str
    estimate: float
    stderr: float
    config_hash: str


@dataclass
class ConvergenceTable:
    rows: list
    limit_size: int
    seeds: dict
    meta: dict = field(default_factory=dict)

    def series(self, statistic: str):
        r = [x for x in self.rows if x.statistic == statistic]
        return [x.n for x in r], np.array([x.estimate for x in r]), np.array([x.stderr for x in r])


def _finite_task(task):
    model, n, seed = task
    if model.rooted:
        return rooted_sample(model, n, seed)
    return finite_sample(model, n, seed)


def convergence_study(model: GraphModel, sizes, limit: GraphModel, replications: int,
                      seed: int, limit_size: int = 2000, compute_floor: bool = False,
                      workers: int = 1, dictionary=None) -> ConvergenceTable:
    """Distances between the finite-n empirical path measure L_n and the limit law.

    For each n and replication a fresh G_n (graph, marks, noise) is drawn and
    compared with one shared limit ensemble of ``limit_size`` root paths.
    Statistics: ``w1`` (Wasserstein-1 of the time-T marginals) and ``bl``
    (dictionary lower bound on the path measures); with ``compute_floor`` also
    ``w1_floor``, the W1 distance of an independent limit sample of the same
    size, i.e. the Monte Carlo noise floor.
    """
    dictionary = dictionary or build_dictionary(model.n_time_points)
    lim_seed = derive_seed(seed, "limit")
    lim = rooted_sample(limit, limit_size, lim_seed, workers)
    lim_mu = EmpiricalMeasure.uniform(lim[:, 1:])
    tasks = [(model, int(n), derive_seed(seed, "finite", int(n), k))
             for n in sizes for k in range(replications)]
    results = pmap(_finite_task, tasks, workers)
    if compute_floor:
        ftasks = [(limit, int(n), derive_seed(seed, "floor", int(n), k))
                  for n in sizes for k in range(replications)]
        floors = pmap(_finite_task, ftasks, workers)
    rows, h = [], model.config_hash()
    seeds = {f"{n}/{k}": s for (_, n, s), k in zip(tasks, [k for _ in sizes for k in range(replications)])}
    seeds["limit"] = lim_seed
    for i, n in enumerate(sizes):
        block = results[i * replications:(i + 1) * replications]
        w1 = [wasserstein1_1d(p[:, -1], lim[:, -1]) for p in block]
        bl = [bl_lower_bound(EmpiricalMeasure.uniform(p[:, 1:]), lim_mu, dictionary) for p in block]
        bs = derive_seed(seed, "boot", int(n))
        rows.append(StudyRow(int(n), "w1", float(np.mean(w1)), bootstrap_se(w1, seed=bs), h))
        rows.append(StudyRow(int(n), "bl", float(np.mean(bl)), bootstrap_se(bl, seed=bs), h))
        if compute_floor:
            fb = floors[i * replications:(i + 1) * replications]
            fl = [wasserstein1_1d(p[:, -1], lim[:, -1]) for p in fb]
            rows.append(StudyRow(int(n), "w1_floor", float(np.mean(fl)), bootstrap_se(fl, seed=bs), h))
    return ConvergenceTable(rows, limit_size, seeds,
                            {"graph_resampling": "per replication", "limit": repr(limit)})


# ---------------------------------------------------------------------------
# Concentration of neighbourhood averages


@dataclass
class ConcentrationResult:
    n: int
    std: float
    ci: tuple
    values: np.ndarray


def neighbourhood_average(net: MarkedNetwork, r: int, model: GraphModel, h, noise_seed: int) -> float:
    """U^(r)(h) = (1/n) sum_v h(path of v in the system on its own r-ball).

    All r-balls are simulated together as a disjoint union; every copy keeps
    the global ids of its vertices, so each ball sees the parent's noise.
    """
    balls = [rooted_ball_network(net, v, r) for v in range(net.n)]
    g, offs = disjoint_union([b.network.graph for b in balls])
    union = MarkedNetwork(g, np.concatenate([b.network.slot_weight for b in balls]),
                          np.concatenate([b.network.omega for b in balls]),
                          np.concatenate([b.network.theta0 for b in balls]),
                          np.concatenate([b.network.ids for b in balls]))
    roots = offs[:-1] + np.array([b.root for b in balls])
    paths = _simulate_paths(union, model, noise_seed, record=roots)
    return float(np.mean(h(paths[:, 1:])))


def concentration_scan(model: GraphModel, sizes, m: int, h, r: int, seed: int,
                       mode: str = "noise", workers: int = 1) -> list[ConcentrationResult]:
    """Std over ``m`` draws of U^(r)(N_n)(h) for each n.

    ``mode="noise"`` keeps graph and marks fixed and redraws only the Brownian
    motions; ``mode="all"`` redraws graph, marks and noise together.
    """
    if m < 30:
        raise ValueError("need at least 30 replications")
    if mode not in ("noise", "all"):
        raise ValueError("mode must be 'noise' or 'all'")
    out = []
    for n in sizes:
        tasks = [(model, int(n), r, h, seed, j, mode) for j in range(m)]
        vals = np.array(pmap(_concentration_task, tasks, workers))
        bs = derive_seed(seed, "boot", int(n))
        rng = rng_for(bs)
        idx = rng.integers(0, m, size=(BOOTSTRAP, m))
        boots = np.std(vals[idx], axis=1, ddof=1)
        out.append(ConcentrationResult(int(n), float(np.std(vals, ddof=1)),
                                       (float(np.quantile(boots, 0.025)), float(np.quantile(boots, 0.975))),
                                       vals))
    return out


def _concentration_net(model, n, seed, j, mode):
    gseed = derive_seed(seed, "graph", n, j if mode == "all" else 0)
    if model.rooted:
        g = model.sample_rooted(0, gseed)
    else:
        g = model.sample_graph(n, gseed)
    return attach_iid_marks(g, model.marks, derive_seed(gseed, "marks"))


def _concentration_task(task):
    model, n, r, h, seed, j, mode = task
    net = _concentration_net(model, n, seed, j, mode)
    return neighbourhood_average(net, r, model, h, derive_seed(seed, "noise", n, j))


# ---------------------------------------------------------------------------
# Propagation of chaos


@dataclass
class ChaosEstimate:
    n: int
    estimate: float      # |E[f g] - E[f] E[g]|
    signed: float
    stderr: float
    replications: int
    pairs_per_rep: int


def _chaos_task(task):
    model, n, pairs, f, g, seed, k, same_root = task
    s = derive_seed(seed, "chaos", n, k)
    paths = finite_sample(model, n, s)[:, 1:]
    rng = rng_for(s, "roots")
    o1 = rng.integers(0, paths.shape[0], pairs)
    o2 = o1 if same_root else rng.integers(0, paths.shape[0], pairs)
    return f(paths[o1]), g(paths[o2])


def chaos_factorization(model: GraphModel, n: int, f, g, replications: int, seed: int,
                        pairs_per_rep: int = 100, same_root: bool = False,
                        workers: int = 1) -> ChaosEstimate:
    """Covariance of f(root 1) and g(root 2) for independent uniform roots.

    Each replication draws a graph, marks and noise and ``pairs_per_rep``
    root pairs; the pooled covariance is reported with a bootstrap standard
    error over replications.  ``same_root`` uses o1 = o2 (dependent witness).
    """
    tasks = [(model, int(n), int(pairs_per_rep), f, g, seed, k, same_root) for k in range(replications)]
    res = pmap(_chaos_task, tasks, workers)
    F = np.array([a for a, _ in res])
    G = np.array([b for _, b in res])

    def cov(idx):
        # shifted by the first sample: exact zero when f or g is constant
        ff, gg = F[idx].ravel(), G[idx].ravel()
        ff, gg = ff - ff[0], gg - gg[0]
        return float(np.mean(ff * gg) - np.mean(ff) * np.mean(gg))

    c = cov(np.arange(replications))
    rng = rng_for(seed, "chaos-boot", n)
    boots = [cov(rng.integers(0, replications, replications)) for _ in range(BOOTSTRAP)]
    return ChaosEstimate(int(n), abs(c), c, float(np.std(boots, ddof=1)), replications, pairs_per_rep)
