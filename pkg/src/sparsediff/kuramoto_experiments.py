"""Synchronization surfaces Sync(h, K) of the noisy Kuramoto model on
Galton-Watson trees (binomial and D-regular offspring).

Each replication integrates every K on the grid at once: the columns share
the tree, the marks and the Brownian increments (common random numbers), so
differences across K are not blurred by independent sampling noise.  The
order parameters are accumulated inside the compiled loop over the final
window only; full paths are never stored.
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, replace

import numba as nb
import numpy as np

from ._fastmath import FASTMATH, fsincos
from ._parallel import pmap
from .diffusion import DriftSpec, NoiseSource, TrajectoryEnsemble, _advance, _fill_noise, _n_steps, edge_system
from .errors import EmptyLevelError, InstabilityError
from .graph_models import Binomial, Deterministic, RootedTree, sample_gw_tree
from .network import Const, MarkLaws, Normal, Uniform, attach_iid_marks
from .seeding import derive_seed

TWO_PI = 2.0 * math.pi
THETA0_MODES = ("zero", "uniform")
OMEGA_MODES = ("one", "normal", "uniform")


@dataclass(frozen=True)
class SyncConfig:
    model: str = "binomial"          # "binomial" | "dregular"
    generations: int = 13
    T: float = 100.0
    dt: float = 0.01
    epsilon: float = 0.05
    K_min: float = 0.0
    K_max: float = 10.0
    K_step: float = 0.2
    replications: int = 100
    theta0_mode: str = "zero"        # "zero" | "uniform" on [0, 2 pi]
    omega_mode: str = "one"          # "one" | "normal" (mean 1, var 1) | "uniform" on [0, 2 pi]
    binomial_n: int = 3
    binomial_p: float = 2.0 / 3.0
    dregular_C: int = 3
    coupling: str = "unnormalized"   # "normalized" divides by the degree

    def __post_init__(self):
        if self.model not in ("binomial", "dregular"):
            raise ValueError("model must be 'binomial' or 'dregular'")
        if self.theta0_mode not in THETA0_MODES:
            raise ValueError(f"theta0_mode must be one of {THETA0_MODES}")
        if self.omega_mode not in OMEGA_MODES:
            raise ValueError(f"omega_mode must be one of {OMEGA_MODES}")
        if self.coupling not in ("normalized", "unnormalized"):
            raise ValueError("coupling must be 'normalized' or 'unnormalized'")
        if not (self.K_step > 0 and self.K_max >= self.K_min):
            raise ValueError("malformed K grid")
        if self.generations < 1 or self.replications < 1:
            raise ValueError("generations and replications must be positive")
        _n_steps(self.T, self.dt)

    @property
    def K_grid(self) -> np.ndarray:
        m = int(round((self.K_max - self.K_min) / self.K_step))
        return np.round(self.K_min + self.K_step * np.arange(m + 1), 12)

    def reduced(self) -> "SyncConfig":
        return replace(self, replications=25, K_step=1.0)

    def config_hash(self) -> str:
        return hashlib.blake2b(json.dumps(asdict(self), sort_keys=True).encode(),
                               digest_size=8).hexdigest()

    def regime(self) -> str:
        return f"theta0={self.theta0_mode},omega={self.omega_mode}"


def all_regimes(cfg: SyncConfig) -> list[SyncConfig]:
    """Every (initial condition, natural frequency) combination for ``cfg.model``."""
    return [replace(cfg, theta0_mode=a, omega_mode=b) for a in THETA0_MODES for b in OMEGA_MODES]


# ---------------------------------------------------------------------------
# Order parameter


def order_parameter(ens: TrajectoryEnsemble, tree: RootedTree, h: int) -> np.ndarray:
    """r_h(t) = |e^{i theta_root} + sum_{j in D(h)} e^{i theta_j}| / (1 + #D(h))."""
    level = tree.level(h) if h > 0 else np.zeros(0, dtype=np.int64)
    if h > 0 and level.size == 0:
        raise EmptyLevelError(f"no vertices at distance {h}")
    col = {int(i): j for j, i in enumerate(ens.ids)}
    idx = [col[int(tree.root)]] + [col[int(v)] for v in level]
    z = np.exp(1j * ens.paths[:, idx])
    return np.abs(z.sum(axis=1)) / len(idx)


def sync_window(length: int) -> slice:
    """Indices floor(0.95 (length - 1)) .. length - 1."""
    if length < 1:
        raise ValueError("empty sequence")
    return slice((95 * (length - 1)) // 100, length)


def sync_level(r_path) -> float:
    r = np.asarray(r_path, dtype=float)
    return float(np.mean(r[sync_window(r.size)]))


# ---------------------------------------------------------------------------
# Compiled run


@nb.njit(fastmath=FASTMATH, cache=True)
def _accumulate(theta, level, n_levels, acc):
    B, N = theta.shape
    C = np.zeros(n_levels + 1)
    S = np.zeros(n_levels + 1)
    cnt = np.zeros(n_levels + 1)
    for v in range(N):
        if level[v] <= n_levels:
            cnt[level[v]] += 1.0
    for k in range(B):
        C[:] = 0.0
        S[:] = 0.0
        for v in range(N):
            lv = level[v]
            if lv > n_levels:
                continue
            s, c = fsincos(theta[k, v])
            C[lv] += c
            S[lv] += s
        for h in range(1, n_levels + 1):
            if cnt[h] == 0:
                continue
            x = C[0] + C[h]
            y = S[0] + S[h]
            acc[h, k] += np.sqrt(x * x + y * y) / (1.0 + cnt[h])


@nb.njit(fastmath=FASTMATH, cache=True)
def _sync_run(theta, omega, ids, ea, eb, wa, wb, unit, ck, eps, dt, n_steps, k0, k1, level,
              n_levels, first, acc, guard):
    # theta is (B, N): one contiguous row per coupling strength
    B, N = theta.shape
    drift = np.empty(N)
    X = np.empty(ea.size)
    inc = np.zeros(N)
    cache = np.zeros(N)
    scale = eps * np.sqrt(dt)
    if first == 0:
        _accumulate(theta, level, n_levels, acc)
    for step in range(n_steps):
        if eps != 0.0:
            _fill_noise(inc, cache, ids, k0, k1, step, 1, scale)
        bad = _advance(theta, drift, X, omega, ea, eb, wa, wb, unit, ck, 1.0, 1.0, inc, dt, guard)
        if bad:
            return step + 1
        if step + 1 >= first:
            _accumulate(theta, level, n_levels, acc)
    return -1


def build_tree(cfg: SyncConfig, seed: int) -> RootedTree:
    if cfg.model == "binomial":
        law = Binomial(cfg.binomial_n, cfg.binomial_p)
        return sample_gw_tree(law, law, cfg.generations, seed)
    return sample_gw_tree(Deterministic(cfg.dregular_C - 1), Deterministic(cfg.dregular_C),
                          cfg.generations, 0)


def mark_laws(cfg: SyncConfig) -> MarkLaws:
    theta = Const(0.0) if cfg.theta0_mode == "zero" else Uniform(0.0, TWO_PI)
    omega = {"one": Const(1.0), "normal": Normal(1.0, 1.0), "uniform": Uniform(0.0, TWO_PI)}[cfg.omega_mode]
    return MarkLaws(Const(1.0), omega, theta)


def replication_seed(cfg: SyncConfig, master_seed: int, rep: int) -> int:
    return derive_seed(master_seed, "sync", cfg.model, cfg.theta0_mode, cfg.omega_mode, rep)


@dataclass
class ReplicationResult:
    sync: np.ndarray        # (generations, nK), NaN where the level is empty
    tree_size: int
    depth_reached: int
    seed: int


def run_replication(task) -> ReplicationResult:
    cfg, master_seed, rep = task
    seed = replication_seed(cfg, master_seed, rep)
    tree = build_tree(cfg, derive_seed(seed, "tree"))
    net = attach_iid_marks(tree, mark_laws(cfg), derive_seed(seed, "marks"))
    drift = DriftSpec(coupling=cfg.coupling, noise_scale=cfg.epsilon)
    es = edge_system(net, drift)
    Ks = cfg.K_grid
    theta = np.repeat(net.theta0[None, :], Ks.size, axis=0).copy()
    n_steps = _n_steps(cfg.T, cfg.dt)
    first = sync_window(n_steps + 1).start
    acc = np.zeros((cfg.generations + 1, Ks.size))
    k0, k1 = NoiseSource(derive_seed(seed, "noise")).key()
    status = _sync_run(theta, net.omega, net.ids.astype(np.uint64), es.ea, es.eb, es.wa, es.wb, es.unit,
                       Ks.astype(float), float(cfg.epsilon), float(cfg.dt), n_steps, k0, k1,
                       tree.depth_of, cfg.generations, first, acc, 1e9)
    if status >= 0:
        raise InstabilityError(f"overflow at step {status} in replication {rep}", status)
    n_win = n_steps + 1 - first
    sizes = tree.generation_sizes()
    sync = acc[1:] / n_win
    sync[sizes[1:cfg.generations + 1] == 0] = np.nan
    depth = int(np.max(np.flatnonzero(sizes > 0)))
    return ReplicationResult(sync, tree.n, depth, seed)


@dataclass
class SyncSurface:
    config: SyncConfig
    h_values: np.ndarray
    K_values: np.ndarray
    mean: np.ndarray        # (len(h), len(K)), NaN where no replication survived
    stderr: np.ndarray
    counts: np.ndarray      # surviving replications per h
    per_replication: np.ndarray
    seeds: list
    tree_sizes: list
    depths: list

    def cell(self, h: int, K: float) -> float:
        return float(self.mean[h - 1, int(np.argmin(np.abs(self.K_values - K)))])

    def manifest(self) -> dict:
        return {"config": asdict(self.config), "config_hash": self.config.config_hash(),
                "seeds": [int(s) for s in self.seeds], "survival_counts": self.counts.tolist(),
                "tree_sizes": [int(x) for x in self.tree_sizes],
                "depth_reached": [int(x) for x in self.depths],
                "tree_truncation": "generation cut after the last generation; leaves childless",
                "noise_sharing": "all K columns of a replication share tree, marks and noise"}


def phase_diagram(cfg: SyncConfig, master_seed: int, workers: int = 1) -> SyncSurface:
    tasks = [(cfg, int(master_seed), rep) for rep in range(cfg.replications)]
    res = pmap(run_replication, tasks, workers)
    per = np.stack([r.sync for r in res])  # (reps, H, K)
    counts = np.sum(~np.isnan(per[:, :, 0]), axis=0)
    with np.errstate(invalid="ignore", divide="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(per, axis=0) if per.size else per
        sd = np.nanstd(per, axis=0, ddof=1)
        stderr = sd / np.sqrt(counts)[:, None]
    stderr[counts[:, None].repeat(per.shape[2], 1) < 2] = np.nan
    return SyncSurface(cfg, np.arange(1, cfg.generations + 1), cfg.K_grid, mean, stderr, counts,
                       per, [r.seed for r in res], [r.tree_size for r in res], [r.depth_reached for r in res])


def high_sync_region(surface: SyncSurface, threshold: float = 0.8):
    """Largest h having some K with mean Sync above ``threshold`` (None if empty)."""
    hit = np.nan_to_num(surface.mean, nan=-1.0) > threshold
    rows = np.flatnonzero(hit.any(axis=1))
    return int(surface.h_values[rows.max()]) if rows.size else None
