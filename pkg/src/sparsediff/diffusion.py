"""Interaction operator and Euler-Maruyama integration of the coupled system

    d theta_v = [ sum_u w_uv phi(theta_u, theta_v; omega_v, omega_u) + psi(theta_v; omega_v) ] dt
                + eps dB_v

with ``w_uv = mu_uv / mu_v`` (normalized mode, zero when mu_v = 0) or
``w_uv = K`` for every neighbour (unnormalized mode).

Brownian increments come from a keyed counter generator indexed by global
vertex identity and step, so any sub-network simulated with the same
``NoiseSource`` sees exactly the same increments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numba as nb
import numpy as np
from scipy import sparse

from . import philox
from ._fastmath import FASTMATH, fsin
from .errors import InstabilityError
from .network import MarkedNetwork, rooted_ball_network
from .seeding import philox_key, rng_for

# ---------------------------------------------------------------------------
# Interaction matrix


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    """Column-normalized weights stored by column: column v lists its
    neighbours u with entries mu_uv / mu_v."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    isolated_mask: np.ndarray

    @property
    def n(self) -> int:
        return self.isolated_mask.size

    def to_sparse(self) -> sparse.csc_matrix:
        return sparse.csc_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.to_sparse().sum(axis=0)).ravel()


def build_interaction(net: MarkedNetwork) -> InteractionMatrix:
    g = net.graph
    mu_v = net.vertex_weight()
    col = g.slot_sources()
    iso = mu_v == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.where(iso[col], 0.0, net.slot_weight / mu_v[col])
    return InteractionMatrix(g.indptr.copy(), g.indices.copy(), data, iso)


# ---------------------------------------------------------------------------
# Drift and noise specifications


def _sin_phi(theta_u, theta_v, omega_v, omega_u):
    return np.sin(theta_u - theta_v)


def _omega_psi(theta_v, omega_v):
    return omega_v


def _zero_psi(theta_v, omega_v):
    return np.zeros_like(theta_v)


def _zero_phi(theta_u, theta_v, omega_v, omega_u):
    return np.zeros_like(theta_u)


@dataclass(frozen=True)
class DriftSpec:
    """Pairwise interaction ``phi`` and self drift ``psi`` with declared constants.

    ``phi_lip`` bounds |phi(a,b)-phi(a',b')| <= phi_lip (|a-a'| + |b-b'|),
    ``phi_sup`` bounds |phi|, ``psi_lip`` is the Lipschitz constant of psi in theta.
    ``fast`` names a built-in pair of kernels (``"sin"``/``"zero"`` and
    ``"omega"``/``"zero"``) that the compiled integrator understands; leave it
    ``None`` for arbitrary vectorized callables.
    """

    phi: Callable = _sin_phi
    psi: Callable = _omega_psi
    phi_lip: float = 1.0
    phi_sup: float = 1.0
    psi_lip: float = 0.0
    coupling: str = "normalized"
    K: float = 1.0
    noise_scale: float = 1.0
    fast: Optional[tuple] = ("sin", "omega")
    name: str = "kuramoto"

    def __post_init__(self):
        if self.coupling not in ("normalized", "unnormalized"):
            raise ValueError("coupling must be 'normalized' or 'unnormalized'")
        if not self.noise_scale >= 0:
            raise ValueError("noise scale must be nonnegative")
        for c in (self.phi_lip, self.phi_sup, self.psi_lip):
            if not (0 <= c < math.inf):
                raise ValueError("declared drift constants must be finite and nonnegative")

    @property
    def C(self) -> float:
        """Constant in the gap inequality: max(phi_lip + psi_lip, phi_sup)."""
        return max(self.phi_lip + self.psi_lip, self.phi_sup)

    def replace(self, **kw) -> "DriftSpec":
        from dataclasses import replace
        return replace(self, **kw)

    def describe(self) -> dict:
        return {"name": self.name, "coupling": self.coupling, "K": self.K,
                "noise_scale": self.noise_scale, "phi_lip": self.phi_lip,
                "phi_sup": self.phi_sup, "psi_lip": self.psi_lip}


def kuramoto(noise_scale: float = 1.0) -> DriftSpec:
    """phi = sin(theta_u - theta_v), psi = omega, weights mu_uv / mu_v."""
    return DriftSpec(noise_scale=noise_scale)


def kuramoto_unnormalized(K: float, noise_scale: float = 0.05) -> DriftSpec:
    """omega_i + K sum_{j ~ i} sin(theta_j - theta_i), 0/1 adjacency."""
    return DriftSpec(coupling="unnormalized", K=float(K), noise_scale=noise_scale,
                     name="kuramoto_unnormalized")


def free_drift(noise_scale: float = 1.0) -> DriftSpec:
    """No interaction: d theta = omega dt + eps dB."""
    return DriftSpec(phi=_zero_phi, phi_lip=0.0, phi_sup=0.0, noise_scale=noise_scale,
                     fast=("zero", "omega"), name="free")


def brownian(noise_scale: float = 1.0) -> DriftSpec:
    return DriftSpec(phi=_zero_phi, psi=_zero_psi, phi_lip=0.0, phi_sup=0.0,
                     noise_scale=noise_scale, fast=("zero", "zero"), name="brownian")


PRESETS = {"kuramoto": kuramoto, "free": free_drift, "brownian": brownian}


@dataclass(frozen=True)
class NoiseSource:
    """Stateless Brownian increments keyed by (master_seed, vertex id, step).

    With ``substeps = m`` the increment over one coarse step is the sum of the
    ``m`` fine-scale increments, so a run at ``dt`` with ``m = 2`` shares its
    Brownian path with a run at ``dt / 2``.
    """

    master_seed: int
    substeps: int = 1

    def __post_init__(self):
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    def key(self) -> tuple:
        k0, k1 = philox_key(self.master_seed, "brownian")
        return np.uint32(k0), np.uint32(k1)

    def increments(self, ids, step: int, dt: float) -> np.ndarray:
        """N(0, dt) increments for the given global ids at coarse step ``step``."""
        k0, k1 = self.key()
        out = np.empty(len(ids))
        philox.coarse_increments(k0, k1, np.asarray(ids, dtype=np.uint64), int(step),
                                 int(self.substeps), out)
        return out * math.sqrt(dt / self.substeps)


# ---------------------------------------------------------------------------
# Trajectories


@dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    """Recorded paths: ``paths[k, j]`` is the state of vertex ``ids[j]`` at ``times[k]``."""

    times: np.ndarray
    paths: np.ndarray
    ids: np.ndarray
    meta: dict = field(default_factory=dict)

    def path(self, vertex_id: int) -> np.ndarray:
        j = np.flatnonzero(self.ids == vertex_id)
        if j.size == 0:
            raise KeyError(vertex_id)
        return self.paths[:, j[0]]

    @property
    def final(self) -> np.ndarray:
        return self.paths[-1]


def _n_steps(T: float, dt: float) -> int:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not T >= dt * (1 - 1e-12):
        raise ValueError("need T >= dt")
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError("T must be an integer multiple of dt")
    return n


# ---------------------------------------------------------------------------
# Compiled kernel


@dataclass(frozen=True, eq=False)
class EdgeSystem:
    """Undirected edge list (a < b) with directed weights: the drift of b
    receives wb * phi(theta_a, theta_b) and the drift of a receives
    wa * phi(theta_b, theta_a)."""

    ea: np.ndarray
    eb: np.ndarray
    wa: np.ndarray
    wb: np.ndarray
    unit: bool = False  # all weights are 1


def edge_system(net: MarkedNetwork, drift: DriftSpec) -> EdgeSystem:
    g = net.graph
    src = g.slot_sources()
    fwd = np.flatnonzero(src < g.indices)
    rev = g.reverse_slots()[fwd]
    a, b = src[fwd], g.indices[fwd]
    if drift.coupling == "unnormalized":
        w = np.ones(fwd.size)
        return EdgeSystem(a, b, w, w.copy(), True)
    mu_v = net.vertex_weight()
    w_ab = net.slot_weight[fwd]
    # receiver-side normalization; every endpoint of an edge has mu > 0
    return EdgeSystem(a, b, net.slot_weight[rev] / mu_v[a], w_ab / mu_v[b])


@nb.njit(fastmath=FASTMATH, cache=True)
def _advance(theta, drift, X, omega, ea, eb, wa, wb, unit, ck, phi_on, psi_on, inc, dt, guard):
    # theta is (B, N).  Edge sines go through a gather pass and a separate
    # sine pass so that the sine loop vectorizes.  With unit weights the
    # coupling constant is applied there too and the scatter is plain adds.
    B, N = theta.shape
    E = ea.size
    bad = False
    for v in range(N):
        drift[v] = psi_on * omega[v]
    for k in range(B):
        t = theta[k]
        c = ck[k]
        # a zero coupling column would only add +-0.0 to the drift
        if phi_on and c != 0.0:
            for e in range(E):
                X[e] = t[ea[e]] - t[eb[e]]
            if unit:
                for e in range(E):
                    X[e] = c * fsin(X[e])
                for e in range(E):
                    s = X[e]
                    drift[eb[e]] += s
                    drift[ea[e]] -= s
            else:
                for e in range(E):
                    X[e] = fsin(X[e])
                for e in range(E):
                    s = X[e]
                    drift[eb[e]] += (wb[e] * c) * s
                    drift[ea[e]] -= (wa[e] * c) * s
        for v in range(N):
            y = t[v] + dt * drift[v] + inc[v]
            t[v] = y
            drift[v] = psi_on * omega[v]
            if abs(y) > guard:
                bad = True
    return bad


@nb.njit(fastmath=FASTMATH, cache=True)
def _fill_noise(inc, cache, ids, k0, k1, step, substeps, scale):
    base = np.int64(step) * substeps
    for v in range(ids.size):
        acc = 0.0
        for j in range(substeps):
            f = base + j
            if f & 1:
                z = cache[v]
            else:
                z, z1 = philox.normal_pair(k0, k1, ids[v], f >> 1, 0)
                cache[v] = z1
            acc += z
        inc[v] = scale * acc


@nb.njit(cache=True)
def _integrate(theta, omega, ids, ea, eb, wa, wb, unit, ck, phi_on, psi_on, eps, dt, n_steps,
               substeps, k0, k1, rec_idx, rec_every, out, guard):
    B, N = theta.shape
    drift = np.empty(N)
    X = np.empty(ea.size)
    inc = np.zeros(N)
    cache = np.zeros(N)
    scale = eps * np.sqrt(dt / substeps)
    for j in range(rec_idx.size):
        for k in range(B):
            out[0, j, k] = theta[k, rec_idx[j]]
    r = 1
    for step in range(n_steps):
        if eps != 0.0:
            _fill_noise(inc, cache, ids, k0, k1, step, substeps, scale)
        if _advance(theta, drift, X, omega, ea, eb, wa, wb, unit, ck, phi_on, psi_on, inc, dt, guard):
            return step + 1
        if (step + 1) % rec_every == 0:
            for j in range(rec_idx.size):
                for k in range(B):
                    out[r, j, k] = theta[k, rec_idx[j]]
            r += 1
    return -1


def integrate_batch(net: MarkedNetwork, drift: DriftSpec, T: float, dt: float, noise: NoiseSource,
                    couplings=None, record=None, record_every: int = 1, guard: float = 1e9,
                    theta0=None, ids=None):
    """Run the compiled integrator on ``B`` coupling strengths at once.

    All columns share marks and Brownian increments.  Returns ``(times, out)``
    with ``out[k, j, b]`` the state of ``record[j]`` in column ``b``.
    """
    if drift.fast is None:
        raise ValueError("batch integration needs a built-in drift")
    n_steps = _n_steps(T, dt)
    if n_steps % record_every:
        raise ValueError("record_every must divide the number of steps")
    ck = np.atleast_1d(np.asarray([drift.K if drift.coupling == "unnormalized" else 1.0]
                                  if couplings is None else couplings, dtype=float))
    es = edge_system(net, drift)
    th0 = net.theta0 if theta0 is None else np.asarray(theta0, float)
    theta = np.repeat(th0[None, :], ck.size, axis=0).copy()
    rec = np.arange(net.n) if record is None else np.asarray(record, dtype=np.int64)
    out = np.empty((n_steps // record_every + 1, rec.size, ck.size))
    k0, k1 = noise.key()
    idv = (net.ids if ids is None else np.asarray(ids)).astype(np.uint64)
    status = _integrate(theta, net.omega, idv, es.ea, es.eb, es.wa, es.wb, es.unit, ck,
                        1.0 if drift.fast[0] == "sin" else 0.0,
                        1.0 if drift.fast[1] == "omega" else 0.0,
                        float(drift.noise_scale), float(dt), n_steps, int(noise.substeps),
                        k0, k1, rec, int(record_every), out, float(guard))
    if status >= 0:
        raise InstabilityError(f"state exceeded overflow guard {guard:g} at step {status}", status)
    times = np.arange(out.shape[0]) * (dt * record_every)
    return times, out


# ---------------------------------------------------------------------------
# Reference (vectorized numpy) path for arbitrary drifts


def _integrate_generic(net, drift, n_steps, dt, noise, rec, record_every, guard, debug):
    g = net.graph
    recv = g.slot_sources()
    send = g.indices
    if drift.coupling == "normalized":
        P = build_interaction(net)
        w = P.data  # column recv, entry mu_{send,recv} / mu_recv
    else:
        w = np.full(send.size, float(drift.K))
    theta = net.theta0.astype(float).copy()
    omega = net.omega
    k0, k1 = noise.key()
    idv = net.ids.astype(np.uint64)
    inc = np.empty(net.n)
    scale = drift.noise_scale * math.sqrt(dt / noise.substeps)
    bound_phi = drift.phi_sup * np.bincount(recv, weights=np.abs(w), minlength=net.n)
    out = [theta[rec].copy()]
    for step in range(n_steps):
        contrib = w * drift.phi(theta[send], theta[recv], omega[recv], omega[send])
        pair = np.bincount(recv, weights=contrib, minlength=net.n)
        self_term = np.asarray(drift.psi(theta, omega), dtype=float)
        d = pair + self_term
        if debug:
            lim = bound_phi + np.abs(self_term)
            if np.any(np.abs(d) > lim * (1 + 1e-12) + 1e-300):
                raise AssertionError(f"drift bound violated at step {step}")
        if drift.noise_scale != 0:
            philox.coarse_increments(k0, k1, idv, step, noise.substeps, inc)
            theta = theta + dt * d + scale * inc
        else:
            theta = theta + dt * d
        if not np.all(np.abs(theta) <= guard):
            raise InstabilityError(f"state exceeded overflow guard {guard:g} at step {step + 1}", step + 1)
        if (step + 1) % record_every == 0:
            out.append(theta[rec].copy())
    return np.array(out)


def simulate(net: MarkedNetwork, drift: DriftSpec, T: float, dt: float, noise: NoiseSource, *,
             record=None, record_every: int = 1, guard: float = 1e9,
             debug: bool = False) -> TrajectoryEnsemble:
    """Euler-Maruyama on the whole network.

    ``record`` selects local vertex indices to store (default all).  Built-in
    drifts use the compiled kernel; ``debug=True`` or a custom drift uses the
    vectorized reference path, which also asserts the per-step drift bound.
    """
    n_steps = _n_steps(T, dt)
    if n_steps % record_every:
        raise ValueError("record_every must divide the number of steps")
    rec = np.arange(net.n) if record is None else np.asarray(record, dtype=np.int64)
    if drift.fast is not None and not debug:
        times, out = integrate_batch(net, drift, T, dt, noise, record=rec,
                                     record_every=record_every, guard=guard)
        paths = out[:, :, 0]
    else:
        paths = _integrate_generic(net, drift, n_steps, dt, noise, rec, record_every, guard, debug)
        times = np.arange(paths.shape[0]) * (dt * record_every)
    meta = {"network_hash": net.content_hash(), "T": T, "dt": dt,
            "master_seed": noise.master_seed, "substeps": noise.substeps,
            "drift": drift.describe()}
    return TrajectoryEnsemble(times, paths, net.ids[rec].copy(), meta)


def simulate_truncated(net: MarkedNetwork, root: int, r: int, drift: DriftSpec, T: float,
                       dt: float, noise: NoiseSource, **kw) -> TrajectoryEnsemble:
    """Solve the system on the r-ball around ``root`` with weights recomputed
    inside the ball and the same Brownian motions (keyed by global ids)."""
    b = rooted_ball_network(net, root, r)
    ens = simulate(b.network, drift, T, dt, noise, **kw)
    ens.meta.update({"root": int(net.ids[root]), "radius": int(r)})
    return ens


def perturb_marks(net: MarkedNetwork, eps: float, seed: int = 0, kinds=("weight", "media", "initial"),
                  mode: str = "uniform", mu_lo: float | None = None) -> MarkedNetwork:
    """Shift marks by ``eps * U`` with U uniform on [-1, 1] (``mode="uniform"``)
    or by exactly ``eps`` (``mode="shift"``); weights are clamped at ``mu_lo``."""
    rng = rng_for(seed, "perturb_marks")
    ue = rng.uniform(-1, 1, net.graph.edge_count)
    uo = rng.uniform(-1, 1, net.n)
    ut = rng.uniform(-1, 1, net.n)
    if mode == "shift":
        ue, uo, ut = np.ones_like(ue), np.ones_like(uo), np.ones_like(ut)
    elif mode != "uniform":
        raise ValueError("mode must be 'uniform' or 'shift'")
    w = net.edge_weights()
    if mu_lo is None:
        mu_lo = 0.5 * float(w.min()) if w.size else 0.0
    g = net.graph
    if "weight" in kinds:
        w = np.maximum(w + eps * ue, mu_lo)
    omega = net.omega + eps * uo if "media" in kinds else net.omega
    theta0 = net.theta0 + eps * ut if "initial" in kinds else net.theta0
    return MarkedNetwork.build(g, w, omega, theta0, net.ids)


def perturb_marks_gap(net: MarkedNetwork, eps: float, drift: DriftSpec, T: float, dt: float,
                      noise: NoiseSource, seed: int = 0, **kw) -> float:
    """max_v sup_t |theta_v - theta'_v| between the original and perturbed marks
    under identical Brownian motions."""
    if eps == 0:
        return 0.0
    a = simulate(net, drift, T, dt, noise)
    b = simulate(perturb_marks(net, eps, seed, **kw), drift, T, dt, noise)
    return float(np.max(np.abs(a.paths - b.paths)))
