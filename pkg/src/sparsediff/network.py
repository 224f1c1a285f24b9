"""Marked networks: i.i.d. marks, rooted balls, the local metric and
empirical neighbourhood measures."""
from __future__ import annotations

import hashlib
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from . import philox
from ._iso import INF, SmallRooted, min_max_isomorphism, rooted_isomorphic, wl_signature
from .errors import ResourceLimitError
from .graph_models import Graph, RootedTree, ball
from .measures import EmpiricalMeasure
from .seeding import philox_key

STREAM_OMEGA = 1
STREAM_THETA0 = 2
STREAM_WEIGHT = 3
DEFAULT_SIZE_CAP = 200


# ---------------------------------------------------------------------------
# Mark laws


@dataclass(frozen=True)
class MarkLaw:
    """One-dimensional law sampled by inverse CDF from a keyed uniform."""

    kind: str  # "deterministic" | "uniform" | "normal"
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if self.kind not in ("deterministic", "uniform", "normal"):
            raise ValueError(f"unknown mark law {self.kind!r}")
        if self.kind == "uniform" and not self.b >= self.a:
            raise ValueError("uniform law needs a <= b")
        if self.kind == "normal" and not self.b >= 0:
            raise ValueError("normal law needs sd >= 0")

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "deterministic":
            return np.full(u.shape, float(self.a))
        if self.kind == "uniform":
            return self.a + (self.b - self.a) * u
        return self.a + self.b * ndtri(u)

    def support(self) -> tuple[float, float]:
        if self.kind == "deterministic":
            return (self.a, self.a)
        if self.kind == "uniform":
            return (self.a, self.b)
        return (-math.inf, math.inf)

    @classmethod
    def parse(cls, spec) -> "MarkLaw":
        """Accept a number, ``[kind, a, b]`` or ``{"kind":..., "a":..., "b":...}``."""
        if isinstance(spec, MarkLaw):
            return spec
        if isinstance(spec, (int, float)):
            return cls("deterministic", float(spec))
        if isinstance(spec, dict):
            return cls(spec["kind"], float(spec.get("a", 0.0)), float(spec.get("b", 1.0)))
        kind, *args = spec
        return cls(kind, *map(float, args))


def Const(x: float) -> MarkLaw:
    return MarkLaw("deterministic", float(x))


def Uniform(lo: float, hi: float) -> MarkLaw:
    return MarkLaw("uniform", float(lo), float(hi))


def Normal(mean: float, sd: float) -> MarkLaw:
    return MarkLaw("normal", float(mean), float(sd))


@dataclass(frozen=True)
class MarkLaws:
    weight_law: MarkLaw = field(default_factory=lambda: Const(1.0))
    media_law: MarkLaw = field(default_factory=lambda: Const(0.0))
    initial_law: MarkLaw = field(default_factory=lambda: Const(0.0))

    def __post_init__(self):
        lo, hi = self.weight_law.support()
        if not (0 < lo <= hi < math.inf):
            raise ValueError("weight law must be supported in [mu_lo, mu_hi] with 0 < mu_lo")


# ---------------------------------------------------------------------------
# Marked network


@dataclass(frozen=True, eq=False)
class MarkedNetwork:
    """Graph with edge weights (one per CSR slot, symmetric), media and
    initial conditions.  ``ids`` are the global vertex identities used to key
    noise and marks; they default to ``arange(n)``."""

    graph: Graph
    slot_weight: np.ndarray
    omega: np.ndarray
    theta0: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        n = self.graph.n
        for name in ("omega", "theta0", "ids"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have one entry per vertex")
        if self.slot_weight.shape != self.graph.indices.shape:
            raise ValueError("one weight per adjacency slot required")
        if np.any(~(self.slot_weight > 0)):
            raise ValueError("edge weights must be positive")
        for a in (self.slot_weight, self.omega, self.theta0, self.ids):
            a.setflags(write=False)

    @classmethod
    def build(cls, graph: Graph, weights=None, omega=None, theta0=None, ids=None) -> "MarkedNetwork":
        """``weights`` is aligned with ``graph.edges()`` (or a scalar)."""
        n = graph.n
        e = graph.edges()
        if weights is None:
            weights = 1.0
        w = np.broadcast_to(np.asarray(weights, dtype=float), (e.shape[0],))
        slot = _edge_to_slot(graph, e, w)
        om = np.zeros(n) if omega is None else np.asarray(omega, dtype=float).copy()
        th = np.zeros(n) if theta0 is None else np.asarray(theta0, dtype=float).copy()
        idv = np.arange(n, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64).copy()
        return cls(graph, slot, om, th, idv)

    @property
    def n(self) -> int:
        return self.graph.n

    def edge_weights(self) -> np.ndarray:
        """Weights aligned with ``graph.edges()``."""
        src = np.repeat(np.arange(self.n), self.graph.degrees())
        return self.slot_weight[src <= self.graph.indices].copy()

    def weight(self, u: int, v: int) -> float:
        nb = self.graph.neighbors(u)
        k = np.searchsorted(nb, v)
        if k >= nb.size or nb[k] != v:
            return 0.0
        return float(self.slot_weight[self.graph.indptr[u] + k])

    def vertex_weight(self) -> np.ndarray:
        """mu_v = sum of incident edge weights."""
        src = np.repeat(np.arange(self.n), self.graph.degrees())
        return np.bincount(src, weights=self.slot_weight, minlength=self.n)

    def weight_bounds(self) -> tuple[float, float]:
        if self.slot_weight.size == 0:
            return (math.nan, math.nan)
        return float(self.slot_weight.min()), float(self.slot_weight.max())

    def content_hash(self) -> str:
        h = hashlib.blake2b(digest_size=16)
        h.update(self.graph.content_hash().encode())
        for a in (self.slot_weight, self.omega, self.theta0):
            h.update(a.astype("<f8").tobytes())
        h.update(self.ids.astype("<i8").tobytes())
        return h.hexdigest()

    def with_marks(self, omega=None, theta0=None, slot_weight=None) -> "MarkedNetwork":
        return MarkedNetwork(self.graph,
                             self.slot_weight.copy() if slot_weight is None else np.asarray(slot_weight, float),
                             self.omega.copy() if omega is None else np.asarray(omega, float),
                             self.theta0.copy() if theta0 is None else np.asarray(theta0, float),
                             self.ids.copy())

    def to_json_dict(self) -> dict:
        e = self.graph.edges()
        d = {"n": self.n, "edges": e.tolist(),
             "mu": [[int(u), int(v), float(w)] for (u, v), w in zip(e, self.edge_weights())],
             "omega": self.omega.tolist(), "theta0": self.theta0.tolist()}
        if not np.array_equal(self.ids, np.arange(self.n)):
            d["ids"] = self.ids.tolist()
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "MarkedNetwork":
        g = Graph.from_json_dict(d)
        e = g.edges()
        w = np.ones(e.shape[0])
        if "mu" in d:
            lut = {(min(int(u), int(v)), max(int(u), int(v))): float(x) for u, v, x in d["mu"]}
            try:
                w = np.array([lut[(int(u), int(v))] for u, v in e])
            except KeyError as err:
                raise ValueError(f"missing weight for edge {err}") from None
        return cls.build(g, w, d.get("omega"), d.get("theta0"), d.get("ids"))


def _edge_to_slot(graph: Graph, e: np.ndarray, w: np.ndarray) -> np.ndarray:
    slot = np.empty(graph.indices.size)
    fwd = np.flatnonzero(graph.slot_sources() <= graph.indices)
    slot[fwd] = w
    slot[graph.reverse_slots()[fwd]] = w
    return slot


def attach_iid_marks(g: Graph | RootedTree, laws: MarkLaws, seed: int, ids=None) -> MarkedNetwork:
    """Draw i.i.d. marks keyed by (seed, kind, identity).

    ``ids`` gives the global identity of each vertex (default ``arange(n)``);
    a vertex or edge receives the same mark whatever sub-network it is drawn in.
    """
    if isinstance(g, RootedTree):
        g = g.graph
    idv = np.arange(g.n, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
    if idv.size and (idv.min() < 0 or idv.max() >= 2**32):
        raise ValueError("vertex identities must fit in 32 bits")
    k0, k1 = philox_key(seed, "marks")
    k0, k1 = np.uint32(k0), np.uint32(k1)
    uid = idv.astype(np.uint64)
    omega = laws.media_law.from_uniform(philox.uniforms(k0, k1, uid, 0, STREAM_OMEGA))
    theta0 = laws.initial_law.from_uniform(philox.uniforms(k0, k1, uid, 0, STREAM_THETA0))
    src = np.repeat(np.arange(g.n), g.degrees())
    a, b = idv[src], idv[g.indices]
    lo, hi = np.minimum(a, b).astype(np.uint64), np.maximum(a, b).astype(np.uint64)
    key = lo | (hi << np.uint64(32))
    slot = laws.weight_law.from_uniform(philox.uniforms(k0, k1, key, 0, STREAM_WEIGHT))
    return MarkedNetwork(g, slot, omega, theta0, idv.copy())


# ---------------------------------------------------------------------------
# Rooted balls


@dataclass(frozen=True, eq=False)
class RootedBallNetwork:
    network: MarkedNetwork
    root: int
    boundary: np.ndarray
    to_parent: np.ndarray
    radius: int
    dist: np.ndarray


def rooted_ball_network(net: MarkedNetwork, root: int, r: int) -> RootedBallNetwork:
    b = ball(net.graph, root, r)
    g = net.graph
    verts = b.to_parent
    starts, ends = g.indptr[verts], g.indptr[verts + 1]
    slots = np.concatenate([np.arange(s, e) for s, e in zip(starts, ends)]) if verts.size else np.zeros(0, np.int64)
    inside = np.zeros(g.n, dtype=bool)
    inside[verts] = True
    slots = slots[inside[g.indices[slots]]]
    sub = MarkedNetwork(b.graph, net.slot_weight[slots].copy(), net.omega[verts].copy(),
                        net.theta0[verts].copy(), net.ids[verts].copy())
    return RootedBallNetwork(sub, b.root, b.boundary, verts, int(r), b.dist)


# ---------------------------------------------------------------------------
# Local distance


def _small(net: MarkedNetwork, root: int, scale) -> SmallRooted:
    g = net.graph
    adj = [g.neighbors(v).tolist() for v in range(g.n)]
    sw, so, st = scale
    vm = np.stack([so * net.omega, st * net.theta0], axis=1)
    em = {}
    for (u, v), w in zip(g.edges(), net.edge_weights()):
        em[(int(u), int(v))] = sw * float(w)
    return SmallRooted(adj, int(root), vm, em)


def local_distance(a: RootedBallNetwork, b: RootedBallNetwork,
                   mark_scale=(1.0, 1.0, 1.0), size_cap: int = DEFAULT_SIZE_CAP,
                   method: str = "auto") -> float:
    """min over radii rho with isomorphic rho-balls of 1/(1+rho) + delta*(rho).

    ``mark_scale`` multiplies the (edge weight, media, initial) discrepancies.
    delta*(rho) is the smallest max-discrepancy over root-preserving
    isomorphisms of the rho-balls.
    """
    if a.network.n > size_cap or b.network.n > size_cap:
        raise ResourceLimitError(f"ball larger than size cap {size_cap}")
    best = INF
    for rho in range(min(a.radius, b.radius) + 1):
        sa = rooted_ball_network(a.network, a.root, rho)
        sb = rooted_ball_network(b.network, b.root, rho)
        d = min_max_isomorphism(_small(sa.network, sa.root, mark_scale),
                                _small(sb.network, sb.root, mark_scale), method)
        if d == INF:
            break  # larger balls cannot be isomorphic either
        best = min(best, 1.0 / (1.0 + rho) + d)
    return best


# ---------------------------------------------------------------------------
# Empirical neighbourhood measures


def _shape(net_or_graph, v: int, r: int):
    g = net_or_graph.graph if isinstance(net_or_graph, MarkedNetwork) else net_or_graph
    if isinstance(g, RootedTree):
        g = g.graph
    b = ball(g, v, r)
    return SmallRooted([b.graph.neighbors(i).tolist() for i in range(b.graph.n)], b.root)


def shape_signature(g, v: int, r: int) -> str:
    """Colour-refinement hash of the unmarked rooted r-ball around ``v``."""
    return wl_signature(_shape(g, v, r), 2 * r + 2)


def shape_labels(g, r: int, size_cap: int = DEFAULT_SIZE_CAP, exact_limit: int = 50) -> list:
    """Per-vertex isomorphism-class label of the unmarked rooted r-ball."""
    if isinstance(g, RootedTree):
        g = g.graph
    labels = []
    reps = defaultdict(list)  # signature -> representative balls, one per exact class
    for v in range(g.n):
        s = _shape(g, v, r)
        if s.n > size_cap:
            raise ResourceLimitError(f"ball larger than size cap {size_cap}")
        sig = wl_signature(s, 2 * r + 2)
        if s.n <= exact_limit:
            cls = reps[sig]
            k = next((i for i, t in enumerate(cls) if rooted_isomorphic(s, t)), None)
            if k is None:
                cls.append(s)
                k = len(cls) - 1
            if k:
                sig = f"{sig}#{k}"
        labels.append(sig)
    return labels


def empirical_neighborhood(net, r: int, mode: str = "shape", size_cap: int = DEFAULT_SIZE_CAP,
                           exact_limit: int = 50) -> EmpiricalMeasure:
    """Empirical law of the rooted r-balls.

    ``mode="shape"``: atoms are canonical shape signatures.  Colour-refinement
    classes are split further by an exact isomorphism check when balls have at
    most ``exact_limit`` vertices; split classes get a ``#k`` suffix.

    ``mode="features"``: atoms are per-vertex feature rows (ball size, boundary
    size, degree counts 0..4 and >=5 within the ball, mean media, mean initial
    condition, mean edge weight).
    """
    if r < 0:
        raise ValueError("radius must be nonnegative")
    g = net.graph if isinstance(net, MarkedNetwork) else net
    if isinstance(g, RootedTree):
        g = g.graph
    if mode == "shape":
        return EmpiricalMeasure.from_labels(shape_labels(g, r, size_cap, exact_limit))
    if mode == "features":
        if not isinstance(net, MarkedNetwork):
            raise ValueError("feature mode needs a marked network")
        rows = []
        for v in range(g.n):
            bn = rooted_ball_network(net, v, r)
            deg = bn.network.graph.degrees()
            hist = np.bincount(np.minimum(deg, 5), minlength=6)
            w = bn.network.slot_weight
            rows.append([bn.network.n, bn.boundary.size, *hist,
                         bn.network.omega.mean(), bn.network.theta0.mean(),
                         w.mean() if w.size else 0.0])
        return EmpiricalMeasure.uniform(np.array(rows, dtype=float))
    raise ValueError(f"unknown mode {mode!r}")


def star_signature(k: int) -> str:
    """Shape signature of a root with ``k`` leaf neighbours at radius 1."""
    g = Graph.from_edges(k + 1, [[0, i] for i in range(1, k + 1)])
    return shape_signature(g, 0, 1)
