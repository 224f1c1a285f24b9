"""Graph samplers and ball/boundary primitives.

Graphs are stored in CSR form with sorted, duplicate-free neighbour lists.
Vertex ids are dense integers ``0..n-1``; every extraction keeps an explicit
map back to the parent's ids.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy import stats

from .errors import ResourceLimitError
from .seeding import rng_for

DEFAULT_MAX_VERTICES = 10**7


# ---------------------------------------------------------------------------
# Graph


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph in CSR form."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    allows_loops: bool = False

    def __post_init__(self):
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)

    @classmethod
    def from_edges(cls, n: int, edges, allows_loops: bool = False) -> "Graph":
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ValueError("edge endpoint out of range")
        if not allows_loops and np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loop in a loop-free graph")
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        loops = src == dst
        if loops.any():  # a loop appears once in its vertex's list
            keep = ~loops
            keep[np.flatnonzero(loops)[: loops.sum() // 2]] = True
            src, dst = src[keep], dst[keep]
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        if src.size > 1:
            dup = (src[1:] == src[:-1]) & (dst[1:] == dst[:-1])
            if dup.any():
                raise ValueError("duplicate edge")
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(int(n), indptr, dst.astype(np.int64), allows_loops)

    @property
    def vertex_count(self) -> int:
        return self.n

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edges(self) -> np.ndarray:
        """Edges ``(u, v)`` with ``u <= v``, sorted lexicographically."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees())
        keep = src <= self.indices
        return np.stack([src[keep], self.indices[keep]], axis=1)

    def slot_sources(self) -> np.ndarray:
        """Source vertex of every adjacency slot."""
        return np.repeat(np.arange(self.n, dtype=np.int64), self.degrees())

    def reverse_slots(self) -> np.ndarray:
        """``rev[p]`` is the slot of the reversed edge of slot ``p``."""
        order = np.lexsort((self.slot_sources(), self.indices))
        rev = np.empty(order.size, dtype=np.int64)
        rev[order] = np.arange(order.size)
        return rev

    @property
    def edge_count(self) -> int:
        return int(self.edges().shape[0])

    def is_symmetric(self) -> bool:
        e = self.edges()
        rebuilt = Graph.from_edges(self.n, e, self.allows_loops)
        return (np.array_equal(rebuilt.indptr, self.indptr)
                and np.array_equal(rebuilt.indices, self.indices))

    def content_hash(self) -> str:
        h = hashlib.blake2b(digest_size=16)
        h.update(np.int64(self.n).tobytes())
        h.update(self.indptr.astype("<i8").tobytes())
        h.update(self.indices.astype("<i8").tobytes())
        return h.hexdigest()

    def to_json_dict(self) -> dict:
        return {"n": self.n, "edges": self.edges().tolist()}

    @classmethod
    def from_json_dict(cls, d: dict) -> "Graph":
        return cls.from_edges(int(d["n"]), d.get("edges", []))


@dataclass(frozen=True, eq=False)
class RootedTree:
    graph: Graph
    root: int
    depth_of: np.ndarray
    truncated_at: int

    @property
    def n(self) -> int:
        return self.graph.n

    def level(self, h: int) -> np.ndarray:
        return np.flatnonzero(self.depth_of == h)

    def generation_sizes(self) -> np.ndarray:
        return np.bincount(self.depth_of, minlength=self.truncated_at + 1)

    def to_json_dict(self) -> dict:
        d = self.graph.to_json_dict()
        d["root"] = int(self.root)
        d["depth"] = self.depth_of.tolist()
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "RootedTree":
        g = Graph.from_json_dict(d)
        depth = np.asarray(d["depth"], dtype=np.int64)
        return cls(g, int(d["root"]), depth, int(depth.max(initial=0)))


# ---------------------------------------------------------------------------
# Offspring laws


@dataclass(frozen=True)
class OffspringLaw:
    """Offspring distribution: Poisson(c), Binomial(n, p), Deterministic(d) or Empirical(pmf)."""

    kind: str
    params: tuple = ()
    pmf_values: tuple = field(default=(), repr=False)

    def __post_init__(self):
        k, p = self.kind, self.params
        if k == "poisson":
            if not p[0] > 0:
                raise ValueError("Poisson mean must be positive")
        elif k == "binomial":
            if int(p[0]) < 1 or not 0.0 <= p[1] <= 1.0:
                raise ValueError("invalid Binomial parameters")
        elif k == "deterministic":
            if int(p[0]) < 0:
                raise ValueError("Deterministic offspring must be nonnegative")
        elif k == "empirical":
            w = np.asarray(self.pmf_values, dtype=float)
            if w.size == 0 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("empirical pmf must be nonnegative and sum to 1")
        else:
            raise ValueError(f"unknown offspring law {k!r}")

    def pmf(self, k) -> np.ndarray:
        k = np.asarray(k)
        if self.kind == "poisson":
            return stats.poisson.pmf(k, self.params[0])
        if self.kind == "binomial":
            return stats.binom.pmf(k, int(self.params[0]), self.params[1])
        if self.kind == "deterministic":
            return (k == int(self.params[0])).astype(float)
        w = np.asarray(self.pmf_values, dtype=float)
        kk = np.asarray(k, dtype=np.int64)
        out = np.zeros(kk.shape)
        ok = (kk >= 0) & (kk < w.size)
        out[ok] = w[kk[ok]]
        return out

    def mean(self) -> float:
        if self.kind == "poisson":
            return float(self.params[0])
        if self.kind == "binomial":
            return float(self.params[0] * self.params[1])
        if self.kind == "deterministic":
            return float(self.params[0])
        w = np.asarray(self.pmf_values, dtype=float)
        return float(np.dot(np.arange(w.size), w))

    def support_max(self, tail: float = 1e-12) -> int:
        """Largest k kept when the tail beyond it has mass at most ``tail``."""
        if self.kind == "poisson":
            return int(stats.poisson.isf(tail, self.params[0])) + 1
        if self.kind == "binomial":
            return int(self.params[0])
        if self.kind == "deterministic":
            return int(self.params[0])
        return len(self.pmf_values) - 1

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "poisson":
            return rng.poisson(self.params[0], size)
        if self.kind == "binomial":
            return rng.binomial(int(self.params[0]), self.params[1], size)
        if self.kind == "deterministic":
            return np.full(size, int(self.params[0]), dtype=np.int64)
        w = np.asarray(self.pmf_values, dtype=float)
        return rng.choice(w.size, size=size, p=w)


def Poisson(c: float) -> OffspringLaw:
    return OffspringLaw("poisson", (float(c),))


def Binomial(n: int, p: float) -> OffspringLaw:
    return OffspringLaw("binomial", (int(n), float(p)))


def Deterministic(d: int) -> OffspringLaw:
    return OffspringLaw("deterministic", (int(d),))


def Empirical(pmf) -> OffspringLaw:
    return OffspringLaw("empirical", (), tuple(float(x) for x in pmf))


def size_biased_shift(law: OffspringLaw, tail: float = 1e-12) -> OffspringLaw:
    """Law of (offspring - 1) under size biasing: P^(k) = (k+1) P(k+1) / mean."""
    m = law.mean()
    if not m > 0:
        raise ValueError("size-biased shift needs a positive mean")
    kmax = law.support_max(tail)
    k = np.arange(kmax + 1)
    w = (k[:-1] + 1) * law.pmf(k[1:]) / m
    if w.size == 0:
        w = np.array([1.0])
    w = w / w.sum()
    return Empirical(w)


# ---------------------------------------------------------------------------
# Samplers


def sample_erdos_renyi(n: int, p: float, seed: int) -> Graph:
    if n < 1 or not 0.0 <= p <= 1.0:
        raise ValueError("need n >= 1 and 0 <= p <= 1")
    rng = rng_for(seed, "erdos_renyi", n, float(p))
    npairs = n * (n - 1) // 2
    m = int(rng.binomial(npairs, p)) if npairs else 0
    k = np.sort(rng.choice(npairs, size=m, replace=False)) if m else np.zeros(0, np.int64)
    # pair index k = j(j-1)/2 + i with i < j
    j = np.floor((1.0 + np.sqrt(1.0 + 8.0 * k.astype(float))) / 2.0).astype(np.int64)
    j -= (j * (j - 1) // 2 > k)
    j += ((j + 1) * j // 2 <= k)
    i = k - j * (j - 1) // 2
    return Graph.from_edges(n, np.stack([i, j], axis=1))


def sample_random_regular(n: int, d: int, seed: int, max_tries: int = 10000) -> Graph:
    if (n * d) % 2:
        raise ValueError("n*d must be even")
    if d < 3 or d >= n:
        raise ValueError("need 3 <= d < n")
    rng = rng_for(seed, "random_regular", n, d)
    stubs = np.repeat(np.arange(n, dtype=np.int64), d)
    for _ in range(max_tries):
        perm = rng.permutation(stubs)
        a, b = perm[0::2], perm[1::2]
        if np.any(a == b):
            continue
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        key = lo * n + hi
        if np.unique(key).size != key.size:
            continue
        return Graph.from_edges(n, np.stack([lo, hi], axis=1))
    raise ResourceLimitError("configuration model kept producing loops or multi-edges")


def sample_cycle(n: int) -> Graph:
    if n < 3:
        raise ValueError("a cycle needs at least 3 vertices")
    v = np.arange(n)
    return Graph.from_edges(n, np.stack([np.minimum(v, (v + 1) % n), np.maximum(v, (v + 1) % n)], 1))


def path_graph(n: int) -> Graph:
    v = np.arange(n - 1)
    return Graph.from_edges(n, np.stack([v, v + 1], 1))


def complete_graph(n: int) -> Graph:
    i, j = np.triu_indices(n, 1)
    return Graph.from_edges(n, np.stack([i, j], 1))


def sample_gw_tree(law: OffspringLaw, root_law: OffspringLaw, max_depth: int, seed: int,
                   max_vertices: int = DEFAULT_MAX_VERTICES) -> RootedTree:
    """Galton-Watson tree truncated after ``max_depth`` generations.

    Vertices are numbered generation by generation, so the root is 0 and each
    generation is a contiguous id range.
    """
    if max_depth < 0:
        raise ValueError("max_depth must be nonnegative")
    rng = rng_for(seed, "gw_tree", max_depth)
    parents = [np.zeros(0, dtype=np.int64)]
    depth = [np.zeros(1, dtype=np.int64)]
    level = np.zeros(1, dtype=np.int64)
    total = 1
    for g in range(max_depth):
        if level.size == 0:
            break
        kids = (root_law if g == 0 else law).sample(rng, level.size).astype(np.int64)
        nk = int(kids.sum())
        if total + nk > max_vertices:
            raise ResourceLimitError(f"tree exceeds {max_vertices} vertices")
        parents.append(np.repeat(level, kids))
        new = np.arange(total, total + nk, dtype=np.int64)
        depth.append(np.full(nk, g + 1, dtype=np.int64))
        total += nk
        level = new
    par = np.concatenate(parents)
    child = np.arange(1, total, dtype=np.int64)
    g = Graph.from_edges(total, np.stack([par, child], 1))
    return RootedTree(g, 0, np.concatenate(depth), max_depth)


# ---------------------------------------------------------------------------
# Balls and boundaries


@nb.njit(cache=True)
def _bfs(indptr, indices, n, root, r):
    dist = np.full(n, -1, dtype=np.int64)
    order = np.empty(n, dtype=np.int64)
    dist[root] = 0
    order[0] = root
    head, tail = 0, 1
    while head < tail:
        v = order[head]
        head += 1
        if r >= 0 and dist[v] >= r:
            continue
        for p in range(indptr[v], indptr[v + 1]):
            u = indices[p]
            if dist[u] < 0:
                dist[u] = dist[v] + 1
                order[tail] = u
                tail += 1
    return order[:tail], dist


@nb.njit(cache=True)
def _induced(indptr, indices, verts, n):
    """CSR of the subgraph induced by sorted ``verts`` (local ids = positions)."""
    loc = np.full(n, -1, dtype=np.int64)
    for i in range(verts.size):
        loc[verts[i]] = i
    cnt = np.zeros(verts.size + 1, dtype=np.int64)
    for i in range(verts.size):
        v = verts[i]
        for p in range(indptr[v], indptr[v + 1]):
            if loc[indices[p]] >= 0:
                cnt[i + 1] += 1
    for i in range(verts.size):
        cnt[i + 1] += cnt[i]
    out = np.empty(cnt[-1], dtype=np.int64)
    isb = np.zeros(verts.size, dtype=np.bool_)
    k = 0
    for i in range(verts.size):
        v = verts[i]
        for p in range(indptr[v], indptr[v + 1]):
            u = loc[indices[p]]
            if u >= 0:
                out[k] = u
                k += 1
            else:
                isb[i] = True
    return cnt, out, isb


def distances(g: Graph, root: int, r: int = -1) -> np.ndarray:
    """Graph distance from ``root`` (-1 for unreachable or beyond ``r``)."""
    return _bfs(g.indptr, g.indices, g.n, int(root), int(r))[1]


@dataclass(frozen=True, eq=False)
class RootedBall:
    graph: Graph
    root: int
    boundary: np.ndarray
    to_parent: np.ndarray
    dist: np.ndarray
    radius: int


def ball(g: Graph, root: int, r: int) -> RootedBall:
    """Subgraph induced by vertices within distance ``r`` of ``root``.

    Local ids follow the order of parent ids, which keeps neighbour order (and
    hence floating-point summation order) identical to the parent's.
    """
    if not 0 <= root < g.n:
        raise ValueError("root not in graph")
    if r < 0:
        raise ValueError("radius must be nonnegative")
    order, dist = _bfs(g.indptr, g.indices, g.n, int(root), int(r))
    verts = np.sort(order)
    indptr, indices, isb = _induced(g.indptr, g.indices, verts, g.n)
    sub = Graph(int(verts.size), indptr, indices, g.allows_loops)
    return RootedBall(sub, int(np.searchsorted(verts, root)), np.flatnonzero(isb),
                      verts, dist[verts], int(r))


def boundary(g: Graph, vertex_set) -> np.ndarray:
    """Vertices of the set having a neighbour outside it."""
    vs = np.unique(np.asarray(vertex_set, dtype=np.int64))
    inside = np.zeros(g.n, dtype=bool)
    inside[vs] = True
    return np.array([v for v in vs if np.any(~inside[g.neighbors(v)])], dtype=np.int64)


@dataclass(frozen=True)
class GrowthProfile:
    boundary_sizes: np.ndarray  # index r-1 holds |boundary of the r-ball|
    a: float


def boundary_growth_profile(g, root: int | None = None, r_max: int = 1,
                            a_lo: float = 1e-6, a_hi: float = 64.0) -> GrowthProfile:
    """Boundary sizes of the r-balls, r = 1..r_max, and the smallest a with
    |boundary_r| <= a exp(a r) for all r (bisection to 1e-9)."""
    if isinstance(g, RootedTree):
        root = g.root if root is None else root
        g = g.graph
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    dist = distances(g, root)
    src = np.repeat(np.arange(g.n), g.degrees())
    # v at distance r is on the boundary iff some neighbour is at r+1 or unreachable-beyond
    dn = dist[g.indices]
    outward = (dist[src] >= 0) & (dn == dist[src] + 1)
    has_out = np.zeros(g.n, dtype=bool)
    has_out[src[outward]] = True
    sizes = np.array([int(np.sum(has_out & (dist == r))) for r in range(1, r_max + 1)])
    rs = np.arange(1, r_max + 1, dtype=float)

    def ok(a):
        return bool(np.all(sizes <= a * np.exp(a * rs)))

    if ok(a_lo):
        return GrowthProfile(sizes, a_lo)
    if not ok(a_hi):
        raise ValueError("growth exceeds the envelope search range")
    lo, hi = a_lo, a_hi
    while hi - lo > 1e-9:
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return GrowthProfile(sizes, hi)


def disjoint_union(graphs) -> tuple[Graph, np.ndarray]:
    """Disjoint union; returns the graph and the vertex offset of each part."""
    offsets = np.zeros(len(graphs) + 1, dtype=np.int64)
    for i, gi in enumerate(graphs):
        offsets[i + 1] = offsets[i] + gi.n
    indptr = [np.zeros(1, dtype=np.int64)]
    indices = []
    base = 0
    for gi, off in zip(graphs, offsets):
        indptr.append(gi.indptr[1:] + base)
        indices.append(gi.indices + off)
        base += gi.indices.size
    return (Graph(int(offsets[-1]), np.concatenate(indptr),
                  np.concatenate(indices) if indices else np.zeros(0, np.int64)),
            offsets)


def poisson_tv(degrees: np.ndarray, c: float, kmax: int = 20) -> float:
    """Total-variation distance between a degree sample and Poisson(c) on 0..kmax."""
    emp = np.bincount(np.minimum(degrees, kmax + 1), minlength=kmax + 2)[: kmax + 2] / degrees.size
    ref = stats.poisson.pmf(np.arange(kmax + 1), c)
    ref = np.append(ref, max(0.0, 1.0 - ref.sum()))
    return 0.5 * float(np.abs(emp - ref).sum())

