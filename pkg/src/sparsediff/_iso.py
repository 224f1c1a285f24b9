"""Rooted isomorphism search on small graphs.

A rooted ball is described by adjacency lists, a root, and optional marks.
``min_max_isomorphism`` returns the smallest achievable maximum mark
discrepancy over root-preserving isomorphisms (``inf`` when the shapes differ).
Trees go through a bottom-up bottleneck-matching recursion; other graphs use
backtracking over a BFS order with colour-refinement pruning.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

INF = math.inf


@dataclass
class SmallRooted:
    adj: list            # list of sorted neighbour lists
    root: int
    vmarks: np.ndarray | None = None   # (n, k) scaled vertex marks
    emarks: dict | None = None          # {(i, j): scaled weight} with i < j

    @property
    def n(self):
        return len(self.adj)

    def edge_count(self):
        return sum(len(a) for a in self.adj) // 2

    def bfs(self):
        dist = [-1] * self.n
        parent = [-1] * self.n
        order = [self.root]
        dist[self.root] = 0
        for v in order:
            for u in self.adj[v]:
                if dist[u] < 0:
                    dist[u] = dist[v] + 1
                    parent[u] = v
                    order.append(u)
        return order, dist, parent

    def ew(self, i, j):
        return self.emarks[(i, j) if i < j else (j, i)]


def _h(s: str) -> str:
    return hashlib.blake2b(s.encode(), digest_size=10).hexdigest()


def wl_labels(g: SmallRooted, rounds: int) -> list:
    """Colour refinement seeded with (distance to root, degree)."""
    _, dist, _ = g.bfs()
    lab = [_h(f"{dist[v]}|{len(g.adj[v])}") for v in range(g.n)]
    for _ in range(rounds):
        lab = [_h(lab[v] + "(" + ",".join(sorted(lab[u] for u in g.adj[v])) + ")")
               for v in range(g.n)]
    return lab


def wl_signature(g: SmallRooted, rounds: int) -> str:
    lab = wl_labels(g, rounds)
    return _h(f"{g.n}|{g.edge_count()}|{lab[g.root]}|" + ",".join(sorted(lab)))


def is_tree(g: SmallRooted) -> bool:
    order, _, _ = g.bfs()
    return len(order) == g.n and g.edge_count() == g.n - 1


def _vcost(A, B, a, b):
    if A.vmarks is None:
        return 0.0
    return float(np.max(np.abs(A.vmarks[a] - B.vmarks[b]))) if A.vmarks.shape[1] else 0.0


def _ecost(A, B, a1, a2, b1, b2):
    if A.emarks is None:
        return 0.0
    return abs(A.ew(a1, a2) - B.ew(b1, b2))


def _bottleneck(C: np.ndarray) -> float:
    """min over perfect matchings of the max entry (inf if none is finite)."""
    k = C.shape[0]
    if k == 0:
        return 0.0
    if k == 1:
        return float(C[0, 0])
    vals = np.unique(C[np.isfinite(C)])
    if vals.size == 0:
        return INF
    # the linear assignment of the finite-capped matrix gives a quick feasibility test
    big = np.where(np.isfinite(C), C, 1e300)
    r, c = linear_sum_assignment(big)
    if not np.all(np.isfinite(C[r, c])):
        return INF
    lo, hi = 0, int(np.searchsorted(vals, C[r, c].max()))
    while lo < hi:
        mid = (lo + hi) // 2
        m = maximum_bipartite_matching(csr_matrix(C <= vals[mid]), perm_type="column")
        if np.all(m >= 0):
            hi = mid
        else:
            lo = mid + 1
    return float(vals[lo])


def _tree_min_max(A: SmallRooted, B: SmallRooted) -> float:
    oa, da, pa = A.bfs()
    ob, db, pb = B.bfs()
    ka = [[u for u in A.adj[v] if pa[u] == v and u != A.root] for v in range(A.n)]
    kb = [[u for u in B.adj[v] if pb[u] == v and u != B.root] for v in range(B.n)]

    def canon(kids, order):
        c = [None] * len(kids)
        for v in reversed(order):
            c[v] = "(" + "".join(sorted(c[u] for u in kids[v])) + ")"
        return c

    ca, cb = canon(ka, oa), canon(kb, ob)
    if ca[A.root] != cb[B.root]:
        return INF
    memo = {}
    # bottom-up by depth: deepest first
    for v in reversed(oa):
        for w in ob:
            if db[w] != da[v] or cb[w] != ca[v]:
                continue
            kv, kw = ka[v], kb[w]
            base = _vcost(A, B, v, w)
            if kv:
                C = np.full((len(kv), len(kw)), INF)
                for i, x in enumerate(kv):
                    for j, y in enumerate(kw):
                        f = memo.get((x, y))
                        if f is not None:
                            C[i, j] = max(f, _ecost(A, B, v, x, w, y))
                base = max(base, _bottleneck(C))
            memo[(v, w)] = base
    return memo.get((A.root, B.root), INF)


def _refined_colors(A: SmallRooted, B: SmallRooted):
    rounds = max(A.n, 1)
    la, lb = wl_labels(A, rounds), wl_labels(B, rounds)
    return la, lb


def _backtrack_min_max(A: SmallRooted, B: SmallRooted, first_only: bool) -> float:
    la, lb = _refined_colors(A, B)
    if sorted(la) != sorted(lb) or la[A.root] != lb[B.root]:
        return INF
    order, _, parent = A.bfs()
    n = A.n
    f = [-1] * n
    used = [False] * n
    bset = [set(x) for x in B.adj]
    best = [INF]

    def rec(i, cur):
        if i == n:
            best[0] = cur
            return
        a = order[i]
        if i == 0:
            cands = [B.root]
        else:
            cands = [b for b in B.adj[f[parent[a]]] if not used[b] and lb[b] == la[a]]
        mapped = [x for x in A.adj[a] if f[x] >= 0]
        for b in cands:
            if any(f[x] not in bset[b] for x in mapped):
                continue
            if sum(1 for y in B.adj[b] if used[y]) != len(mapped):
                continue
            c = max(cur, _vcost(A, B, a, b))
            for x in mapped:
                c = max(c, _ecost(A, B, a, x, b, f[x]))
            if c >= best[0]:
                continue
            f[a] = b
            used[b] = True
            rec(i + 1, c)
            f[a] = -1
            used[b] = False
            if best[0] == 0.0 or (first_only and best[0] < INF):
                return

    rec(0, 0.0)
    return best[0]


def min_max_isomorphism(A: SmallRooted, B: SmallRooted, method: str = "auto") -> float:
    if A.n != B.n or A.edge_count() != B.edge_count():
        return INF
    if method == "auto":
        method = "tree" if is_tree(A) and is_tree(B) else "backtrack"
    if method == "tree":
        return _tree_min_max(A, B)
    return _backtrack_min_max(A, B, first_only=False)


def rooted_isomorphic(A: SmallRooted, B: SmallRooted) -> bool:
    if A.n != B.n or A.edge_count() != B.edge_count():
        return False
    plain_a = SmallRooted(A.adj, A.root)
    plain_b = SmallRooted(B.adj, B.root)
    return _backtrack_min_max(plain_a, plain_b, first_only=True) < INF
