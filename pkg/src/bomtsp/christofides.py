"""Christofides pipeline: spanning tree, odd-vertex matching, Euler tour, shortcut."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from bomtsp.blossom import min_weight_perfect_matching_dense
from bomtsp.errors import InputError
from bomtsp.instance_io import Instance


def _costs_of(inst) -> np.ndarray:
    return inst.costs() if isinstance(inst, Instance) else np.asarray(inst, dtype=float)


class _DisjointSet:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        p = self.parent
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


@dataclass(frozen=True)
class Tree:
    """Spanning tree on vertices ``0..n-1``; edges are sorted ``(u, v)`` pairs, ``u < v``."""

    n: int
    edges: tuple[tuple[int, int], ...]

    def __init__(self, n: int, edges):
        norm = tuple(sorted((min(int(u), int(v)), max(int(u), int(v))) for u, v in edges))
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "edges", norm)
        self.validate()

    def validate(self):
        if self.n < 1:
            raise ValueError("a tree needs at least one vertex")
        if len(self.edges) != self.n - 1:
            raise ValueError(f"spanning tree on {self.n} vertices needs {self.n - 1} edges, got {len(self.edges)}")
        ds = _DisjointSet(self.n)
        for u, v in self.edges:
            if not (0 <= u < v < self.n):
                raise ValueError(f"invalid tree edge ({u}, {v})")
            if not ds.union(u, v):
                raise ValueError("edge set contains a cycle")

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=int)
        for u, v in self.edges:
            d[u] += 1
            d[v] += 1
        return d

    def odd_vertices(self) -> list[int]:
        return np.flatnonzero(self.degrees() % 2 == 1).tolist()

    def cost(self, costs: np.ndarray) -> float:
        if not self.edges:
            return 0.0
        e = np.array(self.edges)
        return float(costs[e[:, 0], e[:, 1]].sum())

    def edge_set(self) -> frozenset:
        return frozenset(self.edges)


@dataclass(frozen=True)
class Matching:
    pairs: tuple[tuple[int, int], ...]
    cost: float


@dataclass
class Tour:
    order: list[int]
    cost: float

    def validate(self, n: int, costs: np.ndarray | None = None, tol: float = 1e-6):
        if sorted(self.order) != list(range(n)):
            raise ValueError("tour is not a permutation of the vertices")
        if costs is not None:
            actual = tour_cost(self.order, costs)
            if abs(actual - self.cost) > tol * max(1.0, abs(actual)):
                raise ValueError(f"tour cost {self.cost} disagrees with order ({actual})")


def tour_cost(order, costs: np.ndarray) -> float:
    o = np.asarray(order)
    if len(o) < 2:
        return 0.0
    return float(costs[o, np.roll(o, -1)].sum())


def minimum_spanning_tree(inst, perturb_seed: int | None = None) -> Tree:
    """Prim's algorithm on the dense cost table.

    Graph instances get independent perturbations in ``(0, 1/(2n^2))`` per
    pair so ties among the unit-cost graph edges are broken at random (seeded;
    seed 0 when none is given). Unperturbed tree cost stays exactly ``n-1``.
    """
    c = _costs_of(inst)
    n = len(c)
    if n < 1:
        raise InputError("minimum spanning tree needs at least one vertex")
    if isinstance(inst, Instance) and inst.is_graph:
        rng = np.random.default_rng(0 if perturb_seed is None else perturb_seed)
        p = (1.0 - rng.random((n, n))) * (0.999 / (2 * n * n))
        p = np.triu(p, 1)
        c = c + p + p.T
    return Tree(n, prim(c))


def prim(c: np.ndarray) -> list[tuple[int, int]]:
    n = len(c)
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = c[0].astype(float).copy()
    parent = np.zeros(n, dtype=int)
    best[0] = np.inf
    edges = []
    for _ in range(n - 1):
        v = int(np.argmin(best))
        edges.append((int(parent[v]), v))
        in_tree[v] = True
        best[v] = np.inf
        closer = (~in_tree) & (c[v] < best)
        best[closer] = c[v][closer]
        parent[closer] = v
    return edges


def min_weight_perfect_matching(costs: np.ndarray, verts) -> Matching:
    """Minimum cost perfect matching on ``verts`` under ``costs``."""
    verts = [int(v) for v in verts]
    if len(verts) % 2:
        raise InputError(f"cannot perfectly match an odd number ({len(verts)}) of vertices")
    if len(set(verts)) != len(verts):
        raise InputError("matching vertex set has duplicates")
    if not verts:
        return Matching((), 0.0)
    sub = np.asarray(costs, dtype=float)[np.ix_(verts, verts)]
    local = min_weight_perfect_matching_dense(sub)
    pairs = tuple(sorted((min(verts[i], verts[j]), max(verts[i], verts[j])) for i, j in local))
    return Matching(pairs, float(sum(sub[i, j] for i, j in local)))


def eulerian_circuit(edges, start: int | None = None) -> list[int]:
    """Closed walk (first vertex repeated at the end) using every multiedge once."""
    edges = [(int(u), int(v)) for u, v in edges]
    if not edges:
        raise InputError("Eulerian circuit of an empty edge set")
    adj = defaultdict(list)
    for k, (u, v) in enumerate(edges):
        adj[u].append((v, k))
        adj[v].append((u, k))
    odd = [v for v, lst in adj.items() if len(lst) % 2]
    if odd:
        raise InputError(f"vertices {sorted(odd)[:5]} have odd degree")
    if start is None:
        start = edges[0][0]
    if start not in adj:
        raise InputError(f"start vertex {start} has no edges")
    used = [False] * len(edges)
    ptr = defaultdict(int)
    stack, walk = [start], []
    while stack:
        v = stack[-1]
        lst = adj[v]
        i = ptr[v]
        while i < len(lst) and used[lst[i][1]]:
            i += 1
        ptr[v] = i
        if i == len(lst):
            walk.append(stack.pop())
        else:
            w, k = lst[i]
            used[k] = True
            stack.append(w)
    if not all(used):
        raise InputError("multigraph is disconnected")
    return walk[::-1]


def shortcut_plain(walk, costs: np.ndarray) -> Tour:
    """Keep the first visit of every vertex."""
    seen, order = set(), []
    for v in walk:
        if v not in seen:
            seen.add(v)
            order.append(int(v))
    return Tour(order, tour_cost(order, costs))


def shortcut(walk, costs: np.ndarray) -> Tour:
    """Shortcut a closed walk, relocating repeated vertices when that is cheaper.

    The tour is grown as a cycle closed back to the first vertex. On a repeat
    visit of ``v`` the cost of moving ``v`` behind the current tail is compared
    with skipping it; ties skip. The result is never worse than
    :func:`shortcut_plain`, which it falls back on.
    """
    c = np.asarray(costs, dtype=float)
    walk = [int(v) for v in walk]
    if not walk:
        return Tour([], 0.0)
    nxt, prv = {}, {}
    head = tail = walk[0]
    nxt[head] = prv[head] = head
    for v in walk[1:]:
        if v not in nxt:
            s = nxt[tail]
            nxt[tail], prv[v], nxt[v], prv[s] = v, tail, s, v
            tail = v
            continue
        if v == tail or v == nxt[tail]:
            continue
        p, q = prv[v], nxt[v]
        s = nxt[tail]
        gain = c[p, v] + c[v, q] - c[p, q]
        # after removing v, the slot behind tail is tail -> s unless v == s (excluded above)
        add = c[tail, v] + c[v, s] - c[tail, s]
        if add < gain:
            nxt[p], prv[q] = q, p
            nxt[tail], prv[v], nxt[v], prv[s] = v, tail, s, v
            if v == head:
                head = q
            tail = v
    order, v = [], head
    for _ in range(len(nxt)):
        order.append(v)
        v = nxt[v]
    opt = Tour(order, tour_cost(order, c))
    plain = shortcut_plain(walk, c)
    return opt if opt.cost <= plain.cost else plain


@dataclass
class ChristofidesRun:
    tour: Tour
    tree_cost: float
    matching: Matching
    n_odd: int
    walk: list[int] = field(default_factory=list, repr=False)


def christofides_run(inst, t: Tree) -> ChristofidesRun:
    c = _costs_of(inst)
    n = len(c)
    if t.n != n:
        raise InputError(f"tree spans {t.n} vertices but the instance has {n}")
    if n == 1:
        return ChristofidesRun(Tour([0], 0.0), 0.0, Matching((), 0.0), 0, [0])
    odd = t.odd_vertices()
    m = min_weight_perfect_matching(c, odd)
    walk = eulerian_circuit(list(t.edges) + list(m.pairs), start=0)
    tour = shortcut(walk, c)
    return ChristofidesRun(tour, t.cost(c), m, len(odd), walk)


def christofides_from_tree(inst, t: Tree) -> Tour:
    return christofides_run(inst, t).tour


def run_standard(inst, perturb_seed: int | None = None) -> Tour:
    return christofides_from_tree(inst, minimum_spanning_tree(inst, perturb_seed))


def tour_to_text(tour: Tour) -> str:
    return "".join(f"{v}\n" for v in tour.order) + f"COST {float(tour.cost)!r}\n"


def tour_from_text(text: str) -> Tour:
    order, cost = [], None
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.upper().startswith("COST"):
            cost = float(line.split()[1])
        else:
            order.append(int(line))
    if cost is None:
        raise InputError("tour file lacks a COST footer")
    return Tour(order, cost)
