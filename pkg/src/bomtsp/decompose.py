"""Explicit convex combinations of spanning trees from a Subtour LP point.

Two routes:

* column generation on ``min sum(s) s.t. sum_T y_T chi_T + s = z, y, s >= 0``
  with maximum weight spanning tree pricing;
* scaling ``x`` to an integral 2K-regular, 2K-edge-connected multigraph,
  complete splitting off at all but two vertices, then lifting the splits
  back while maintaining K trees and K leftover edges.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import maximum_flow

from bomtsp.christofides import Tree, _DisjointSet
from bomtsp.errors import DecompositionError, InputError
from bomtsp.lp_solver import ITERATION_LIMIT, OPTIMAL, RevisedSimplex
from bomtsp.subtour_lp import EdgeVector

log = logging.getLogger(__name__)


@dataclass
class TreeCombination:
    """Trees with convex weights; ``K``/``leftover`` for splitting, ``residual`` for colgen."""

    n: int
    trees: list[Tree]
    weights: np.ndarray
    leftover: list[tuple[int, int]] = field(default_factory=list)
    K: int | None = None
    residual: EdgeVector | None = None
    trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.trees) != len(self.weights):
            raise ValueError("one weight per tree is required")
        if len(self.trees) == 0:
            raise ValueError("empty tree combination")
        if np.any(self.weights <= 0):
            raise ValueError("tree weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"tree weights sum to {self.weights.sum()}, not 1")

    def marginals(self) -> dict[tuple[int, int], float]:
        out: dict[tuple[int, int], float] = {}
        for t, w in zip(self.trees, self.weights):
            for e in t.edges:
                out[e] = out.get(e, 0.0) + w
        return out

    def expected_cost(self, costs: np.ndarray) -> float:
        return float(sum(w * t.cost(costs) for t, w in zip(self.trees, self.weights)))


@dataclass
class SplitRecord:
    """Splits at ``z``: each pair ``(x, y)`` replaced edges (x,z), (y,z) by (x,y)."""

    z: int
    pairs: list[tuple[int, int]]


# --------------------------------------------------------------------------
# column generation


def _kruskal(n: int, edges: np.ndarray, order: np.ndarray) -> list[tuple[int, int]]:
    ds = _DisjointSet(n)
    out = []
    for k in order:
        u, v = int(edges[k, 0]), int(edges[k, 1])
        if ds.union(u, v):
            out.append((u, v))
            if len(out) == n - 1:
                break
    if len(out) != n - 1:
        raise DecompositionError("support graph is disconnected")
    return out


def price_tree(duals: EdgeVector) -> tuple[Tree, float]:
    """Maximum weight spanning tree of the support of ``duals`` and its weight."""
    order = np.argsort(-duals.values, kind="stable")
    tree = Tree(duals.n, _kruskal(duals.n, duals.edges, order))
    index = {(int(u), int(v)): k for k, (u, v) in enumerate(duals.edges)}
    return tree, float(sum(duals.values[index[e]] for e in tree.edges))


def colgen_decompose(z: EdgeVector, drop: float | None = 0.1, patience: int | None = 100,
                     costs: np.ndarray | None = None, n_init: int = 30, seed: int = 0,
                     tol: float = 1e-6, max_iter: int = 100_000) -> TreeCombination:
    """Convex combination of spanning trees approximating ``z`` by column generation.

    Stops when the master objective falls below ``tol`` or when it failed to
    drop by ``drop`` within ``patience`` consecutive iterations (pass ``None``
    to disable this cutoff).
    """
    z = z.support(1e-12)
    n, m = z.n, len(z)
    edges = z.edges
    index = {(int(u), int(v)): k for k, (u, v) in enumerate(edges)}
    rng = np.random.default_rng(seed)

    init: list[Tree] = []
    if costs is not None:
        c = np.asarray(costs, dtype=float)[edges[:, 0], edges[:, 1]]
        init.append(Tree(n, _kruskal(n, edges, np.argsort(c, kind="stable"))))
    init.append(price_tree(z)[0])
    while len(init) < n_init:
        noisy = EdgeVector(n, edges, z.values * rng.uniform(0.5, 1.5, m))
        init.append(price_tree(noisy)[0])
    trees: list[Tree] = []
    seen = set()
    for t in init:
        if t.edges not in seen:
            seen.add(t.edges)
            trees.append(t)

    def column(t: Tree) -> np.ndarray:
        col = np.zeros(m)
        col[[index[e] for e in t.edges]] = 1.0
        return col

    master = RevisedSimplex(np.eye(m), z.values, np.ones(m), basis=np.arange(m))
    master.add_columns(np.column_stack([column(t) for t in trees]), np.zeros(len(trees)))
    trace: list[float] = []
    ref, since = np.inf, 0
    for it in range(max_iter):
        status = master.optimize()
        if status != OPTIMAL:
            raise DecompositionError(f"master LP ended with status {status}")
        obj = master.objective
        if trace and obj > trace[-1] + 1e-9 * max(1.0, trace[-1]):
            raise DecompositionError(f"master objective increased: {trace[-1]} -> {obj}")
        trace.append(obj)
        if obj < tol:
            break
        if drop is not None and patience:
            if ref - obj >= drop or not np.isfinite(ref):
                ref, since = obj, 0
            else:
                since += 1
                if since >= patience:
                    log.info("colgen cutoff after %d iterations, objective %.6g", it + 1, obj)
                    break
        tree, rc = price_tree(EdgeVector(n, edges, master.duals))
        if rc <= 1e-9:
            raise DecompositionError(
                f"pricing found no improving tree while the master objective is {obj:.3g}")
        if tree.edges in seen:
            raise DecompositionError("pricing returned a tree already in the master")
        seen.add(tree.edges)
        trees.append(tree)
        master.add_columns(column(tree), [0.0])
    else:
        raise DecompositionError(f"column generation exceeded {max_iter} iterations")

    y = master.x[m:]
    keep = np.flatnonzero(y > 1e-12)
    weights = y[keep] / y[keep].sum()
    resid = EdgeVector(n, edges, np.maximum(master.x[:m], 0.0))
    return TreeCombination(n, [trees[k] for k in keep], weights, residual=resid, trace=trace)


# --------------------------------------------------------------------------
# splitting off


def split_scale(x: EdgeVector, maxK: int = 10_000, tol: float = 1e-6) -> tuple[np.ndarray, int]:
    """Dense integer multigraph with ``K * x_e`` copies of each edge, and ``K``."""
    x = x.support(tol / 2)
    fracs = []
    K = 1
    for v in x.values:
        f = Fraction(float(v)).limit_denominator(maxK)
        if abs(float(f) - v) > tol:
            raise DecompositionError(
                f"value {v!r} is not within {tol} of a rational with denominator <= {maxK}; "
                "repair the LP solution to an exact rational vertex first")
        fracs.append(f)
        K = math.lcm(K, f.denominator)
        if K > maxK:
            raise DecompositionError(
                f"common denominator exceeds {maxK}; repair the LP solution to a rational vertex first")
    mg = np.zeros((x.n, x.n), dtype=np.int64)
    for (u, v), f in zip(x.edges, fracs):
        mult = f.numerator * (K // f.denominator)
        mg[u, v] = mg[v, u] = mult
    deg = mg.sum(axis=1)
    if np.any(deg != 2 * K):
        bad = int(np.flatnonzero(deg != 2 * K)[0])
        raise DecompositionError(f"scaled degree of vertex {bad} is {deg[bad]}, expected {2 * K}")
    return mg, K


def _merged_flow(mg: np.ndarray, src: tuple[int, ...], dst: tuple[int, ...]) -> int:
    w = mg.copy()
    s, t = src[0], dst[0]
    for a, rest in ((s, src[1:]), (t, dst[1:])):
        for b in rest:
            w[a] += w[b]
            w[:, a] += w[:, b]
            w[b] = 0
            w[:, b] = 0
    np.fill_diagonal(w, 0)
    g = sparse.csr_matrix(w.astype(np.int32))
    return int(maximum_flow(g, s, t).flow_value)


def local_connectivity(mg: np.ndarray, u: int, v: int) -> int:
    """Number of edge-disjoint u-v paths in the multigraph."""
    return _merged_flow(mg, (u,), (v,))


def _admissible(mg: np.ndarray, z: int, x: int, y: int, need: int) -> bool:
    for t in np.flatnonzero(mg[z]):
        t = int(t)
        if t in (x, y):
            continue
        if _merged_flow(mg, (x, y), (z, t)) < need + 2:
            return False
    return True


def complete_split_off(mg: np.ndarray, z: int, K: int | None = None) -> tuple[np.ndarray, SplitRecord]:
    """Split off all edges at ``z`` keeping every local connectivity >= 2K."""
    mg = np.array(mg, dtype=np.int64)
    deg = int(mg[z].sum())
    if K is None:
        K = deg // 2
    if deg != 2 * K:
        raise DecompositionError(f"vertex {z} has degree {deg}, expected {2 * K}")
    pairs = []
    for _ in range(K):
        x = int(np.argmax(mg[z]))
        for y in np.flatnonzero(mg[z]):
            y = int(y)
            if y == x:
                continue
            if _admissible(mg, z, x, y, 2 * K):
                break
        else:
            raise DecompositionError(f"no admissible partner for edge ({x}, {z})")
        for a in (x, y):
            mg[a, z] -= 1
            mg[z, a] -= 1
        mg[x, y] += 1
        mg[y, x] += 1
        pairs.append((x, y))
    return mg, SplitRecord(z, pairs)


def split_order(mg: np.ndarray) -> list[int]:
    """Vertices by ascending support degree (ties by index)."""
    support_deg = (mg > 0).sum(axis=1)
    return sorted(range(len(mg)), key=lambda v: (support_deg[v], v))


def split_all(mg: np.ndarray, K: int) -> tuple[list[SplitRecord], tuple[int, int], np.ndarray]:
    order = split_order(mg)
    records = []
    for z in order[:-2]:
        mg, rec = complete_split_off(mg, z, K)
        records.append(rec)
    a, b = sorted(order[-2:])
    if mg[a, b] != 2 * K:
        raise DecompositionError("base pair does not carry 2K parallel edges")
    return records, (a, b), mg


def _tree_distances(edges: list[tuple[int, int]], src: int) -> dict[int, int]:
    adj: dict[int, list[int]] = {}
    for u, v in edges:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    dist = {src: 0}
    stack = [src]
    while stack:
        u = stack.pop()
        for w in adj.get(u, []):
            if w not in dist:
                dist[w] = dist[u] + 1
                stack.append(w)
    return dist


def _e(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


def lift_back(records: list[SplitRecord], base: tuple[int, int], K: int, n: int
              ) -> tuple[list[list[tuple[int, int]]], list[tuple[int, int]]]:
    """Undo splits in reverse order; returns K tree edge lists and K leftover edges."""
    a, b = base
    trees = [[_e(a, b)] for _ in range(K)]
    leftover = [_e(a, b)] * K
    for rec in reversed(records):
        z = rec.z
        leaf: list[tuple[int, int]] = []
        left = Counter(leftover)
        in_trees: list[tuple[int, int]] = []
        for x, y in rec.pairs:
            e = _e(x, y)
            if left[e] > 0:
                left[e] -= 1
                left[_e(x, z)] += 1
                leaf.append(_e(y, z))
            else:
                in_trees.append(e)
        leftover = sorted(left.elements())
        claims: list[list[tuple[int, int]]] = [[] for _ in range(K)]
        for e in in_trees:
            for i in range(K):
                if e in trees[i] and e not in claims[i]:
                    claims[i].append(e)
                    break
            else:
                raise DecompositionError(f"split edge {e} of vertex {z} not found in any tree")
        for i in range(K):
            if not claims[i]:
                continue
            t = trees[i]
            x, y = claims[i][0]
            t.remove((x, y))
            t += [_e(x, z), _e(y, z)]
            for xp, yp in claims[i][1:]:
                dist = _tree_distances(t, z)
                dx, dy = dist[xp], dist[yp]
                if dx == dy:
                    raise DecompositionError("tie in tree distance, the edge set is not a tree")
                far, near = (xp, yp) if dx > dy else (yp, xp)
                t.remove(_e(xp, yp))
                t.append(_e(far, z))
                leaf.append(_e(near, z))
        for i in range(K):
            if not claims[i]:
                if not leaf:
                    raise DecompositionError(f"ran out of leaf edges lifting back vertex {z}")
                trees[i].append(leaf.pop(0))
        if leaf:
            raise DecompositionError(f"{len(leaf)} leaf edges left over at vertex {z}")
    return [sorted(t) for t in trees], leftover


def split_decompose(x: EdgeVector, maxK: int = 10_000) -> TreeCombination:
    """K trees and K leftover edges with (1/K)(sum chi_F + chi_L) = x exactly."""
    if x.n < 2:
        raise InputError("splitting off needs at least two vertices")
    mg, K = split_scale(x, maxK)
    records, base, _ = split_all(mg, K)
    trees, leftover = lift_back(records, base, K, x.n)
    return TreeCombination(x.n, [Tree(x.n, t) for t in trees], np.full(K, 1.0 / K),
                           leftover=leftover, K=K)


def split_identity_holds(tc: TreeCombination, mg: np.ndarray) -> bool:
    """Exact integer check: edge counts of trees plus leftover equal ``K x``."""
    counts = Counter()
    for t in tc.trees:
        counts.update(t.edges)
    counts.update(tc.leftover)
    n = len(mg)
    target = {(u, v): int(mg[u, v]) for u in range(n) for v in range(u + 1, n) if mg[u, v]}
    return dict(counts) == target


def verify_combination(tc: TreeCombination, target: EdgeVector) -> float:
    """Max deviation of the combination from ``target``.

    For split combinations only excess over ``target`` counts (the
    combination is dominated by ``x``); otherwise the absolute difference.
    """
    for t in tc.trees:
        t.validate()
    comb = tc.marginals()
    tmap = target.as_dict()
    keys = set(comb) | set(tmap)
    diffs = np.array([comb.get(k, 0.0) - tmap.get(k, 0.0) for k in keys])
    if not len(diffs):
        return 0.0
    if tc.K is not None:
        return float(max(0.0, diffs.max()))
    return float(np.abs(diffs).max())


# --------------------------------------------------------------------------
# serialization


def combination_to_text(tc: TreeCombination) -> str:
    lines = [f"N {tc.n}"]
    lines.append(f"K {tc.K}" if tc.K is not None else f"TREES {len(tc.trees)}")
    for t, w in zip(tc.trees, tc.weights):
        lines.append(f"TREE {float(w)!r}")
        lines += [f"{u} {v}" for u, v in t.edges]
    if tc.leftover:
        lines.append("LEFTOVER")
        lines += [f"{u} {v}" for u, v in tc.leftover]
    return "\n".join(lines) + "\n"


def combination_from_text(text: str) -> TreeCombination:
    n = K = None
    trees, weights, leftover = [], [], []
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        head, *rest = line.split()
        try:
            if head == "N":
                n = int(rest[0])
            elif head == "K":
                K = int(rest[0])
            elif head == "TREES":
                pass
            elif head == "TREE":
                current = []
                trees.append(current)
                weights.append(float(rest[0]))
            elif head == "LEFTOVER":
                current = leftover
            else:
                if current is None:
                    raise InputError(f"line {lineno}: edge outside a block")
                current.append((int(head), int(rest[0])))
        except (IndexError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"line {lineno}: malformed combination line") from None
    if n is None or not trees:
        raise InputError("combination file needs an N header and at least one TREE block")
    w = np.array(weights)
    return TreeCombination(n, [Tree(n, t) for t in trees], w / w.sum(), leftover=leftover, K=K)
