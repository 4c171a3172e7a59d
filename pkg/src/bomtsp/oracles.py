"""Brute-force reference implementations for small inputs.

Exponential by design; they share no code with the fast routines they check.
"""

from __future__ import annotations

import itertools

import numpy as np


def matching_brute_force(costs: np.ndarray, verts) -> float:
    """Minimum perfect matching cost by recursion over partners of the first vertex."""
    verts = list(verts)

    def rec(rest):
        if not rest:
            return 0.0
        a = rest[0]
        return min(costs[a, b] + rec(rest[1:i] + rest[i + 1:]) for i, b in enumerate(rest) if i > 0)

    return float(rec(verts))


def tsp_brute_force(costs: np.ndarray) -> float:
    n = len(costs)
    if n <= 1:
        return 0.0
    best = np.inf
    for perm in itertools.permutations(range(1, n)):
        if perm[0] > perm[-1]:
            continue  # each cycle once per direction
        tour = (0,) + perm
        best = min(best, sum(costs[tour[i], tour[(i + 1) % n]] for i in range(n)))
    return float(best)


def min_cut_enumeration(n: int, weights: dict) -> tuple[float, tuple[int, ...]]:
    """Global minimum cut over all proper vertex subsets containing vertex 0."""
    best, arg = np.inf, ()
    others = range(1, n)
    for r in range(0, n - 1):
        for rest in itertools.combinations(others, r):
            side = {0, *rest}
            val = sum(w for (u, v), w in weights.items() if (u in side) != (v in side))
            if val < best:
                best, arg = val, tuple(sorted(side))
    return float(best), arg


def lp_vertex_enumeration(c, A_ub, b_ub, lower, upper, A_eq=None, b_eq=None, tol=1e-9):
    """Optimum of ``min c.x`` over a bounded polytope by enumerating vertices.

    Returns None when infeasible. All variables need finite bounds.
    """
    c = np.asarray(c, dtype=float)
    nv = len(c)
    rows = [np.asarray(A_ub, dtype=float).reshape(-1, nv)]
    rhs = [np.asarray(b_ub, dtype=float).reshape(-1)]
    eye = np.eye(nv)
    rows += [-eye, eye]
    rhs += [-np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)]
    G = np.vstack(rows)
    h = np.concatenate(rhs)
    E = np.zeros((0, nv)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, nv)
    f = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    need = nv - len(E)
    best = None
    for tight in itertools.combinations(range(len(G)), need):
        M = np.vstack([E, G[list(tight)]])
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, np.concatenate([f, h[list(tight)]]))
        if np.all(G @ x <= h + tol * (1 + np.abs(h))) and np.allclose(E @ x, f, atol=tol):
            val = float(c @ x)
            if best is None or val < best:
                best = val
    return best


def spanning_trees(n: int, edges) -> list[tuple[tuple[int, int], ...]]:
    """All spanning trees of a (multi)graph given as an edge list; trees are index tuples."""
    edges = list(edges)
    out = []
    for combo in itertools.combinations(range(len(edges)), n - 1):
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                a = parent[a]
            return a

        ok = True
        for k in combo:
            u, v = edges[k]
            ru, rv = find(u), find(v)
            if ru == rv:
                ok = False
                break
            parent[ru] = rv
        if ok:
            out.append(combo)
    return out


def tree_distribution(n: int, edges, weights) -> tuple[list, np.ndarray, np.ndarray]:
    """Trees (index tuples), their probabilities under prod-of-weights, and edge marginals."""
    trees = spanning_trees(n, edges)
    w = np.asarray(weights, dtype=float)
    probs = np.array([np.prod(w[list(t)]) for t in trees])
    probs /= probs.sum()
    marg = np.zeros(len(w))
    for t, p in zip(trees, probs):
        marg[list(t)] += p
    return trees, probs, marg


def prufer_trees(n: int):
    """Every labelled tree on ``n >= 2`` vertices, as edge lists."""
    if n == 2:
        yield [(0, 1)]
        return
    for seq in itertools.product(range(n), repeat=n - 2):
        degree = [1] * n
        for v in seq:
            degree[v] += 1
        edges = []
        for v in seq:
            leaf = next(u for u in range(n) if degree[u] == 1)
            edges.append((min(leaf, v), max(leaf, v)))
            degree[leaf] -= 1
            degree[v] -= 1
        u, w = [x for x in range(n) if degree[x] == 1]
        edges.append((u, w))
        yield edges


def mst_brute_force(costs: np.ndarray) -> float:
    n = len(costs)
    return float(min(sum(costs[u, v] for u, v in t) for t in prufer_trees(n)))


def lp_basis_enumeration(c, A, b, tol=1e-9):
    """Optimum of ``min c.x, A x <= b, x >= 0`` over all basic feasible solutions.

    Slack columns are appended and every choice of ``m`` basic columns is
    solved; batched so that an 8 x 12 problem (126k bases) takes seconds.
    Returns None when no basis is feasible.
    """
    A = np.asarray(A, dtype=float)
    m, nv = A.shape
    full = np.hstack([A, np.eye(m)])
    cost = np.concatenate([np.asarray(c, dtype=float), np.zeros(m)])
    b = np.asarray(b, dtype=float)
    best = None
    combos = np.array(list(itertools.combinations(range(nv + m), m)))
    for chunk in np.array_split(combos, max(1, len(combos) // 20000)):
        B = full[:, chunk].transpose(1, 0, 2)
        ok = np.abs(np.linalg.det(B)) > 1e-10
        if not ok.any():
            continue
        xb = np.linalg.solve(B[ok], np.broadcast_to(b, (int(ok.sum()), m))[..., None])[..., 0]
        feas = np.all(xb >= -tol, axis=1)
        if feas.any():
            vals = np.einsum("ij,ij->i", cost[chunk[ok][feas]], xb[feas])
            v = float(vals.min())
            best = v if best is None else min(best, v)
    return best
