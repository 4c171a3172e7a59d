"""Subtour LP by cutting planes, and scaling into the spanning tree polytope.

The LP is solved over a sparse candidate edge set (k nearest neighbours plus
the edges of a nearest-neighbour tour). Violated subtour constraints are found
with an exact global minimum cut (Stoer-Wagner); once none remain, every edge
of the complete graph is priced with the LP duals and edges with negative
reduced cost join the candidate set. The loop ends only when both separation
and pricing come back empty, which certifies optimality for the full LP.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from bomtsp.errors import InputError, LpError
from bomtsp.instance_io import Instance
from bomtsp.lp_solver import OPTIMAL, LpProblem, solve_lp

log = logging.getLogger(__name__)


@dataclass
class EdgeVector:
    """Sparse vector indexed by undirected edges ``(u, v)`` with ``u < v``."""

    n: int
    edges: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if len(e) != len(v):
            raise ValueError("edges and values differ in length")
        e = np.sort(e, axis=1)
        if len(e) and np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not edges")
        if len(e) and (e[:, 0].min() < 0 or e[:, 1].max() >= self.n):
            raise ValueError(f"edge endpoint outside 0..{self.n - 1}")
        order = np.lexsort((e[:, 1], e[:, 0]))
        e, v = e[order], v[order]
        if len(e) > 1 and np.any(np.all(e[1:] == e[:-1], axis=1)):
            raise ValueError("duplicate edges in EdgeVector")
        if not np.isfinite(v).all():
            raise ValueError("EdgeVector values must be finite")
        self.edges, self.values = e, v

    @classmethod
    def from_dict(cls, n: int, d: dict) -> EdgeVector:
        items = sorted(((min(u, v), max(u, v)), val) for (u, v), val in d.items())
        return cls(n, [k for k, _ in items], [val for _, val in items])

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {(int(u), int(v)): float(x) for (u, v), x in zip(self.edges, self.values)}

    def __len__(self) -> int:
        return len(self.values)

    def dense(self) -> np.ndarray:
        w = np.zeros((self.n, self.n))
        w[self.edges[:, 0], self.edges[:, 1]] = self.values
        w[self.edges[:, 1], self.edges[:, 0]] = self.values
        return w

    def cost(self, costs: np.ndarray) -> float:
        return float(self.values @ costs[self.edges[:, 0], self.edges[:, 1]])

    def support(self, tol: float = 1e-9) -> EdgeVector:
        keep = self.values > tol
        return EdgeVector(self.n, self.edges[keep], self.values[keep])

    def scaled(self, factor: float) -> EdgeVector:
        return EdgeVector(self.n, self.edges.copy(), self.values * factor)

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n)
        np.add.at(d, self.edges[:, 0], self.values)
        np.add.at(d, self.edges[:, 1], self.values)
        return d

    def to_text(self) -> str:
        return "".join(f"{u} {v} {float(x)!r}\n" for (u, v), x in zip(self.edges, self.values))

    @classmethod
    def from_text(cls, text: str, n: int | None = None) -> EdgeVector:
        edges, vals = [], []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise InputError(f"line {lineno}: expected 'u v value'")
            try:
                edges.append((int(parts[0]), int(parts[1])))
                vals.append(float(parts[2]))
            except ValueError:
                raise InputError(f"line {lineno}: malformed edge value line") from None
        if n is None:
            n = 1 + max((max(e) for e in edges), default=-1)
        return cls(n, edges, vals)


def cut_value(x: EdgeVector, side) -> float:
    """Weight of the edges of ``x`` with exactly one endpoint in ``side``."""
    mask = np.zeros(x.n, dtype=bool)
    mask[list(side)] = True
    cross = mask[x.edges[:, 0]] != mask[x.edges[:, 1]]
    return float(x.values[cross].sum())


def stoer_wagner(w: np.ndarray) -> tuple[float, list[int], list[tuple[float, list[int]]]]:
    """Global minimum cut of a dense symmetric weight matrix.

    Returns ``(value, side, phase_cuts)`` where ``phase_cuts`` lists the cut of
    every phase; each is a genuine cut of the input graph.
    """
    n = len(w)
    if n < 2:
        raise ValueError("minimum cut needs at least two vertices")
    w = np.array(w, dtype=float)
    np.fill_diagonal(w, 0.0)
    groups = [[i] for i in range(n)]
    alive = np.ones(n, dtype=bool)
    best_val, best_side = np.inf, []
    phases = []
    for remaining in range(n, 1, -1):
        start = int(np.flatnonzero(alive)[0])
        conn = np.where(alive, w[start], -np.inf)
        conn[start] = -np.inf
        prev = last = start
        val = 0.0
        for _ in range(remaining - 1):
            nxt = int(np.argmax(conn))
            val = conn[nxt]
            conn += w[nxt]
            conn[nxt] = -np.inf
            prev, last = last, nxt
        phases.append((float(val), sorted(groups[last])))
        if val < best_val:
            best_val, best_side = float(val), sorted(groups[last])
        # merge last into prev
        w[prev] += w[last]
        w[:, prev] += w[:, last]
        w[prev, prev] = 0.0
        w[last] = 0.0
        w[:, last] = 0.0
        alive[last] = False
        groups[prev] += groups[last]
    return best_val, best_side, phases


def _components(x: EdgeVector, tol: float = 0.0) -> tuple[int, np.ndarray]:
    keep = x.values > tol
    e = x.edges[keep]
    g = sparse.csr_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(x.n, x.n))
    return connected_components(g, directed=False)


def violated_cuts(x: EdgeVector, tol: float = 1e-6, limit: int | None = None) -> list[list[int]]:
    """Vertex sets whose cut has ``x``-weight below ``2 - tol``.

    A disconnected support yields its components. Otherwise the phase cuts of
    Stoer-Wagner are scanned, so the global minimum cut is always included
    when it is violated.
    """
    ncomp, labels = _components(x)
    if ncomp > 1:
        sides = [np.flatnonzero(labels == k).tolist() for k in range(ncomp)]
        sides.sort(key=lambda s: (len(s), s))
        return sides[:limit] if limit else sides
    _, _, phases = stoer_wagner(x.dense())
    seen, out = set(), []
    for val, side in sorted(phases, key=lambda p: p[0]):
        if val >= 2.0 - tol:
            break
        if len(side) > x.n // 2:
            side = sorted(set(range(x.n)) - set(side))
        key = tuple(side)
        if key not in seen:
            seen.add(key)
            out.append(side)
        if limit and len(out) >= limit:
            break
    return out


def separate_subtour(x: EdgeVector, tol: float = 1e-6) -> list[int] | None:
    """A vertex set S with ``x(delta(S)) < 2 - tol``, or None."""
    if x.n < 2:
        return None
    ncomp, labels = _components(x)
    if ncomp > 1:
        return np.flatnonzero(labels == labels[0]).tolist()
    val, side, _ = stoer_wagner(x.dense())
    return side if val < 2.0 - tol else None


def _knn_edges(costs: np.ndarray, k: int) -> set[tuple[int, int]]:
    n = len(costs)
    k = min(k, n - 1)
    c = costs + np.diag(np.full(n, np.inf))
    nbrs = np.argsort(c, axis=1, kind="stable")[:, :k]
    return {(min(i, int(j)), max(i, int(j))) for i in range(n) for j in nbrs[i]}


def _nn_tour_edges(costs: np.ndarray) -> set[tuple[int, int]]:
    n = len(costs)
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    order = [0]
    for _ in range(n - 1):
        d = np.where(seen, np.inf, costs[order[-1]])
        nxt = int(np.argmin(d))
        seen[nxt] = True
        order.append(nxt)
    return {(min(a, b), max(a, b)) for a, b in zip(order, order[1:] + order[:1])}


def solve_subtour(inst: Instance | np.ndarray, tol: float = 1e-6, k: int = 10,
                  method: str = "highs", cuts_per_round: int = 50,
                  price_limit: int | None = None, stats: dict | None = None) -> EdgeVector:
    """Optimal Subtour LP solution as an EdgeVector on its support."""
    costs = inst.costs() if isinstance(inst, Instance) else np.asarray(inst, dtype=float)
    n = len(costs)
    if n < 3:
        raise InputError("the Subtour LP needs at least 3 vertices")
    cand = sorted(_knn_edges(costs, k) | _nn_tour_edges(costs))
    cand_set = set(cand)
    cuts: list[np.ndarray] = []
    price_limit = price_limit or 2 * n
    scale = max(1.0, float(np.abs(costs).max()))
    rounds = priced = 0
    while True:
        rounds += 1
        e = np.array(cand)
        res = _solve_restricted(costs, e, cuts, n, method)
        x = EdgeVector(n, e, res.x)
        found = violated_cuts(x.support(1e-12), tol, cuts_per_round)
        if found:
            for side in found:
                mask = np.zeros(n, dtype=bool)
                mask[side] = True
                cuts.append(mask)
            continue
        y = res.duals[:n]
        mu = res.duals[n:]
        rc = costs - y[:, None] - y[None, :]
        if cuts:
            M = np.array(cuts, dtype=float)
            a = mu @ M
            rc -= a[:, None] + a[None, :] - 2.0 * (M.T * mu) @ M
        iu = np.triu_indices(n, 1)
        vals = rc[iu]
        neg = np.flatnonzero(vals < -1e-9 * scale)
        neg = [i for i in neg[np.argsort(vals[neg], kind="stable")]
               if (int(iu[0][i]), int(iu[1][i])) not in cand_set][:price_limit]
        if not neg:
            break
        priced += len(neg)
        for i in neg:
            edge = (int(iu[0][i]), int(iu[1][i]))
            cand_set.add(edge)
        cand = sorted(cand_set)
    if stats is not None:
        stats.update(rounds=rounds, cuts=len(cuts), priced_edges=priced,
                     candidate_edges=len(cand), objective=x.cost(costs),
                     cut_sets=[np.flatnonzero(m).tolist() for m in cuts])
    return x.support(1e-9)


def _solve_restricted(costs, e, cuts, n, method):
    m = len(e)
    cols = np.arange(m)
    rows = [e[:, 0], e[:, 1]]
    data = [np.ones(m), np.ones(m)]
    r_idx = [rows[0], rows[1]]
    c_idx = [cols, cols]
    for k, mask in enumerate(cuts):
        cross = np.flatnonzero(mask[e[:, 0]] != mask[e[:, 1]])
        r_idx.append(np.full(len(cross), n + k))
        c_idx.append(cross)
        data.append(np.ones(len(cross)))
    A = sparse.csr_matrix((np.concatenate(data), (np.concatenate(r_idx), np.concatenate(c_idx))),
                          shape=(n + len(cuts), m))
    if method == "simplex":
        A = A.toarray()
    p = LpProblem(costs[e[:, 0], e[:, 1]], A, ["="] * n + [">="] * len(cuts),
                  np.full(n + len(cuts), 2.0), np.zeros(m), np.ones(m))
    res = solve_lp(p, method=method, tol_feas=1e-7, tol_gap=1e-6)
    if res.status != OPTIMAL:
        raise LpError(f"restricted Subtour LP ended with status {res.status}")
    return res


def scale_to_tree_polytope(x: EdgeVector, n: int | None = None) -> EdgeVector:
    """``(n-1)/n * x``, a point of the spanning tree polytope."""
    n = x.n if n is None else n
    return x.scaled((n - 1) / n)


def subtour_violation(x: EdgeVector, tol: float = 1e-6) -> float:
    """Largest violation among degree equalities and subtour cuts of ``x``."""
    deg = np.abs(x.degrees() - 2.0).max(initial=0.0)
    side = separate_subtour(x.support(0.0), tol=-np.inf)
    cut = 0.0
    if side is not None and 0 < len(side) < x.n:
        cut = max(0.0, 2.0 - cut_value(x, side))
    return float(max(deg, cut))
