"""Random spanning trees: SwapRound over explicit combinations and
maximum entropy (lambda-random) trees, plus the Best-of-Many driver."""

from __future__ import annotations

import logging
import os
from bisect import bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import accumulate

import numpy as np

from bomtsp.christofides import Tour, Tree, _costs_of, _DisjointSet, christofides_run
from bomtsp.decompose import TreeCombination
from bomtsp.errors import InputError, SamplingError
from bomtsp.subtour_lp import EdgeVector

log = logging.getLogger(__name__)


def sample_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    """Independent generator for sample ``index`` of ``stream``."""
    return np.random.default_rng([int(seed), int(stream), int(index)])


# --------------------------------------------------------------------------
# SwapRound


def _find(parent: dict, a):
    while parent.get(a, a) != a:
        nxt = parent[a]
        parent[a] = parent.get(nxt, nxt)
        a = nxt
    return a


def merge_basis(F: Tree, Fp: Tree, lam: float, lamp: float, rng: np.random.Generator) -> Tree:
    """Merge two spanning trees by random symmetric exchanges.

    Each step takes the smallest ``e`` in F - F', an ``e'`` in F' - F with
    both F - e + e' and F' - e' + e spanning trees, and with probability
    ``lam / (lam + lamp)`` moves F' to F' - e' + e, otherwise F to F - e + e'.
    Edges common to both trees are contracted so a step costs O(|F - F'|).
    """
    if F.n != Fp.n:
        raise InputError("trees span different vertex sets")
    if lam <= 0 or lamp <= 0:
        raise InputError("merge weights must be positive")
    if F.edges == Fp.edges:
        return F
    a_set, b_set = set(F.edges), set(Fp.edges)
    common = a_set & b_set
    A = sorted(a_set - b_set)
    B = sorted(b_set - a_set)
    parent: dict[int, int] = {}
    for u, v in common:
        ru, rv = _find(parent, u), _find(parent, v)
        parent[rv] = ru
    keep = list(common)
    p_keep_e = lam / (lam + lamp)
    while A:
        e = A[0]
        a, b = _find(parent, e[0]), _find(parent, e[1])
        # path in F' between a and b over the contracted graph
        adj: dict[int, list] = {}
        for f in B:
            x, y = _find(parent, f[0]), _find(parent, f[1])
            adj.setdefault(x, []).append((y, f))
            adj.setdefault(y, []).append((x, f))
        prev = {a: None}
        stack = [a]
        while stack and b not in prev:
            x = stack.pop()
            for y, f in adj.get(x, ()):
                if y not in prev:
                    prev[y] = (x, f)
                    stack.append(y)
        if b not in prev:
            raise SamplingError("no exchange path; inputs are not spanning trees")
        path = []
        x = b
        while prev[x] is not None:
            x, f = prev[x]
            path.append(f)
        # side of a in F - e
        adjA: dict[int, list] = {}
        for f in A[1:]:
            x, y = _find(parent, f[0]), _find(parent, f[1])
            adjA.setdefault(x, []).append(y)
            adjA.setdefault(y, []).append(x)
        side = {a}
        stack = [a]
        while stack:
            x = stack.pop()
            for y in adjA.get(x, ()):
                if y not in side:
                    side.add(y)
                    stack.append(y)
        for f in sorted(path):
            if (_find(parent, f[0]) in side) != (_find(parent, f[1]) in side):
                ep = f
                break
        else:
            raise SamplingError("no valid exchange pair between distinct spanning trees")
        A.pop(0)
        B.remove(ep)
        chosen = e if rng.random() < p_keep_e else ep
        x, y = _find(parent, chosen[0]), _find(parent, chosen[1])
        parent[y] = x
        keep.append(chosen)
    return Tree(F.n, keep)


def swap_round(tc: TreeCombination, rng: np.random.Generator) -> Tree:
    """Fold the trees of ``tc`` left to right with :func:`merge_basis`."""
    C = tc.trees[0]
    acc = float(tc.weights[0])
    for t, w in zip(tc.trees[1:], tc.weights[1:]):
        C = merge_basis(C, t, acc, float(w), rng)
        acc += float(w)
    return C


# --------------------------------------------------------------------------
# maximum entropy


@dataclass
class GammaVector:
    """Edge parameters on the contracted support graph.

    ``edges`` are original vertex pairs with exponent ``gamma``; ``forced``
    edges belong to every tree and have been contracted. ``nodes[v]`` is the
    contracted node of vertex ``v``.
    """

    n: int
    edges: np.ndarray
    gamma: np.ndarray
    forced: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.gamma = np.asarray(self.gamma, dtype=float)
        if not np.isfinite(self.gamma).all():
            raise ValueError("gamma values must be finite")
        ds = _DisjointSet(self.n)
        for u, v in self.forced:
            if not ds.union(u, v):
                raise ValueError("forced edges contain a cycle")
        roots = [ds.find(v) for v in range(self.n)]
        uniq = {r: k for k, r in enumerate(sorted(set(roots)))}
        self.nodes = np.array([uniq[r] for r in roots], dtype=np.int64)
        self.n_nodes = len(uniq)
        self.ends = self.nodes[self.edges] if len(self.edges) else np.zeros((0, 2), dtype=np.int64)
        if len(self.ends) and np.any(self.ends[:, 0] == self.ends[:, 1]):
            raise ValueError("an edge joins two vertices merged by forced edges")

    @property
    def lambdas(self) -> np.ndarray:
        return np.exp(self.gamma)

    def to_text(self) -> str:
        lines = [f"{u} {v} {float(g)!r}" for (u, v), g in zip(self.edges, self.gamma)]
        lines += [f"{u} {v} forced" for u, v in self.forced]
        return "\n".join([f"N {self.n}"] + lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> GammaVector:
        n, edges, gam, forced = None, [], [], []
        for lineno, line in enumerate(text.splitlines(), 1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            try:
                if parts[0] == "N":
                    n = int(parts[1])
                elif len(parts) == 3 and parts[2] == "forced":
                    forced.append((int(parts[0]), int(parts[1])))
                elif len(parts) == 3:
                    edges.append((int(parts[0]), int(parts[1])))
                    gam.append(float(parts[2]))
                else:
                    raise ValueError
            except (ValueError, IndexError):
                raise InputError(f"line {lineno}: expected 'u v gamma'") from None
        if n is None:
            raise InputError("gamma file lacks an N header")
        return cls(n, edges, gam, forced)


def _laplacian(k: int, ends: np.ndarray, w: np.ndarray) -> np.ndarray:
    L = np.zeros((k, k))
    np.add.at(L, (ends[:, 0], ends[:, 1]), -w)
    np.add.at(L, (ends[:, 1], ends[:, 0]), -w)
    L[np.diag_indices(k)] -= L.sum(axis=1)
    return L


def _grounded_inverse(k: int, ends: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Inverse of the Laplacian with node 0 grounded, padded back to k x k."""
    L = _laplacian(k, ends, w)
    M = np.zeros((k, k))
    if k > 1:
        try:
            M[1:, 1:] = np.linalg.inv(L[1:, 1:])
        except np.linalg.LinAlgError:
            raise SamplingError("weighted Laplacian is singular; support disconnected") from None
    return M


def _marginals(k: int, ends: np.ndarray, w: np.ndarray) -> np.ndarray:
    M = _grounded_inverse(k, ends, w)
    u, v = ends[:, 0], ends[:, 1]
    reff = M[u, u] + M[v, v] - 2.0 * M[u, v]
    return w * reff


def laplacian_marginals(gamma: GammaVector) -> EdgeVector:
    """Edge marginals ``q_e = lambda_e * R_eff(e)`` of the lambda-random tree.

    Forced edges are reported with marginal 1.
    """
    if len(gamma.edges) == 0 and gamma.n_nodes > 1:
        raise SamplingError("support graph is disconnected")
    q = _marginals(gamma.n_nodes, gamma.ends, gamma.lambdas) if len(gamma.edges) else np.zeros(0)
    total = q.sum()
    if abs(total - (gamma.n_nodes - 1)) > 1e-6 * max(1, gamma.n_nodes):
        raise SamplingError(f"marginals sum to {total}, expected {gamma.n_nodes - 1}; "
                            "support disconnected or Laplacian ill-conditioned")
    edges = np.vstack([gamma.edges, np.array(gamma.forced, dtype=np.int64).reshape(-1, 2)])
    vals = np.concatenate([q, np.ones(len(gamma.forced))])
    return EdgeVector(gamma.n, edges, vals)


def gamma_step(q: np.ndarray, z: np.ndarray, eps: float) -> np.ndarray:
    """Decrease applied to gamma of an edge with ``q > (1 + eps) z``."""
    zz = (1.0 + eps / 2.0) * z
    return np.log(q * (1.0 - zz) / ((1.0 - q) * zz))


def compute_gamma(z: EdgeVector, eps: float = 0.01, max_sweeps: int = 10_000,
                  forced_tol: float = 1e-9, stats: dict | None = None) -> GammaVector:
    """Fit gamma so that the lambda-random tree has ``q_e <= (1 + eps) z_e``."""
    n = z.n
    forced = [(int(u), int(v)) for (u, v), val in zip(z.edges, z.values) if val >= 1.0 - forced_tol]
    keep = (z.values > forced_tol) & (z.values < 1.0 - forced_tol)
    edges, zv = z.edges[keep], z.values[keep]
    ds = _DisjointSet(n)
    for u, v in forced:
        if not ds.union(u, v):
            raise SamplingError("edges with value 1 form a cycle; z is outside the tree polytope")
    loops = np.array([ds.find(int(u)) == ds.find(int(v)) for u, v in edges], dtype=bool)
    if loops.any():
        log.warning("dropping %d edges inside forced components", int(loops.sum()))
        edges, zv = edges[~loops], zv[~loops]
    gamma = GammaVector(n, edges, np.zeros(len(edges)), forced)
    k, ends = gamma.n_nodes, gamma.ends
    g = gamma.gamma
    worst = np.inf
    for sweep in range(max_sweeps):
        q = _marginals(k, ends, np.exp(g)) if len(g) else np.zeros(0)
        viol = q > (1.0 + eps) * zv
        worst = float((q / zv).max(initial=0.0))
        if not viol.any():
            if stats is not None:
                stats.update(sweeps=sweep, max_ratio=worst)
            return GammaVector(n, edges, g.copy(), forced)
        qv = np.minimum(q[viol], 1.0 - 1e-15)
        g[viol] -= gamma_step(qv, zv[viol], eps)
        if not np.isfinite(g).all():
            raise SamplingError("gamma diverged")
    raise SamplingError(f"gamma fit did not converge in {max_sweeps} sweeps; "
                        f"worst q/z ratio {worst:.6f}")


def _tree_from_contracted(gamma: GammaVector, picked) -> Tree:
    edges = [tuple(int(a) for a in gamma.edges[i]) for i in picked]
    return Tree(gamma.n, edges + list(gamma.forced))


class _WalkTables:
    def __init__(self, gamma: GammaVector):
        k = gamma.n_nodes
        lam = gamma.lambdas
        nbr = [[] for _ in range(k)]
        for i, (a, b) in enumerate(gamma.ends):
            nbr[a].append((int(b), i, lam[i]))
            nbr[b].append((int(a), i, lam[i]))
        self.to = [[t for t, _, _ in lst] for lst in nbr]
        self.eid = [[e for _, e, _ in lst] for lst in nbr]
        self.cum = []
        for lst in nbr:
            c = list(accumulate(w for _, _, w in lst))
            self.cum.append([x / c[-1] for x in c] if c else [])


def sample_tree_walk(gamma: GammaVector, rng: np.random.Generator, max_steps: int = 10**9,
                     start: int = 0, _tables: _WalkTables | None = None) -> Tree:
    """Lambda-random tree via the first-entrance edges of a weighted random walk."""
    k = gamma.n_nodes
    if k == 1:
        return _tree_from_contracted(gamma, [])
    tab = _tables or _WalkTables(gamma)
    if any(not c for c in tab.cum):
        raise SamplingError("support graph has an isolated vertex")
    visited = [False] * k
    cur = int(gamma.nodes[start])
    visited[cur] = True
    left = k - 1
    picked = []
    steps = 0
    chunk = max(1024, 8 * k)
    while left:
        for r in rng.random(chunk):
            j = bisect_right(tab.cum[cur], r)
            if j >= len(tab.cum[cur]):
                j = len(tab.cum[cur]) - 1
            nxt = tab.to[cur][j]
            if not visited[nxt]:
                visited[nxt] = True
                picked.append(tab.eid[cur][j])
                left -= 1
                if not left:
                    break
            cur = nxt
        steps += chunk
        if steps > max_steps:
            raise SamplingError(f"random walk exceeded {max_steps} steps")
    return _tree_from_contracted(gamma, picked)


def sample_tree_exact(gamma: GammaVector, rng: np.random.Generator) -> Tree:
    """Lambda-random tree by deciding edges in order from conditional marginals.

    The grounded Laplacian inverse is maintained by Sherman-Morrison updates:
    rejecting an edge removes its weight, accepting it makes its conductance
    infinite (contraction).
    """
    k = gamma.n_nodes
    if k == 1:
        return _tree_from_contracted(gamma, [])
    ends = gamma.ends
    lam = gamma.lambdas
    M = _grounded_inverse(k, ends, lam)
    picked = []
    for i in range(len(lam)):
        if len(picked) == k - 1:
            break
        u, v = ends[i]
        col = M[:, u] - M[:, v]
        reff = col[u] - col[v]
        p = min(1.0, max(0.0, lam[i] * reff))
        if rng.random() < p:
            picked.append(i)
            if reff <= 1e-14:
                raise SamplingError("conditional solve failed: accepted edge closes a cycle")
            M -= np.outer(col, col) / reff
        else:
            denom = 1.0 - lam[i] * reff
            if denom <= 1e-12:
                raise SamplingError("conditional solve failed: rejected a bridge edge")
            M += lam[i] * np.outer(col, col) / denom
    if len(picked) != k - 1:
        raise SamplingError("sequential sampler did not produce a spanning tree")
    return _tree_from_contracted(gamma, picked)


# --------------------------------------------------------------------------
# tree sources and the Best-of-Many driver


class SwapRoundSampler:
    def __init__(self, tc: TreeCombination):
        self.tc = tc

    def __call__(self, rng: np.random.Generator) -> Tree:
        return swap_round(self.tc, rng)


class WalkSampler:
    def __init__(self, gamma: GammaVector):
        self.gamma = gamma
        self._tables = _WalkTables(gamma)

    def __call__(self, rng: np.random.Generator) -> Tree:
        return sample_tree_walk(self.gamma, rng, _tables=self._tables)


class ExactSampler:
    def __init__(self, gamma: GammaVector):
        self.gamma = gamma

    def __call__(self, rng: np.random.Generator) -> Tree:
        return sample_tree_exact(self.gamma, rng)


@dataclass
class BomStats:
    """Per-tree outcomes of a Best-of-Many run; ``weights`` sum to one."""

    n: int
    tour_costs: np.ndarray
    tree_costs: np.ndarray
    matching_costs: np.ndarray
    odd_counts: np.ndarray
    weights: np.ndarray
    trees: list[Tree] = field(default_factory=list, repr=False)

    def _mean(self, a) -> float:
        return float(np.dot(self.weights, a))

    @property
    def best_cost(self) -> float:
        return float(self.tour_costs.min())

    @property
    def mean_tour_cost(self) -> float:
        return self._mean(self.tour_costs)

    @property
    def mean_tree_cost(self) -> float:
        return self._mean(self.tree_costs)

    @property
    def mean_matching_cost(self) -> float:
        return self._mean(self.matching_costs)

    @property
    def odd_fraction(self) -> float:
        return self._mean(self.odd_counts / self.n)

    @property
    def mean_matching_edge_cost(self) -> float:
        """Average cost of a matching edge, pooled over all matchings."""
        pairs = self.odd_counts / 2.0
        total = self._mean(pairs)
        return self._mean(self.matching_costs) / total if total > 0 else 0.0

    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(self.tour_costs)


def _run_trees(costs: np.ndarray, trees: list[Tree]):
    out = []
    for t in trees:
        r = christofides_run(costs, t)
        out.append((r.tour, r.tree_cost, r.matching.cost, r.n_odd))
    return out


def _sample_chunk(costs, sampler, seed, stream, indices):
    trees = [sampler(sample_rng(seed, stream, i)) for i in indices]
    return trees, _run_trees(costs, trees)


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def best_of_many(inst, source, samples: int = 1000, seed: int = 0, stream: int = 0,
                 workers: int | None = 1) -> tuple[Tour, BomStats]:
    """Christofides on every tree of a combination, or on ``samples`` sampled trees.

    ``source`` is a :class:`TreeCombination` (each tree used once, stats
    weighted by the convex weights) or a callable ``rng -> Tree``. Sample
    ``i`` always uses the generator ``sample_rng(seed, stream, i)``, so the
    result does not depend on ``workers``.
    """
    costs = _costs_of(inst)
    n = len(costs)
    if isinstance(source, TreeCombination):
        trees = list(source.trees)
        results = _run_trees(costs, trees)
        weights = np.asarray(source.weights, dtype=float)
    else:
        if samples < 1:
            raise InputError("samples must be at least 1")
        workers = workers or default_workers()
        if workers <= 1 or samples < 2 * workers:
            trees, results = _sample_chunk(costs, source, seed, stream, range(samples))
        else:
            bounds = np.linspace(0, samples, workers + 1).astype(int)
            chunks = [range(bounds[i], bounds[i + 1]) for i in range(workers)]
            trees, results = [], []
            with ProcessPoolExecutor(max_workers=workers) as ex:
                futs = [ex.submit(_sample_chunk, costs, source, seed, stream, ch) for ch in chunks]
                for f in futs:
                    t, r = f.result()
                    trees += t
                    results += r
        weights = np.full(len(trees), 1.0 / len(trees))
    tours = [r[0] for r in results]
    stats = BomStats(
        n=n,
        tour_costs=np.array([t.cost for t in tours]),
        tree_costs=np.array([r[1] for r in results]),
        matching_costs=np.array([r[2] for r in results]),
        odd_counts=np.array([r[3] for r in results], dtype=float),
        weights=weights,
        trees=trees,
    )
    best = tours[int(np.argmin(stats.tour_costs))]
    return best, stats
