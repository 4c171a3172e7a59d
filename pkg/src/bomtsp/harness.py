"""Experiment driver: all six variants over instance sets, metrics, fixtures."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.optimize import LinearConstraint, milp
from scipy.sparse.csgraph import connected_components

from bomtsp.christofides import (christofides_run, eulerian_circuit, min_weight_perfect_matching,
                                 minimum_spanning_tree, shortcut, tour_cost)
from bomtsp.decompose import colgen_decompose, split_decompose
from bomtsp.errors import BomError, InputError, NumericalError
from bomtsp.instance_io import Instance, bundled, load_instance, triangle_violations
from bomtsp.sampling import (BomStats, ExactSampler, SwapRoundSampler, WalkSampler,
                             best_of_many, compute_gamma)
from bomtsp.subtour_lp import EdgeVector, cut_value, scale_to_tree_polytope, solve_subtour

log = logging.getLogger(__name__)

ALGORITHMS = ("Std", "ColGen", "ColGen+SR", "MaxEnt", "Split", "Split+SR")
CSV_COLUMNS = ("instance", "n", "algorithm", "best_err_pct", "avg_err_pct", "tree_cost_pct",
               "match_cost_pct", "odd_frac", "match_edge_cost_pct", "wall_s")
DEGREE_BINS = ("1", "2", "3", "4", "5", "6", ">6")

# Published reference values, used for side-by-side reporting only.
REFERENCE_ERRORS = {  # category -> algorithm -> (best %, average %)
    "TSPLIB (E)": {"Std": (9.56, 9.56), "ColGen": (4.03, 6.44), "ColGen+SR": (3.45, 6.24),
                   "MaxEnt": (3.19, 6.12), "Split": (5.23, 6.27), "Split+SR": (3.60, 6.02)},
    "TSPLIB (N)": {"Std": (5.40, 5.40), "ColGen": (2.73, 4.41), "ColGen+SR": (2.22, 4.08),
                   "MaxEnt": (2.12, 3.99), "Split": (2.92, 3.77), "Split+SR": (1.99, 3.82)},
    "Graph": {"Std": (12.43, 12.43), "ColGen": (0.57, 1.37), "ColGen+SR": (0.39, 1.29),
              "MaxEnt": (0.31, 1.23), "Split": (0.88, 1.77), "Split+SR": (0.33, 1.20)},
}
REFERENCE_TREE_MATCH = {  # category -> (Std tree %, BOM tree %, Std matching %)
    "TSPLIB (E)": (87.47, 98.57, 31.25),
    "TSPLIB (N)": (92.97, 99.36, 24.15),
    "Graph": (79.10, 98.23, 39.31),
}
REFERENCE_ODD = {"TSPLIB (E)": {"Std": (39.0, 0.89), "MaxEnt": (8.0, 1.4)},
                 "Graph": {"Std": (66.0, 1.9), "MaxEnt": (7.8, 1.7)}}
RANDOM_EUCLIDEAN_MST_DEGREES = (0.221, 0.566, 0.206, 0.007, 0.000, 0.000, 0.000)
TSPLIB_E_MST_DEGREES = (0.214, 0.597, 0.175, 0.014, 0.000, 0.000, 0.000)
RANDOM_COMPLETE_MST_DEGREES = (0.408, 0.324, 0.171, 0.068, 0.022, 0.006, 0.001)
GRAPH_MST_DEGREES = (0.529, 0.260, 0.104, 0.059, 0.015, 0.006, 0.026)


# --------------------------------------------------------------------------
# exact optima


def held_karp(costs: np.ndarray) -> tuple[float, list[int]]:
    """Optimal tour by dynamic programming over subsets (vertex 0 fixed)."""
    c = np.asarray(costs, dtype=float)
    n = len(c)
    if n <= 3:
        order = list(range(n))
        return tour_cost(order, c), order
    m = n - 1
    full = 1 << m
    dp = np.full((full, m), np.inf)
    parent = np.full((full, m), -1, dtype=np.int64)
    for j in range(m):
        dp[1 << j, j] = c[0, j + 1]
    sub = c[1:, 1:]
    popcount = np.array([bin(s).count("1") for s in range(full)])
    for k in range(2, m + 1):
        masks = np.flatnonzero(popcount == k)
        for j in range(m):
            mj = masks[(masks >> j) & 1 == 1]
            prev = mj ^ (1 << j)
            cand = dp[prev] + sub[:, j][None, :]
            best = np.argmin(cand, axis=1)
            dp[mj, j] = cand[np.arange(len(mj)), best]
            parent[mj, j] = best
    last = dp[full - 1] + c[1:, 0]
    j = int(np.argmin(last))
    total = float(last[j])
    order, mask = [], full - 1
    while j >= 0:
        order.append(j + 1)
        pj = int(parent[mask, j])
        mask ^= 1 << j
        j = pj
    return total, [0] + order[::-1]


def solve_tsp_milp(costs: np.ndarray, cut_sets=(), time_limit: float = 3600.0
                   ) -> tuple[float, list[int]]:
    """Optimal tour by integer programming with lazily added subtour cuts."""
    c = np.asarray(costs, dtype=float)
    n = len(c)
    iu, ju = np.triu_indices(n, 1)
    m = len(iu)
    deg = sparse.csr_matrix((np.ones(2 * m), (np.concatenate([iu, ju]), np.tile(np.arange(m), 2))),
                            shape=(n, m))
    cuts = [list(s) for s in cut_sets]
    while True:
        rows = [deg]
        for s in cuts:
            mask = np.zeros(n, dtype=bool)
            mask[s] = True
            rows.append(sparse.csr_matrix((mask[iu] != mask[ju]).astype(float)))
        A = sparse.vstack(rows).tocsr()
        lb = np.concatenate([np.full(n, 2.0), np.full(len(cuts), 2.0)])
        ub = np.concatenate([np.full(n, 2.0), np.full(len(cuts), np.inf)])
        res = milp(c[iu, ju], constraints=[LinearConstraint(A, lb, ub)],
                   integrality=np.ones(m), bounds=(0, 1),
                   options={"time_limit": time_limit, "mip_rel_gap": 0})
        if res.status != 0:
            raise NumericalError(f"MILP did not reach optimality: {res.message}")
        x = np.round(res.x).astype(int)
        sel = np.flatnonzero(x)
        g = sparse.csr_matrix((np.ones(len(sel)), (iu[sel], ju[sel])), shape=(n, n))
        ncomp, labels = connected_components(g, directed=False)
        if ncomp == 1:
            break
        cuts += [np.flatnonzero(labels == k).tolist() for k in range(ncomp)]
    adj = {v: [] for v in range(n)}
    for k in sel:
        adj[int(iu[k])].append(int(ju[k]))
        adj[int(ju[k])].append(int(iu[k]))
    order, prev, cur = [0], -1, 0
    for _ in range(n - 1):
        nxt = adj[cur][0] if adj[cur][0] != prev else adj[cur][1]
        order.append(nxt)
        prev, cur = cur, nxt
    return float(c[iu[sel], ju[sel]].sum()), order


def exact_optimum(inst: Instance, allow_milp: bool = False) -> float:
    """Known optimum if recorded, else DP for n <= 18 (or integer programming if allowed)."""
    if inst.known_optimum is not None:
        return float(inst.known_optimum)
    if inst.n <= 18:
        return held_karp(inst.costs())[0]
    if allow_milp:
        return solve_tsp_milp(inst.costs())[0]
    raise InputError(f"{inst.name}: n={inst.n} is too large for the DP and no optimum is known")


# --------------------------------------------------------------------------
# metrics


def metric_closure(costs: np.ndarray) -> np.ndarray:
    """All-pairs shortest path costs (Floyd-Warshall)."""
    d = np.array(costs, dtype=float)
    for k in range(len(d)):
        d = np.minimum(d, d[:, k, None] + d[None, k, :])
    return d


def metric_gap(costs: np.ndarray) -> float:
    """Largest amount by which a direct cost exceeds the shortest path; 0 when metric.

    Rounded Euclidean instances typically have a gap of 1.
    """
    return float(max(0.0, (np.asarray(costs, dtype=float) - metric_closure(costs)).max(initial=0.0)))


@dataclass
class DegreeHistogram:
    """Pooled fractions of tree vertices with degree 1..6 and above 6."""

    fractions: np.ndarray

    def as_dict(self) -> dict[str, float]:
        return dict(zip(DEGREE_BINS, map(float, self.fractions)))


def degree_histogram(trees) -> DegreeHistogram:
    trees = list(trees)
    if not trees:
        raise InputError("degree histogram of an empty tree list")
    counts = np.zeros(len(DEGREE_BINS))
    for t in trees:
        d = t.degrees()
        counts += np.bincount(np.minimum(d, 7), minlength=8)[1:8]
    return DegreeHistogram(counts / counts.sum())


@dataclass
class ResultRow:
    instance: str
    n: int
    algorithm: str
    best_err_pct: float
    avg_err_pct: float
    tree_cost_pct: float
    match_cost_pct: float
    odd_frac: float
    match_edge_cost_pct: float
    wall_s: float
    error: str | None = None

    def csv_values(self) -> list[str]:
        out = [self.instance, str(self.n), self.algorithm]
        for k in CSV_COLUMNS[3:-1]:
            out.append(f"{getattr(self, k):.6f}")
        out.append(f"{self.wall_s:.3f}")
        return out


def row_from_stats(inst: Instance, algorithm: str, stats: BomStats, opt: float, wall: float) -> ResultRow:
    pct = 100.0 / opt
    return ResultRow(
        instance=inst.name, n=inst.n, algorithm=algorithm,
        best_err_pct=(stats.best_cost - opt) * pct,
        avg_err_pct=(stats.mean_tour_cost - opt) * pct,
        tree_cost_pct=stats.mean_tree_cost * pct,
        match_cost_pct=stats.mean_matching_cost * pct,
        odd_frac=stats.odd_fraction,
        match_edge_cost_pct=stats.mean_matching_edge_cost * pct,
        wall_s=wall,
    )


def _failed_row(inst_name: str, n: int, algorithm: str, exc: Exception) -> ResultRow:
    nan = float("nan")
    return ResultRow(inst_name, n, algorithm, nan, nan, nan, nan, nan, nan, nan, error=str(exc))


# --------------------------------------------------------------------------
# experiment driver


@dataclass
class ExperimentConfig:
    instances: list[str]
    algorithms: list[str] = field(default_factory=lambda: list(ALGORITHMS))
    samples: int = 1000
    seed: int = 0
    workers: int | None = 1
    drop: float | None = 0.1
    patience: int | None = 100
    eps: float = 0.01
    sampler: str = "walk"
    out: str | None = None
    traces: bool = True

    def __post_init__(self):
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise InputError(f"unknown algorithms {bad}; choose from {list(ALGORITHMS)}")
        if self.samples < 1:
            raise InputError("samples must be at least 1")
        if self.sampler not in ("walk", "exact"):
            raise InputError("sampler must be 'walk' or 'exact'")


@dataclass
class InstanceInfo:
    name: str
    n: int
    kind: str
    optimum: float
    lp_value: float
    mst_cost: float
    metric_gap: float
    warnings: list[str] = field(default_factory=list)


@dataclass
class ExperimentResult:
    rows: list[ResultRow]
    histograms: dict[tuple[str, str], DegreeHistogram]
    info: dict[str, InstanceInfo]
    stats: dict[tuple[str, str], BomStats] = field(default_factory=dict, repr=False)
    colgen_traces: dict[str, list[float]] = field(default_factory=dict, repr=False)

    def csv_text(self) -> str:
        return rows_to_csv(self.rows)

    def row(self, instance: str, algorithm: str) -> ResultRow:
        for r in self.rows:
            if r.instance == instance and r.algorithm == algorithm:
                return r
        raise KeyError((instance, algorithm))


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.csv_values())
    return buf.getvalue()


def _resolve(ref: str) -> Instance:
    p = Path(ref)
    return load_instance(p if p.exists() else bundled(ref))


_STREAMS = {a: k for k, a in enumerate(ALGORITHMS)}


def run_instance(inst: Instance, cfg: ExperimentConfig, result: ExperimentResult) -> None:
    opt = exact_optimum(inst)
    costs = inst.costs()
    gap = metric_gap(costs)
    x = solve_subtour(inst)
    lp = x.cost(costs)
    z = scale_to_tree_polytope(x)
    mst = minimum_spanning_tree(inst, perturb_seed=cfg.seed)
    info = InstanceInfo(inst.name, inst.n, inst.kind, opt, lp, mst.cost(costs), gap)
    result.info[inst.name] = info
    if lp > opt * (1 + 1e-9) + 1e-6:
        raise NumericalError(f"{inst.name}: Subtour LP {lp} exceeds the optimum {opt}")

    cache: dict[str, tuple[object, float]] = {}

    def combination(kind: str):
        if kind not in cache:
            t0 = time.perf_counter()
            if kind == "colgen":
                tc = colgen_decompose(z, cfg.drop, cfg.patience, costs=costs, seed=cfg.seed)
                result.colgen_traces[inst.name] = tc.trace
            elif kind == "split":
                tc = split_decompose(x)
            else:
                tc = compute_gamma(z, cfg.eps)
            cache[kind] = (tc, time.perf_counter() - t0)
        return cache[kind]

    for alg in cfg.algorithms:
        try:
            t0 = time.perf_counter()
            pre = 0.0
            if alg == "Std":
                r = christofides_run(inst, mst)
                stats = BomStats(inst.n, np.array([r.tour.cost]), np.array([r.tree_cost]),
                                 np.array([r.matching.cost]), np.array([float(r.n_odd)]),
                                 np.array([1.0]), [mst])
            elif alg in ("ColGen", "Split"):
                tc, pre = combination("colgen" if alg == "ColGen" else "split")
                _, stats = best_of_many(inst, tc)
            elif alg in ("ColGen+SR", "Split+SR"):
                tc, pre = combination("colgen" if alg == "ColGen+SR" else "split")
                _, stats = best_of_many(inst, SwapRoundSampler(tc), cfg.samples, cfg.seed,
                                        _STREAMS[alg], cfg.workers)
            else:
                gamma, pre = combination("gamma")
                sampler = WalkSampler(gamma) if cfg.sampler == "walk" else ExactSampler(gamma)
                _, stats = best_of_many(inst, sampler, cfg.samples, cfg.seed, _STREAMS[alg], cfg.workers)
            wall = time.perf_counter() - t0 + pre
            _check_row_invariants(inst, alg, stats, opt, lp, gap, info)
            result.rows.append(row_from_stats(inst, alg, stats, opt, wall))
            result.histograms[(inst.name, alg)] = degree_histogram(stats.trees)
            result.stats[(inst.name, alg)] = stats
        except BomError as exc:
            log.error("%s / %s failed: %s", inst.name, alg, exc)
            result.rows.append(_failed_row(inst.name, inst.n, alg, exc))


def _check_row_invariants(inst, alg, stats: BomStats, opt, lp, gap, info: InstanceInfo):
    """Sanity bounds that hold for any cost table once slackened by the metric gap.

    With d the shortest-path closure and gap = max(c - d): every tour edge
    costs at most gap more than the walk segment it replaces, and the
    matching bound c(M) <= LP/2 holds for d, so each pair adds at most gap.
    """
    tol = 1e-6 * max(1.0, opt)
    if stats.best_cost < opt - tol:
        raise NumericalError(f"{inst.name}/{alg}: tour {stats.best_cost} beats the optimum {opt}")
    slack = stats.odd_counts / 2.0 * gap
    worst = int(np.argmax(stats.matching_costs - slack))
    if stats.matching_costs[worst] > 0.5 * lp + slack[worst] + 1e-6 * max(1.0, lp):
        raise NumericalError(f"{inst.name}/{alg}: matching cost {stats.matching_costs[worst]} "
                             f"exceeds half the LP {lp} (metric gap {gap})")
    if np.any(stats.tour_costs > stats.tree_costs + stats.matching_costs + inst.n * gap + tol):
        raise NumericalError(f"{inst.name}/{alg}: tour costs more than tree plus matching")
    if alg != "Std" and stats.mean_tree_cost > lp + tol:
        msg = f"{alg}: mean tree cost {stats.mean_tree_cost:.6g} above LP {lp:.6g}"
        info.warnings.append(msg)
        log.warning("%s: %s", inst.name, msg)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """One row per (instance, algorithm); writes CSV and traces when ``cfg.out`` is set."""
    result = ExperimentResult([], {}, {})
    for ref in cfg.instances:
        try:
            inst = _resolve(ref)
        except BomError as exc:
            log.error("cannot load %s: %s", ref, exc)
            for alg in cfg.algorithms:
                result.rows.append(_failed_row(ref, 0, alg, exc))
            continue
        t0 = time.perf_counter()
        try:
            run_instance(inst, cfg, result)
        except BomError as exc:
            log.error("%s failed: %s", inst.name, exc)
            done = {r.algorithm for r in result.rows if r.instance == inst.name}
            for alg in cfg.algorithms:
                if alg not in done:
                    result.rows.append(_failed_row(inst.name, inst.n, alg, exc))
        log.info("%s (n=%d) done in %.1fs", inst.name, inst.n, time.perf_counter() - t0)
    if cfg.out:
        write_outputs(result, cfg)
    return result


def write_outputs(result: ExperimentResult, cfg: ExperimentConfig) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(result.csv_text())
    with open(out / "degree_histograms.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instance", "algorithm", *DEGREE_BINS])
        for (name, alg), h in result.histograms.items():
            w.writerow([name, alg, *(f"{v:.6f}" for v in h.fractions)])
    errors = [r for r in result.rows if r.error]
    if errors:
        (out / "errors.txt").write_text("".join(f"{r.instance}\t{r.algorithm}\t{r.error}\n" for r in errors))
    if cfg.traces:
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for (name, alg), st in result.stats.items():
            if alg in ("ColGen+SR", "MaxEnt", "Split+SR"):
                fname = f"{name}_{alg.replace('+', '_')}_best_so_far.txt"
                lines = (f"{i + 1} {float(c)!r}\n" for i, c in enumerate(st.best_so_far()))
                (tdir / fname).write_text("".join(lines))
        for name, trace in result.colgen_traces.items():
            lines = (f"{i} {float(v)!r}\n" for i, v in enumerate(trace))
            (tdir / f"{name}_colgen_objective.txt").write_text("".join(lines))


def category_of(info: InstanceInfo) -> str:
    if info.kind == "graph":
        return "Graph"
    return "TSPLIB (E)" if info.kind == "euclid2d" else "TSPLIB (N)"


def aggregate(result: ExperimentResult) -> dict[tuple[str, str], dict[str, float]]:
    """Unweighted means over instances per (category, algorithm)."""
    groups: dict[tuple[str, str], list[ResultRow]] = {}
    for r in result.rows:
        if r.error or r.instance not in result.info:
            continue
        groups.setdefault((category_of(result.info[r.instance]), r.algorithm), []).append(r)
    out = {}
    for key, rows in groups.items():
        out[key] = {k: float(np.mean([getattr(r, k) for r in rows])) for k in CSV_COLUMNS[3:]}
        out[key]["instances"] = len(rows)
    return out


# --------------------------------------------------------------------------
# the six-vertex 1-tree fixture

FIXTURE_VERTICES = ("s", "a", "b", "c", "d", "e")
FIXTURE_HALF_EDGES = (("s", "a", 1), ("s", "b", 0), ("a", "b", 1),
                      ("c", "d", 1), ("c", "e", 1), ("d", "e", 0))
FIXTURE_ONE_EDGES = (("s", "d", 0), ("a", "c", 2), ("b", "e", 0))
FIXTURE_ONE_TREES = (
    (("s", "a"), ("s", "d"), ("a", "b"), ("a", "c"), ("b", "e"), ("d", "e")),
    (("s", "b"), ("s", "d"), ("a", "c"), ("b", "e"), ("c", "d"), ("c", "e")),
)


def fixture_instance() -> tuple[np.ndarray, EdgeVector]:
    """Metric completion (shortest paths) of the fixture and its LP vector."""
    idx = {v: k for k, v in enumerate(FIXTURE_VERTICES)}
    n = len(idx)
    w = np.full((n, n), np.inf)
    np.fill_diagonal(w, 0.0)
    vals = {}
    for edges, val in ((FIXTURE_HALF_EDGES, 0.5), (FIXTURE_ONE_EDGES, 1.0)):
        for u, v, c in edges:
            w[idx[u], idx[v]] = w[idx[v], idx[u]] = c
            vals[(idx[u], idx[v])] = val
    # csgraph would read the zero-cost edges as absent
    return metric_closure(w), EdgeVector.from_dict(n, vals)


def _perfect_matchings(verts):
    if not verts:
        yield []
        return
    a, rest = verts[0], verts[1:]
    for i, b in enumerate(rest):
        for m in _perfect_matchings(rest[:i] + rest[i + 1:]):
            yield [(a, b)] + m


def svz_fixture_check() -> dict:
    """Exhaustive check of the fixture; raises NumericalError on any failure."""
    costs, x = fixture_instance()
    idx = {v: k for k, v in enumerate(FIXTURE_VERTICES)}
    n = len(idx)
    report: dict = {}
    report["triangle_violations"] = triangle_violations(costs)
    deg = x.degrees()
    min_cut = min(cut_value(x, s) for r in range(1, n) for s in itertools.combinations(range(n), r))
    report["lp_feasible"] = bool(np.allclose(deg, 2.0) and min_cut >= 2.0 - 1e-12)
    report["lp_cost"] = x.cost(costs)
    report["trees"] = []
    for edges in FIXTURE_ONE_TREES:
        e = [(idx[u], idx[v]) for u, v in edges]
        d = np.zeros(n, dtype=int)
        for u, v in e:
            d[u] += 1
            d[v] += 1
        odd = np.flatnonzero(d % 2).tolist()
        matchings = [sum(costs[u, v] for u, v in m) for m in _perfect_matchings(odd)]
        tree_cost = float(sum(costs[u, v] for u, v in e))
        best_m = min(matchings)
        m = min_weight_perfect_matching(costs, odd)
        walk = eulerian_circuit(e + list(m.pairs), start=0)
        report["trees"].append({
            "cost": tree_cost,
            "odd": [FIXTURE_VERTICES[v] for v in odd],
            "min_matching": float(best_m),
            "n_matchings": len(matchings),
            "tree_plus_matching": float(tree_cost + best_m),
            "shortcut_tour": shortcut(walk, costs).cost,
        })
    ok = (report["triangle_violations"] == 0 and report["lp_feasible"]
          and abs(report["lp_cost"] - 4.0) < 1e-12
          and all(abs(t["cost"] - 4.0) < 1e-12 for t in report["trees"])
          and all(t["min_matching"] >= 2.0 - 1e-12 for t in report["trees"])
          and all(t["tree_plus_matching"] >= 1.5 * report["lp_cost"] - 1e-12 for t in report["trees"]))
    report["ok"] = bool(ok)
    if not ok:
        raise NumericalError(f"1-tree fixture check failed: {report}")
    return report
