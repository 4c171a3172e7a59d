"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from bomtsp import christofides as chr_
from bomtsp.decompose import colgen_decompose, combination_from_text, combination_to_text, split_decompose
from bomtsp.errors import InputError, NumericalError
from bomtsp.harness import ALGORITHMS, ExperimentConfig, aggregate, exact_optimum, run_experiment, svz_fixture_check
from bomtsp.instance_io import bundled, load_instance
from bomtsp.sampling import (ExactSampler, GammaVector, SwapRoundSampler, WalkSampler, best_of_many,
                             compute_gamma, default_workers, sample_rng)
from bomtsp.subtour_lp import EdgeVector, scale_to_tree_polytope, solve_subtour

log = logging.getLogger("bomtsp")

METHODS = {"std": "Std", "colgen": "ColGen", "colgen-sr": "ColGen+SR", "maxent": "MaxEnt",
           "split": "Split", "split-sr": "Split+SR"}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _instance(ref: str):
    p = Path(ref)
    if p.exists():
        return load_instance(p)
    if p.suffix or "/" in ref:
        raise InputError(f"no such instance file: {ref}")
    return load_instance(bundled(ref))


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _lp(inst, args):
    x = solve_subtour(inst, tol=args.tol)
    return x, x.cost(inst.costs())


def _write(path: Path, text: str):
    path.write_text(text)
    print(f"wrote {path}")


# --------------------------------------------------------------------------
# subcommands


def cmd_subtour(args) -> int:
    inst = _instance(args.instance)
    stats: dict = {}
    x = solve_subtour(inst, tol=args.tol, stats=stats)
    out = _out(args)
    _write(out / f"{inst.name}.lp.txt", x.to_text())
    print(f"{inst.name}: Subtour LP value {stats['objective']:.6f} "
          f"({stats['rounds']} rounds, {stats['cuts']} cuts, {len(x)} support edges)")
    return 0


def cmd_christofides(args) -> int:
    inst = _instance(args.instance)
    if args.tree:
        tc = combination_from_text(Path(args.tree).read_text())
        tree = tc.trees[0]
    else:
        tree = chr_.minimum_spanning_tree(inst, perturb_seed=args.seed)
    run = chr_.christofides_run(inst, tree)
    out = _out(args)
    _write(out / f"{inst.name}.christofides.tour", chr_.tour_to_text(run.tour))
    print(f"{inst.name}: tour {run.tour.cost:.6f}, tree {run.tree_cost:.6f}, "
          f"matching {run.matching.cost:.6f}, odd vertices {run.n_odd}")
    return 0


def cmd_decompose(args) -> int:
    inst = _instance(args.instance)
    x, lp = _lp(inst, args)
    if args.method == "colgen":
        drop, patience = (None, None) if args.no_cutoff else (args.drop, args.patience)
        tc = colgen_decompose(scale_to_tree_polytope(x), drop, patience, costs=inst.costs(), seed=args.seed)
        extra = f"master objective {tc.trace[-1]:.3g} after {len(tc.trace)} iterations"
    else:
        tc = split_decompose(x, maxK=args.max_k)
        extra = f"K = {tc.K}"
    out = _out(args)
    _write(out / f"{inst.name}.{args.method}.comb", combination_to_text(tc))
    print(f"{inst.name}: {len(tc.trees)} trees, {extra}, mean tree cost "
          f"{tc.expected_cost(inst.costs()):.6f} (LP {lp:.6f})")
    return 0


def cmd_sample(args) -> int:
    inst = _instance(args.instance)
    out = _out(args)
    if args.gamma:
        gamma = GammaVector.from_text(Path(args.gamma).read_text())
    else:
        x, _ = _lp(inst, args)
        st: dict = {}
        gamma = compute_gamma(scale_to_tree_polytope(x), args.eps, stats=st)
        _write(out / f"{inst.name}.gamma.txt", gamma.to_text())
        print(f"gamma fitted in {st['sweeps']} sweeps, max q/z {st['max_ratio']:.5f}")
    sampler = WalkSampler(gamma) if args.sampler == "walk" else ExactSampler(gamma)
    blocks = []
    for i in range(args.samples):
        t = sampler(sample_rng(args.seed, 0, i))
        blocks.append(f"TREE {1.0 / args.samples!r}\n" + "".join(f"{u} {v}\n" for u, v in t.edges))
    _write(out / f"{inst.name}.samples.comb", f"N {inst.n}\nTREES {args.samples}\n" + "".join(blocks))
    return 0


def cmd_bom(args) -> int:
    inst = _instance(args.instance)
    alg = METHODS[args.method]
    costs = inst.costs()
    t0 = time.perf_counter()
    if alg == "Std":
        run = chr_.christofides_run(inst, chr_.minimum_spanning_tree(inst, perturb_seed=args.seed))
        tour = run.tour
        summary = {"tree_cost": run.tree_cost, "matching_cost": run.matching.cost, "odd_vertices": run.n_odd}
    else:
        x, lp = _lp(inst, args)
        z = scale_to_tree_polytope(x)
        if alg in ("ColGen", "ColGen+SR"):
            src = colgen_decompose(z, args.drop, args.patience, costs=costs, seed=args.seed)
        elif alg in ("Split", "Split+SR"):
            src = split_decompose(x)
        else:
            gamma = compute_gamma(z, args.eps)
            src = WalkSampler(gamma) if args.sampler == "walk" else ExactSampler(gamma)
        if alg.endswith("+SR"):
            src = SwapRoundSampler(src)
        tour, st = best_of_many(inst, src, args.samples, args.seed, ALGORITHMS.index(alg), args.workers)
        summary = {"lp_value": lp, "trees": len(st.tour_costs), "mean_tour_cost": st.mean_tour_cost,
                   "mean_tree_cost": st.mean_tree_cost, "mean_matching_cost": st.mean_matching_cost,
                   "odd_fraction": st.odd_fraction}
    summary.update(instance=inst.name, n=inst.n, algorithm=alg, best_cost=tour.cost,
                   wall_s=time.perf_counter() - t0)
    try:
        opt = exact_optimum(inst)
        summary["optimum"] = opt
        summary["best_err_pct"] = 100.0 * (tour.cost / opt - 1.0)
    except InputError:
        pass
    out = _out(args)
    stem = f"{inst.name}.{args.method}"
    _write(out / f"{stem}.tour", chr_.tour_to_text(tour))
    _write(out / f"{stem}.stats.json", json.dumps(summary, indent=2, default=float) + "\n")
    print(f"{inst.name} {alg}: best tour {tour.cost:.6f}"
          + (f" ({summary['best_err_pct']:.2f}% above optimal)" if "best_err_pct" in summary else ""))
    return 0


_CONFIG_KEYS = {"instances", "algorithms", "samples", "seed", "workers", "drop", "patience",
                "eps", "sampler", "out", "traces"}


def read_config(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; lists are comma separated."""
    cfg: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise InputError(f"config line {lineno}: unknown key {key!r}")
        cfg[key] = value
    return cfg


def _config_from(args) -> ExperimentConfig:
    raw = read_config(Path(args.config).read_text()) if args.config else {}
    for key in ("samples", "seed", "workers", "sampler", "out"):
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = str(val)
    if args.instances:
        raw["instances"] = ",".join(args.instances)
    if args.algorithms:
        raw["algorithms"] = args.algorithms
    if "instances" not in raw:
        raise InputError("no instances given (config key 'instances' or positional arguments)")

    def split(v):
        return [s.strip() for s in v.split(",") if s.strip()]

    def opt_num(v, kind):
        return None if v.lower() in ("none", "off", "") else kind(v)

    try:
        algs = [METHODS.get(a.lower(), a) for a in split(raw.get("algorithms", ",".join(ALGORITHMS)))]
        return ExperimentConfig(
            instances=split(raw["instances"]),
            algorithms=algs,
            samples=int(raw.get("samples", 1000)),
            seed=int(raw.get("seed", 0)),
            workers=int(raw["workers"]) if "workers" in raw else default_workers(),
            drop=opt_num(raw.get("drop", "0.1"), float),
            patience=opt_num(raw.get("patience", "100"), int),
            eps=float(raw.get("eps", 0.01)),
            sampler=raw.get("sampler", "walk"),
            out=raw.get("out", "results"),
            traces=raw.get("traces", "1").lower() not in ("0", "false", "no", "off"),
        )
    except ValueError as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"bad config value: {exc}") from None


def cmd_experiment(args) -> int:
    cfg = _config_from(args)
    res = run_experiment(cfg)
    print(f"wrote {Path(cfg.out) / 'results.csv'} ({len(res.rows)} rows)")
    for (cat, alg), agg in sorted(aggregate(res).items()):
        print(f"{cat:11s} {alg:10s} best {agg['best_err_pct']:6.2f}%  avg {agg['avg_err_pct']:6.2f}%  "
              f"over {agg['instances']} instances")
    failed = [r for r in res.rows if r.error]
    return 3 if failed and len(failed) == len(res.rows) else 0


def cmd_fixtures(args) -> int:
    from bomtsp import oracles
    from bomtsp.blossom import min_weight_perfect_matching_dense
    from bomtsp.harness import held_karp
    from bomtsp.lp_solver import OPTIMAL, LpProblem, solve_lp
    from bomtsp.subtour_lp import separate_subtour, stoer_wagner

    rep = svz_fixture_check()
    print(f"1-tree fixture: LP cost {rep['lp_cost']}, tree+matching "
          f"{[t['tree_plus_matching'] for t in rep['trees']]} -> ok")
    rng = np.random.default_rng(args.seed)
    bad = 0
    for _ in range(args.trials):
        k = int(rng.choice([8, 10]))
        p = rng.random((k, 2))
        c = np.linalg.norm(p[:, None] - p[None], axis=2)
        got = sum(c[i, j] for i, j in min_weight_perfect_matching_dense(c))
        bad += abs(got - oracles.matching_brute_force(c, range(k))) > 1e-9
    print(f"blossom vs brute force: {args.trials - bad}/{args.trials} agree")
    fails = bad
    bad = 0
    for _ in range(args.trials // 4):
        n = int(rng.integers(4, 10))
        p = rng.random((n, 2))
        c = np.linalg.norm(p[:, None] - p[None], axis=2)
        bad += abs(held_karp(c)[0] - oracles.tsp_brute_force(c)) > 1e-9
    print(f"Held-Karp vs permutations: {args.trials // 4 - bad}/{args.trials // 4} agree")
    fails += bad
    bad = 0
    for _ in range(args.trials // 4):
        w = {(u, v): float(rng.integers(0, 4)) / 2 for u in range(8) for v in range(u + 1, 8)
             if rng.random() < 0.5}
        x = EdgeVector.from_dict(8, {e: v for e, v in w.items() if v > 0} or {(0, 1): 1.0})
        ref, _ = oracles.min_cut_enumeration(8, x.as_dict())
        val, _, _ = stoer_wagner(x.dense())
        side = separate_subtour(x)
        ok = abs(val - ref) < 1e-9 and ((side is None) == (ref >= 2 - 1e-6))
        bad += not ok
    print(f"min cut vs enumeration: {args.trials // 4 - bad}/{args.trials // 4} agree")
    fails += bad
    bad = 0
    for _ in range(args.trials // 4):
        nv, m = 3, 3
        A = rng.integers(-3, 4, (m, nv)).astype(float)
        b = rng.integers(0, 6, m).astype(float)
        cvec = rng.integers(-4, 5, nv).astype(float)
        ub = rng.integers(1, 4, nv).astype(float)
        ref = oracles.lp_vertex_enumeration(cvec, A, b, np.zeros(nv), ub)
        res = solve_lp(LpProblem(cvec, A, ["<="] * m, b, np.zeros(nv), ub))
        ok = (ref is None) == (res.status != OPTIMAL) and (ref is None or abs(res.objective - ref) < 1e-7)
        bad += not ok
    print(f"LP solver vs vertex enumeration: {args.trials // 4 - bad}/{args.trials // 4} agree")
    fails += bad
    if fails:
        raise NumericalError(f"{fails} oracle comparisons failed")
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bomtsp", description="Christofides and Best-of-Many Christofides for the TSP.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def common(sp, lp=True, rand=True):
        sp.add_argument("--out", default="results", help="output directory (default ./results)")
        if lp:
            sp.add_argument("--tol", type=float, default=1e-6, help="subtour cut violation tolerance")
        if rand:
            sp.add_argument("--seed", type=int, default=0, help="random seed")

    s = sub.add_parser("subtour", help="solve the Subtour LP")
    s.add_argument("instance", help="TSPLIB file, edge-list file, or bundled instance name")
    common(s, rand=False)
    s.set_defaults(func=cmd_subtour)

    s = sub.add_parser("christofides", help="Christofides from the MST or a given tree")
    s.add_argument("instance")
    s.add_argument("--tree", help="combination file whose first tree is used instead of the MST")
    common(s, lp=False)
    s.set_defaults(func=cmd_christofides)

    s = sub.add_parser("decompose", help="convex combination of spanning trees")
    s.add_argument("instance")
    s.add_argument("--method", choices=["colgen", "split"], default="colgen")
    s.add_argument("--drop", type=float, default=0.1, help="colgen cutoff: required objective drop")
    s.add_argument("--patience", type=int, default=100, help="colgen cutoff: iterations to wait")
    s.add_argument("--no-cutoff", action="store_true", help="run column generation to optimality")
    s.add_argument("--max-k", type=int, default=10_000, help="largest admissible common denominator")
    common(s)
    s.set_defaults(func=cmd_decompose)

    s = sub.add_parser("sample", help="fit maximum entropy weights and draw trees")
    s.add_argument("instance")
    s.add_argument("--samples", type=int, default=10)
    s.add_argument("--sampler", choices=["walk", "exact"], default="walk")
    s.add_argument("--eps", type=float, default=0.01)
    s.add_argument("--gamma", help="reuse a saved gamma file instead of fitting")
    common(s)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("bom", help="run one algorithm variant and keep the best tour")
    s.add_argument("instance")
    s.add_argument("--method", choices=list(METHODS), default="maxent")
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--workers", type=int, default=None, help="sampling processes (default: all cores)")
    s.add_argument("--sampler", choices=["walk", "exact"], default="walk")
    s.add_argument("--eps", type=float, default=0.01)
    s.add_argument("--drop", type=float, default=0.1)
    s.add_argument("--patience", type=int, default=100)
    common(s)
    s.set_defaults(func=cmd_bom)

    s = sub.add_parser("experiment", help="run variants over instance sets and write a CSV")
    s.add_argument("instances", nargs="*", help="instances (override the config file)")
    s.add_argument("--config", help="flat key = value config file")
    s.add_argument("--algorithms", help="comma-separated subset of " + ",".join(METHODS))
    s.add_argument("--samples", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--sampler", choices=["walk", "exact"])
    s.add_argument("--out", help="output directory (default ./results)")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("fixtures", help="1-tree fixture and brute-force oracle checks")
    s.add_argument("--trials", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_fixtures)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        for key in ("samples", "trials"):
            if getattr(args, key, None) is not None and getattr(args, key) < 1:
                raise _UsageError(f"--{key} must be at least 1")
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
